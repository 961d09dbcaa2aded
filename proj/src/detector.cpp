#include "coad/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "coad/kernels.hpp"

namespace coad {

std::string to_string(Metric m)
{
    return m == Metric::euclidean ? "euclidean" : "cosine";
}

std::string to_string(Method m)
{
    return m == Method::boxplot ? "boxplot" : "cluster";
}

Metric parse_metric(std::string_view s)
{
    if (s == "euclidean") {
        return Metric::euclidean;
    }
    if (s == "cosine") {
        return Metric::cosine;
    }
    throw ConfigError("unknown metric '" + std::string(s) + "' (expected euclidean or cosine)");
}

Method parse_method(std::string_view s)
{
    if (s == "boxplot") {
        return Method::boxplot;
    }
    if (s == "cluster") {
        return Method::cluster;
    }
    throw ConfigError("unknown method '" + std::string(s) + "' (expected boxplot or cluster)");
}

namespace {

Mat feature_matrix(std::span<const ObjectFeature> features)
{
    if (features.empty()) {
        return {};
    }
    const std::size_t dim = features[0].vector.size();
    Mat x(static_cast<int>(features.size()), static_cast<int>(dim));
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].vector.size() != dim) {
            throw ShapeError("feature " + std::to_string(i) + " has dimension " +
                             std::to_string(features[i].vector.size()) + ", expected " + std::to_string(dim));
        }
        std::copy(features[i].vector.begin(), features[i].vector.end(), x.row(static_cast<int>(i)).begin());
    }
    return x;
}

std::vector<double> row_sums(const Mat& d)
{
    std::vector<double> s(static_cast<std::size_t>(d.rows), 0.0);
    for (int i = 0; i < d.rows; ++i) {
        for (int j = 0; j < d.cols; ++j) {
            s[i] += d(i, j);
        }
    }
    return s;
}

int argmax_lowest(const std::vector<double>& v)
{
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

}  // namespace

DistanceMatrix pairwise_distances(std::span<const ObjectFeature> features, Metric metric)
{
    if (features.size() < 2) {
        throw ShapeError("pairwise_distances: need at least 2 features");
    }
    const Mat x = feature_matrix(features);
    DistanceMatrix out{Mat(x.rows, x.rows), metric};
    if (metric == Metric::euclidean) {
        kernels::pairwise_euclidean(x, out.d);
        return out;
    }
    std::vector<double> norms(static_cast<std::size_t>(x.rows));
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (double v : x.row(i)) {
            s += v * v;
        }
        norms[i] = std::sqrt(s);
    }
    for (int i = 0; i < x.rows; ++i) {
        for (int j = i + 1; j < x.rows; ++j) {
            double dot = 0.0;
            for (int k = 0; k < x.cols; ++k) {
                dot += x(i, k) * x(j, k);
            }
            const double denom = norms[i] * norms[j];
            // A zero vector is treated as orthogonal to everything.
            const double sim = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
            out.d(i, j) = out.d(j, i) = std::max(0.0, 1.0 - sim);
        }
    }
    return out;
}

double quantile_linear(std::span<const double> sorted, double q)
{
    if (sorted.empty()) {
        throw ShapeError("quantile of an empty sample");
    }
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxplotStats boxplot_stats(std::span<const double> values)
{
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    BoxplotStats b;
    b.q1 = quantile_linear(s, 0.25);
    b.q3 = quantile_linear(s, 0.75);
    b.iqr = b.q3 - b.q1;
    b.upper_fence = b.q3 + 1.5 * b.iqr;
    return b;
}

AnomalyVerdict boxplot_outlier(const DistanceMatrix& d)
{
    return boxplot_outlier(row_sums(d.d));
}

AnomalyVerdict boxplot_outlier(std::vector<double> row_scores)
{
    AnomalyVerdict v;
    v.method = Method::boxplot;
    v.row_scores = std::move(row_scores);
    if (v.row_scores.empty()) {
        v.warning = kWarnDegenerateRow;
        return v;
    }
    v.argmax_index = argmax_lowest(v.row_scores);
    if (v.row_scores.size() < 4) {
        v.warning = kWarnDegenerateRow;
        return v;
    }
    v.boxplot = boxplot_stats(v.row_scores);
    if (v.row_scores[v.argmax_index] > v.boxplot->upper_fence) {
        v.flagged = true;
        v.anomaly_index = v.argmax_index;
    }
    return v;
}

std::vector<int> ward_clusters(const Mat& points, int k)
{
    const int n = points.rows;
    if (k <= 0 || k > n) {
        throw ShapeError("ward_clusters: cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) +
                         " points");
    }
    struct Cluster {
        std::vector<int> members;
        std::vector<double> centroid;
    };
    std::vector<Cluster> clusters;
    for (int i = 0; i < n; ++i) {
        auto r = points.row(i);
        clusters.push_back({{i}, std::vector<double>(r.begin(), r.end())});
    }
    while (static_cast<int>(clusters.size()) > k) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0;
        std::size_t bj = 1;
        for (std::size_t i = 0; i < clusters.size(); ++i) {
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                const double na = static_cast<double>(clusters[i].members.size());
                const double nb = static_cast<double>(clusters[j].members.size());
                double d2 = 0.0;
                for (std::size_t t = 0; t < clusters[i].centroid.size(); ++t) {
                    const double diff = clusters[i].centroid[t] - clusters[j].centroid[t];
                    d2 += diff * diff;
                }
                // Increase of the total within-cluster sum of squares caused by the merge.
                const double cost = na * nb / (na + nb) * d2;
                if (cost < best) {
                    best = cost;
                    bi = i;
                    bj = j;
                }
            }
        }
        Cluster& a = clusters[bi];
        Cluster& b = clusters[bj];
        const double na = static_cast<double>(a.members.size());
        const double nb = static_cast<double>(b.members.size());
        for (std::size_t t = 0; t < a.centroid.size(); ++t) {
            a.centroid[t] = (na * a.centroid[t] + nb * b.centroid[t]) / (na + nb);
        }
        a.members.insert(a.members.end(), b.members.begin(), b.members.end());
        std::sort(a.members.begin(), a.members.end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    std::sort(clusters.begin(), clusters.end(),
              [](const Cluster& x, const Cluster& y) { return x.members.front() < y.members.front(); });
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (int m : clusters[c].members) {
            labels[m] = static_cast<int>(c);
        }
    }
    return labels;
}

namespace {

constexpr int kExactPartitionLimit = 16;

struct TwoGroups {
    std::vector<double> sum[2];
    int count[2] = {0, 0};

    TwoGroups(const Mat& x, const std::vector<int>& labels)
    {
        sum[0].assign(static_cast<std::size_t>(x.cols), 0.0);
        sum[1].assign(static_cast<std::size_t>(x.cols), 0.0);
        for (int i = 0; i < x.rows; ++i) {
            move_in(x, i, labels[i]);
        }
    }

    void move_in(const Mat& x, int i, int g)
    {
        auto r = x.row(i);
        for (std::size_t t = 0; t < r.size(); ++t) {
            sum[g][t] += r[t];
        }
        ++count[g];
    }
    void move_out(const Mat& x, int i, int g)
    {
        auto r = x.row(i);
        for (std::size_t t = 0; t < r.size(); ++t) {
            sum[g][t] -= r[t];
        }
        --count[g];
    }

    // Total SSE = sum ||x||^2 - gain(); a larger gain is a better split.
    [[nodiscard]] double gain() const
    {
        double g = 0.0;
        for (int c = 0; c < 2; ++c) {
            if (count[c] == 0) {
                return -std::numeric_limits<double>::infinity();
            }
            double s2 = 0.0;
            for (double v : sum[c]) {
                s2 += v * v;
            }
            g += s2 / count[c];
        }
        return g;
    }
};

bool strictly_better(double candidate, double incumbent)
{
    return candidate > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

std::vector<int> relabel_by_first_member(std::vector<int> labels)
{
    if (!labels.empty() && labels[0] != 0) {
        for (int& l : labels) {
            l = 1 - l;
        }
    }
    return labels;
}

}  // namespace

std::vector<int> ward_two_partition(const Mat& points)
{
    const int n = points.rows;
    std::vector<int> best = ward_clusters(points, 2);
    if (n <= 2) {
        return best;
    }
    TwoGroups groups(points, best);
    double best_gain = groups.gain();

    if (n <= kExactPartitionLimit) {
        // Gray-code walk over every split with point 0 fixed in group 0.
        std::vector<int> labels(static_cast<std::size_t>(n), 0);
        TwoGroups walk(points, labels);
        const unsigned total = 1u << (n - 1);
        for (unsigned step = 1; step < total; ++step) {
            const int i = std::countr_zero(step) + 1;
            walk.move_out(points, i, labels[i]);
            labels[i] = 1 - labels[i];
            walk.move_in(points, i, labels[i]);
            const double g = walk.gain();
            if (strictly_better(g, best_gain)) {
                best_gain = g;
                best = labels;
            }
        }
        return relabel_by_first_member(best);
    }

    // Larger rows: single-point moves from the Ward split until none helps.
    for (bool improved = true; improved;) {
        improved = false;
        for (int i = 0; i < n; ++i) {
            const int from = best[i];
            if (groups.count[from] == 1) {
                continue;
            }
            groups.move_out(points, i, from);
            groups.move_in(points, i, 1 - from);
            const double g = groups.gain();
            if (strictly_better(g, best_gain)) {
                best_gain = g;
                best[i] = 1 - from;
                improved = true;
            } else {
                groups.move_out(points, i, 1 - from);
                groups.move_in(points, i, from);
            }
        }
    }
    return relabel_by_first_member(best);
}

AnomalyVerdict cluster_outlier(std::span<const ObjectFeature> features)
{
    AnomalyVerdict v;
    v.method = Method::cluster;
    if (features.size() >= 2) {
        v.row_scores = row_sums(pairwise_distances(features, Metric::euclidean).d);
        v.argmax_index = argmax_lowest(v.row_scores);
    }
    if (features.size() < 3) {
        v.warning = kWarnDegenerateRow;
        return v;
    }
    v.cluster_labels = ward_two_partition(feature_matrix(features));
    v.cluster_sizes.assign(2, 0);
    for (int l : v.cluster_labels) {
        ++v.cluster_sizes[l];
    }
    const int minority = v.cluster_sizes[0] <= v.cluster_sizes[1] ? 0 : 1;
    if (v.cluster_sizes[minority] == 1 && v.cluster_sizes[1 - minority] >= 2) {
        v.flagged = true;
        for (std::size_t i = 0; i < v.cluster_labels.size(); ++i) {
            if (v.cluster_labels[i] == minority) {
                v.anomaly_index = static_cast<int>(i);
            }
        }
    }
    return v;
}

AnomalyVerdict detect_features(std::span<const ObjectFeature> features, Method method, Metric metric)
{
    if (method == Method::boxplot) {
        return boxplot_outlier(pairwise_distances(features, metric));
    }
    return cluster_outlier(features);
}

AnomalyVerdict detect(std::span<const Image> crops, const Model& model, FeatureSelection selection, Method method,
                      Metric metric)
{
    return detect_features(extract_row_features(crops, model, selection), method, metric);
}

nlohmann::ordered_json verdict_to_json(const AnomalyVerdict& v, const std::string& row_id,
                                       const std::string& selection)
{
    nlohmann::ordered_json j;
    j["row_id"] = row_id;
    j["method"] = to_string(v.method);
    j["selection"] = selection;
    j["flagged"] = v.flagged;
    j["anomaly_index"] = v.anomaly_index ? nlohmann::ordered_json(*v.anomaly_index) : nlohmann::ordered_json(nullptr);
    j["argmax_index"] = v.argmax_index;
    j["scores"] = v.row_scores;
    if (v.boxplot) {
        j["q1"] = v.boxplot->q1;
        j["q3"] = v.boxplot->q3;
        j["iqr"] = v.boxplot->iqr;
        j["fence"] = v.boxplot->upper_fence;
    }
    if (v.method == Method::cluster) {
        j["cluster_sizes"] = v.cluster_sizes;
        j["cluster_labels"] = v.cluster_labels;
    }
    if (!v.warning.empty()) {
        j["warning"] = v.warning;
    }
    return j;
}

}  // namespace coad
