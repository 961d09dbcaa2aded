#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "coad/embed.hpp"

namespace coad {

enum class Metric { euclidean, cosine };
enum class Method { boxplot, cluster };

std::string to_string(Metric m);
std::string to_string(Method m);
Metric parse_metric(std::string_view s);
Method parse_method(std::string_view s);

/// Symmetric, zero-diagonal, non-negative.
struct DistanceMatrix {
    Mat d;
    Metric metric = Metric::euclidean;

    [[nodiscard]] int size() const noexcept { return d.rows; }
};

DistanceMatrix pairwise_distances(std::span<const ObjectFeature> features, Metric metric = Metric::euclidean);

/// Type-7 quantile: linear interpolation between order statistics of `sorted`.
double quantile_linear(std::span<const double> sorted, double q);

struct BoxplotStats {
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double upper_fence = 0.0;  // q3 + 1.5 iqr
};

BoxplotStats boxplot_stats(std::span<const double> values);

inline constexpr std::string_view kWarnDegenerateRow = "degenerate_row";

struct AnomalyVerdict {
    Method method = Method::boxplot;
    bool flagged = false;
    std::optional<int> anomaly_index;
    /// Row sums of the distance matrix.
    std::vector<double> row_scores;
    /// argmax of row_scores (lowest index on ties), reported even when not flagged.
    int argmax_index = 0;
    std::optional<BoxplotStats> boxplot;
    std::vector<int> cluster_sizes;
    std::vector<int> cluster_labels;
    std::string warning;
};

/// Row-sum scores, IQR fence; flags the argmax when it lies strictly above the
/// fence. Rows with fewer than 4 objects are never flagged.
AnomalyVerdict boxplot_outlier(const DistanceMatrix& d);
/// Same rule on precomputed row scores.
AnomalyVerdict boxplot_outlier(std::vector<double> row_scores);

/// Bottom-up Ward agglomeration of the rows of `points` down to `k` clusters.
/// Labels are numbered by each cluster's lowest member index.
std::vector<int> ward_clusters(const Mat& points, int k = 2);

/// Two-cluster split minimising the total within-cluster sum of squares,
/// seeded by ward_clusters(points, 2). Rows of up to 16 points are searched
/// exhaustively; longer rows are refined by single-point moves.
std::vector<int> ward_two_partition(const Mat& points);

/// ward_two_partition split; flags the object that ends up alone.
AnomalyVerdict cluster_outlier(std::span<const ObjectFeature> features);

/// extract_row_features followed by the chosen detector.
AnomalyVerdict detect(std::span<const Image> crops, const Model& model, FeatureSelection selection, Method method,
                      Metric metric = Metric::euclidean);

/// Verdict on already-extracted features.
AnomalyVerdict detect_features(std::span<const ObjectFeature> features, Method method,
                               Metric metric = Metric::euclidean);

/// {row_id, method, selection, flagged, anomaly_index, scores[], fence | cluster_sizes, ...}
nlohmann::ordered_json verdict_to_json(const AnomalyVerdict& v, const std::string& row_id,
                                       const std::string& selection);

}  // namespace coad
