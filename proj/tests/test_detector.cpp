#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "coad/detector.hpp"
#include "oracles.hpp"

using namespace coad;

namespace {

std::vector<ObjectFeature> feats(const std::vector<std::vector<double>>& pts)
{
    std::vector<ObjectFeature> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out.push_back({"o" + std::to_string(i), pts[i]});
    }
    return out;
}

std::vector<std::vector<double>> random_points(int n, int dim, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> p(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& v : p) {
        for (double& x : v) {
            x = g(rng);
        }
    }
    return p;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b)
{
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == a[0]) != (b[i] == b[0])) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("pairwise distances")
{
    SUBCASE("identical vectors are at distance zero")
    {
        const auto d = pairwise_distances(feats({{0.6, 0.8}, {0.6, 0.8}}));
        CHECK(d.d(0, 1) == 0.0);
    }
    SUBCASE("orthogonal unit vectors are sqrt(2) apart")
    {
        const auto d = pairwise_distances(feats({{1, 0}, {0, 1}}));
        CHECK(d.d(0, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
        const auto c = pairwise_distances(feats({{1, 0}, {0, 1}}), Metric::cosine);
        CHECK(c.d(0, 1) == doctest::Approx(1.0));
    }
    SUBCASE("five features give a symmetric zero-diagonal matrix")
    {
        std::mt19937_64 rng(1);
        const auto d = pairwise_distances(feats(random_points(5, 7, rng)));
        REQUIRE(d.size() == 5);
        for (int i = 0; i < 5; ++i) {
            CHECK(d.d(i, i) == 0.0);
            for (int j = 0; j < 5; ++j) {
                CHECK(std::abs(d.d(i, j) - d.d(j, i)) < 1e-9);
                CHECK(d.d(i, j) >= 0.0);
            }
        }
    }
    SUBCASE("errors")
    {
        CHECK_THROWS_AS(pairwise_distances(feats({{1, 0}, {1, 0, 0}})), ShapeError);
        CHECK_THROWS_AS(pairwise_distances(feats({{1, 0}})), ShapeError);
    }
}

TEST_CASE("boxplot rule on a hand-computed row")
{
    const auto v = boxplot_outlier(std::vector<double>{0.10, 0.12, 0.11, 0.95});
    REQUIRE(v.boxplot);
    CHECK(v.boxplot->q1 == doctest::Approx(0.1075).epsilon(1e-12));
    CHECK(v.boxplot->q3 == doctest::Approx(0.3275).epsilon(1e-12));
    CHECK(v.boxplot->upper_fence == doctest::Approx(0.6575).epsilon(1e-12));
    CHECK(v.flagged);
    CHECK(v.anomaly_index == 3);
    CHECK(v.warning.empty());
}

TEST_CASE("boxplot rule edge cases")
{
    SUBCASE("all-equal features are not flagged")
    {
        std::vector<std::vector<double>> same(6, {0.0, 1.0});
        const auto v = boxplot_outlier(pairwise_distances(feats(same)));
        REQUIRE(v.boxplot);
        CHECK(v.boxplot->iqr == 0.0);
        CHECK_FALSE(v.flagged);
        CHECK_FALSE(v.anomaly_index);
    }
    SUBCASE("fewer than four objects give a degenerate-row warning")
    {
        const auto v = boxplot_outlier(pairwise_distances(feats({{0, 0}, {0, 1}, {9, 9}})));
        CHECK_FALSE(v.flagged);
        CHECK(v.warning == kWarnDegenerateRow);
        CHECK(v.row_scores.size() == 3);
    }
    SUBCASE("ties resolve to the lowest index")
    {
        const auto v = boxplot_outlier(std::vector<double>{1, 1, 1, 1, 9, 9});
        CHECK(v.argmax_index == 4);
    }
    SUBCASE("a score equal to the fence is not an outlier")
    {
        // q1 = 1, q3 = 2, fence = 3.5
        const auto v = boxplot_outlier(std::vector<double>{1, 1, 2, 2, 3.5});
        REQUIRE(v.boxplot);
        CHECK(v.boxplot->upper_fence == 3.5);
        CHECK_FALSE(v.flagged);
    }
}

TEST_CASE("property: quartiles match the sorted-interpolation oracle")
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> len(1, 40);
    std::exponential_distribution<double> val(1.0);
    for (int t = 0; t < 300; ++t) {
        std::vector<double> v(static_cast<std::size_t>(len(rng)));
        for (double& x : v) {
            x = val(rng);
        }
        const auto b = boxplot_stats(v);
        CHECK(std::abs(b.q1 - oracle::sorted_quantile(v, 0.25)) < 1e-9);
        CHECK(std::abs(b.q3 - oracle::sorted_quantile(v, 0.75)) < 1e-9);
    }
}

TEST_CASE("property: boxplot decision is scale invariant and permutation equivariant")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    int flagged = 0;
    for (int t = 0; t < 200; ++t) {
        auto pts = random_points(8, 5, rng);
        if (t % 2 == 0) {
            for (double& x : pts[static_cast<std::size_t>(t % 8)]) {
                x += 6.0;
            }
        }
        const auto d = pairwise_distances(feats(pts));
        const auto base = boxplot_outlier(d);
        flagged += base.flagged ? 1 : 0;

        DistanceMatrix scaled = d;
        const double a = scale(rng);
        for (double& x : scaled.d.data) {
            x *= a;
        }
        const auto vs = boxplot_outlier(scaled);
        CHECK(vs.flagged == base.flagged);
        CHECK(vs.anomaly_index == base.anomaly_index);

        std::vector<int> perm(8);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::vector<double>> permuted(8);
        for (int i = 0; i < 8; ++i) {
            permuted[static_cast<std::size_t>(i)] = pts[static_cast<std::size_t>(perm[i])];
        }
        const auto vp = boxplot_outlier(pairwise_distances(feats(permuted)));
        CHECK(vp.flagged == base.flagged);
        if (base.flagged) {
            REQUIRE(vp.anomaly_index);
            CHECK(perm[static_cast<std::size_t>(*vp.anomaly_index)] == *base.anomaly_index);
        }
    }
    CHECK(flagged >= 90);
}

TEST_CASE("cluster rule examples")
{
    SUBCASE("far point forms the singleton")
    {
        const auto v = cluster_outlier(feats({{0, 0}, {0.1, 0}, {0, 0.1}, {5, 5}}));
        CHECK(v.flagged);
        CHECK(v.anomaly_index == 3);
        CHECK(v.cluster_sizes == std::vector<int>{3, 1});
        CHECK(v.cluster_labels == std::vector<int>{0, 0, 0, 1});
    }
    SUBCASE("two identical pairs split evenly")
    {
        const auto v = cluster_outlier(feats({{0, 0}, {1, 1}, {0, 0}, {1, 1}}));
        CHECK_FALSE(v.flagged);
        CHECK(v.cluster_sizes == std::vector<int>{2, 2});
    }
    SUBCASE("three points with one distant")
    {
        const auto v = cluster_outlier(feats({{0, 0}, {3, 3}, {0.1, 0}}));
        CHECK(v.flagged);
        CHECK(v.anomaly_index == 1);
    }
    SUBCASE("fewer than three objects")
    {
        const auto v = cluster_outlier(feats({{0, 0}, {3, 3}}));
        CHECK_FALSE(v.flagged);
        CHECK(v.warning == kWarnDegenerateRow);
    }
}

TEST_CASE("greedy agglomeration versus the exact two-way split")
{
    // Greedy Ward ends at {0,8,14},{22,24} (SSE 100.67); the best split is
    // {0,8},{14,22,24} (SSE 88), found by enumeration.
    Mat x(5, 1);
    x.data = {0, 8, 14, 22, 24};
    CHECK(ward_clusters(x, 2) == std::vector<int>{0, 0, 0, 1, 1});
    CHECK(ward_two_partition(x) == std::vector<int>{0, 0, 1, 1, 1});

    double best = 0.0;
    const auto brute = oracle::best_two_partition({{0}, {8}, {14}, {22}, {24}}, &best);
    CHECK(best == doctest::Approx(88.0));
    CHECK(same_partition(brute, ward_two_partition(x)));
}

TEST_CASE("ward_clusters reproduces a hand-run merge sequence")
{
    // merge costs: {0},{1} -> 0.5; then {0,1},{10} -> 60.17 beats {10},{30} -> 200
    Mat x(4, 1);
    x.data = {0, 1, 10, 30};
    CHECK(ward_clusters(x, 3) == std::vector<int>{0, 0, 1, 2});
    CHECK(ward_clusters(x, 2) == std::vector<int>{0, 0, 0, 1});
    CHECK(ward_clusters(x, 1) == std::vector<int>{0, 0, 0, 0});
    CHECK_THROWS_AS(ward_clusters(x, 5), ShapeError);
}

TEST_CASE("property: cluster split matches brute-force enumeration for N <= 6")
{
    std::mt19937_64 rng(9);
    for (int t = 0; t < 300; ++t) {
        const int n = 3 + t % 4;
        const auto pts = random_points(n, 1 + t % 9, rng);
        const auto v = cluster_outlier(feats(pts));
        CHECK(same_partition(v.cluster_labels, oracle::best_two_partition(pts)));
    }
}

TEST_CASE("property: cluster rule is permutation equivariant")
{
    std::mt19937_64 rng(10);
    for (int t = 0; t < 100; ++t) {
        auto pts = random_points(10, 4, rng);
        for (double& x : pts[static_cast<std::size_t>(t % 10)]) {
            x += 8.0;
        }
        const auto base = cluster_outlier(feats(pts));
        REQUIRE(base.flagged);
        CHECK(base.anomaly_index == t % 10);

        std::vector<int> perm(10);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::vector<double>> permuted(10);
        for (int i = 0; i < 10; ++i) {
            permuted[static_cast<std::size_t>(i)] = pts[static_cast<std::size_t>(perm[i])];
        }
        const auto vp = cluster_outlier(feats(permuted));
        REQUIRE(vp.flagged);
        CHECK(perm[static_cast<std::size_t>(*vp.anomaly_index)] == *base.anomaly_index);
    }
}

TEST_CASE("long rows use local refinement and never do worse than Ward")
{
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
        const auto pts = random_points(24, 3, rng);
        Mat x(24, 3);
        for (int i = 0; i < 24; ++i) {
            std::copy(pts[static_cast<std::size_t>(i)].begin(), pts[static_cast<std::size_t>(i)].end(), x.row(i).begin());
        }
        auto groups = [&](const std::vector<int>& l) {
            std::vector<int> a, b;
            for (int i = 0; i < 24; ++i) {
                (l[static_cast<std::size_t>(i)] == 0 ? a : b).push_back(i);
            }
            return oracle::sse(pts, a) + oracle::sse(pts, b);
        };
        CHECK(groups(ward_two_partition(x)) <= groups(ward_clusters(x, 2)) + 1e-12);
    }
}

TEST_CASE("verdict json carries method-specific details")
{
    const auto b = boxplot_outlier(std::vector<double>{0.10, 0.12, 0.11, 0.95});
    const auto jb = verdict_to_json(b, "row-7", "color");
    CHECK(jb["row_id"] == "row-7");
    CHECK(jb["method"] == "boxplot");
    CHECK(jb["selection"] == "color");
    CHECK(jb["flagged"] == true);
    CHECK(jb["anomaly_index"] == 3);
    CHECK(jb["scores"].size() == 4);
    CHECK(jb.contains("fence"));

    const auto c = cluster_outlier(feats({{0, 0}, {1, 1}, {0, 0}, {1, 1}}));
    const auto jc = verdict_to_json(c, "r", "content");
    CHECK(jc["flagged"] == false);
    CHECK(jc["anomaly_index"].is_null());
    CHECK(jc["cluster_sizes"] == nlohmann::json::array({2, 2}));
}

TEST_CASE("method and metric names parse")
{
    CHECK(parse_method("cluster") == Method::cluster);
    CHECK(parse_metric("cosine") == Metric::cosine);
    CHECK_THROWS_AS(parse_method("kmeans"), ConfigError);
    CHECK_THROWS_AS(parse_metric("manhattan"), ConfigError);
}
