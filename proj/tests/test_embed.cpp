#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <random>

#include "coad/embed.hpp"
#include "coad/train.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace coad;
namespace fs = std::filesystem;

namespace {

double norm(const std::vector<double>& v)
{
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double cosine(const std::vector<double>& a, const std::vector<double>& b)
{
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (norm(a) * norm(b));
}

ConceptEmbedding random_embedding(int blocks_content, int n, int m, std::mt19937_64& rng)
{
    ConceptEmbedding e;
    for (int i = 0; i < 3; ++i) {
        e.color.push_back(oracle::random_mat(n, m, rng));
    }
    for (int i = 0; i < blocks_content; ++i) {
        e.content.push_back(oracle::random_mat(n, m, rng));
    }
    return e;
}

}  // namespace

TEST_CASE("pooled vector lengths")
{
    std::mt19937_64 rng(1);
    ModelConfig cfg;
    cfg.input_size = 64;
    cfg.ff_width = 32;
    const Model dwt(cfg);
    const auto e = dwt.encode(fixture::random_image(64, rng));
    CHECK(pool(e, FeatureSelection::color).vector.size() == 192);
    CHECK(pool(e, FeatureSelection::content).vector.size() == 256);
    CHECK(pool(e, FeatureSelection::both).vector.size() == 448);

    cfg.variant = Variant::vit_cm;
    const auto ecm = Model(cfg).encode(fixture::random_image(64, rng));
    CHECK(pool(ecm, FeatureSelection::content).vector.size() == 64);
    CHECK(pool(ecm, FeatureSelection::both).vector.size() == 256);

    ConceptEmbedding color_only;
    color_only.color = e.color;
    CHECK_THROWS_AS(pool(color_only, FeatureSelection::content), ConfigError);
    CHECK_THROWS_AS(pool(color_only, FeatureSelection::both), ConfigError);
}

TEST_CASE("constant blocks pool to their constants")
{
    ConceptEmbedding e;
    for (double c : {1.0, 2.0, 2.0}) {
        e.color.emplace_back(5, 2, c);
    }
    const auto f = pool(e, FeatureSelection::color);
    // (1,1,2,2,2,2) / sqrt(18)
    const double s = std::sqrt(18.0);
    const std::vector<double> want{1 / s, 1 / s, 2 / s, 2 / s, 2 / s, 2 / s};
    REQUIRE(f.vector.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(f.vector[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }

    ConceptEmbedding zero;
    zero.color.assign(3, Mat(4, 2, 0.0));
    const auto z = pool(zero, FeatureSelection::color);
    CHECK(norm(z.vector) == 0.0);
}

TEST_CASE("property: pooling is normalised, patch-order free and selection consistent")
{
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        auto e = random_embedding(4, 9, 6, rng);
        const auto both = pool(e, FeatureSelection::both);
        const auto color = pool(e, FeatureSelection::color);
        CHECK(std::abs(norm(both.vector) - 1.0) < 1e-6);
        CHECK(std::abs(norm(color.vector) - 1.0) < 1e-6);

        // the color slice of `both` is a positive multiple of `color`
        const std::vector<double> slice(both.vector.begin(), both.vector.begin() + 18);
        CHECK(cosine(slice, color.vector) == doctest::Approx(1.0).epsilon(1e-12));

        std::vector<int> perm(9);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        ConceptEmbedding shuffled = e;
        for (auto* blocks : {&shuffled.color, &shuffled.content}) {
            for (Mat& b : *blocks) {
                const Mat orig = b;
                for (int r = 0; r < 9; ++r) {
                    std::copy(orig.row(perm[r]).begin(), orig.row(perm[r]).end(), b.row(r).begin());
                }
            }
        }
        const auto again = pool(shuffled, FeatureSelection::both);
        for (std::size_t i = 0; i < both.vector.size(); ++i) {
            CHECK(std::abs(again.vector[i] - both.vector[i]) < 1e-12);
        }
    }
}

TEST_CASE("row feature extraction")
{
    std::mt19937_64 rng(3);
    const Model model(fixture::tiny());
    std::vector<Image> crops;
    for (int i = 0; i < 5; ++i) {
        crops.push_back(fixture::random_image(16, rng));
    }
    crops.push_back(crops[1]);
    const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
    const auto f = extract_row_features(crops, model, FeatureSelection::color, ids);
    REQUIRE(f.size() == 6);
    CHECK(f[0].object_id == "a");
    CHECK(f[4].object_id == "e");
    CHECK(f[5].vector == f[1].vector);
    CHECK(f[0].vector == extract_features(crops[0], model, std::vector{FeatureSelection::color})[0].vector);

    CHECK_THROWS_AS(extract_row_features(std::span(crops).first(1), model, FeatureSelection::color), Error);

    crops[3] = fixture::random_image(12, rng);
    try {
        (void)extract_row_features(crops, model, FeatureSelection::both);
        FAIL("expected a crop error");
    } catch (const CropError& e) {
        CHECK(e.index() == 3);
    }

    const Model ae(fixture::tiny(Variant::vit_ae));
    crops[3] = crops[2];
    CHECK_THROWS_AS(extract_row_features(crops, ae, FeatureSelection::color), ConfigError);
    CHECK(extract_row_features(crops, ae, FeatureSelection::both)[0].vector.size() == 16);
}

TEST_CASE("red and blue solids separate in color space after training")
{
    auto cfg = TrainConfig{};
    cfg.epochs = 30;
    cfg.lr = 1e-3;
    cfg.batch_size = 6;
    cfg.seed = 4;
    cfg.input_size = 16;
    cfg.patch_size = 4;
    cfg.concept_dim = 8;
    cfg.heads = 1;
    cfg.ff_width = 16;
    std::vector<Image> solids;
    for (double v : {0.2, 0.5, 0.8}) {
        solids.push_back(fixture::solid(16, v, 0.1, 0.1));
        solids.push_back(fixture::solid(16, 0.1, 0.1, v));
        solids.push_back(fixture::solid(16, 0.1, v, 0.1));
    }
    const Model model = train(solids, cfg);
    const std::vector sel{FeatureSelection::color};
    const auto red = extract_features(fixture::solid(16, 0.9, 0.1, 0.1), model, sel)[0].vector;
    const auto red2 = extract_features(fixture::solid(16, 0.7, 0.12, 0.1), model, sel)[0].vector;
    const auto blue = extract_features(fixture::solid(16, 0.1, 0.1, 0.9), model, sel)[0].vector;
    MESSAGE("cos(red, red') = " << cosine(red, red2) << ", cos(red, blue) = " << cosine(red, blue));
    CHECK(cosine(red, blue) < cosine(red, red2));
}

TEST_CASE("embedding cache persists records per checkpoint and selection")
{
    const fs::path root = fs::temp_directory_path() / "coad_tests" / "cache";
    fs::remove_all(root);
    {
        EmbeddingCache cache(root, "abc123", FeatureSelection::color);
        CHECK(cache.file().filename() == "abc123-color.jsonl");
        CHECK_FALSE(cache.find("x"));
        cache.put({"x", {0.6, 0.8}});
        cache.put({"y", {1.0, 0.0}});
    }
    const EmbeddingCache reopened(root, "abc123", FeatureSelection::color);
    CHECK(reopened.size() == 2);
    REQUIRE(reopened.find("x"));
    CHECK(*reopened.find("x") == std::vector<double>{0.6, 0.8});
    const EmbeddingCache other(root, "abc123", FeatureSelection::content);
    CHECK(other.size() == 0);

    ::setenv("COAD_CACHE_DIR", root.c_str(), 1);
    CHECK(EmbeddingCache::root_from_env() == root);
    ::setenv("COAD_CACHE_DIR", "", 1);
    CHECK_FALSE(EmbeddingCache::root_from_env());
    ::unsetenv("COAD_CACHE_DIR");
}

TEST_CASE("selection names")
{
    CHECK(parse_selection("both") == FeatureSelection::both);
    CHECK(to_string(FeatureSelection::content) == "content");
    CHECK_THROWS_AS(parse_selection("shape"), ConfigError);
}
