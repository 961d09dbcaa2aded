#include "coad/embed.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace coad {

std::string to_string(FeatureSelection s)
{
    switch (s) {
    case FeatureSelection::color:
        return "color";
    case FeatureSelection::content:
        return "content";
    case FeatureSelection::both:
        return "both";
    }
    return "?";
}

FeatureSelection parse_selection(std::string_view s)
{
    if (s == "color") {
        return FeatureSelection::color;
    }
    if (s == "content") {
        return FeatureSelection::content;
    }
    if (s == "both") {
        return FeatureSelection::both;
    }
    throw ConfigError("unknown feature selection '" + std::string(s) + "' (expected color, content or both)");
}

namespace {

void append_mean(const Mat& block, std::vector<double>& out)
{
    for (int c = 0; c < block.cols; ++c) {
        double s = 0.0;
        for (int r = 0; r < block.rows; ++r) {
            s += block(r, c);
        }
        out.push_back(s / block.rows);
    }
}

void normalize(std::vector<double>& v)
{
    double n = 0.0;
    for (double x : v) {
        n += x * x;
    }
    n = std::sqrt(n);
    if (n > 0.0) {
        for (double& x : v) {
            x /= n;
        }
    }
}

}  // namespace

ObjectFeature pool(const ConceptEmbedding& e, FeatureSelection selection, std::string object_id)
{
    const bool want_color = selection != FeatureSelection::content;
    const bool want_content = selection != FeatureSelection::color;
    if (want_color && e.color.empty()) {
        throw ConfigError("pool: embedding has no color blocks for selection '" + to_string(selection) + "'");
    }
    if (want_content && e.content.empty()) {
        throw ConfigError("pool: embedding has no content blocks for selection '" + to_string(selection) + "'");
    }
    ObjectFeature f{std::move(object_id), {}};
    if (want_color) {
        for (const Mat& b : e.color) {
            append_mean(b, f.vector);
        }
    }
    if (want_content) {
        for (const Mat& b : e.content) {
            append_mean(b, f.vector);
        }
    }
    normalize(f.vector);
    return f;
}

ObjectFeature pool_latent(const Mat& latent, std::string object_id)
{
    ObjectFeature f{std::move(object_id), {}};
    append_mean(latent, f.vector);
    normalize(f.vector);
    return f;
}

std::vector<ObjectFeature> extract_features(const Image& crop, const Model& model,
                                            std::span<const FeatureSelection> selections,
                                            const std::string& object_id)
{
    std::vector<ObjectFeature> out;
    if (model.variant() == Variant::vit_ae) {
        for (FeatureSelection s : selections) {
            if (s != FeatureSelection::both) {
                throw ConfigError("vit-ae has no " + to_string(s) + " features; use selection 'both'");
            }
        }
        const ObjectFeature f = pool_latent(model.encode_latent(crop), object_id);
        out.assign(selections.size(), f);
        return out;
    }
    const ConceptEmbedding e = model.encode(crop);
    for (FeatureSelection s : selections) {
        out.push_back(pool(e, s, object_id));
    }
    return out;
}

std::vector<ObjectFeature> extract_row_features(std::span<const Image> crops, const Model& model,
                                                FeatureSelection selection, std::span<const std::string> object_ids)
{
    if (crops.size() < 2) {
        throw Error("extract_row_features: a row needs at least 2 crops, got " + std::to_string(crops.size()));
    }
    if (!object_ids.empty() && object_ids.size() != crops.size()) {
        throw Error("extract_row_features: " + std::to_string(object_ids.size()) + " ids for " +
                    std::to_string(crops.size()) + " crops");
    }
    std::vector<ObjectFeature> out;
    out.reserve(crops.size());
    const FeatureSelection sel[1] = {selection};
    for (std::size_t i = 0; i < crops.size(); ++i) {
        const std::string id = object_ids.empty() ? std::to_string(i) : object_ids[i];
        try {
            out.push_back(std::move(extract_features(crops[i], model, sel, id).front()));
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw CropError(i, e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------- cache

EmbeddingCache::EmbeddingCache(std::filesystem::path root, std::string checkpoint_digest, FeatureSelection selection)
{
    std::filesystem::create_directories(root);
    file_ = root / (checkpoint_digest + "-" + to_string(selection) + ".jsonl");
    std::ifstream in(file_);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            entries_[j.at("id").get<std::string>()] = j.at("vector").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw IoError(file_.string() + ":" + std::to_string(lineno) + ": bad cache record: " + e.what());
        }
    }
}

std::optional<std::filesystem::path> EmbeddingCache::root_from_env()
{
    const char* v = std::getenv("COAD_CACHE_DIR");
    if (v == nullptr || *v == '\0') {
        return std::nullopt;
    }
    return std::filesystem::path(v);
}

std::optional<std::vector<double>> EmbeddingCache::find(const std::string& object_id) const
{
    if (const auto it = entries_.find(object_id); it != entries_.end()) {
        return it->second;
    }
    return std::nullopt;
}

void EmbeddingCache::put(const ObjectFeature& feature)
{
    entries_[feature.object_id] = feature.vector;
    std::ofstream out(file_, std::ios::app);
    if (!out) {
        throw IoError("cannot append to embedding cache '" + file_.string() + "'");
    }
    out << nlohmann::json{{"id", feature.object_id}, {"vector", feature.vector}}.dump() << '\n';
}

}  // namespace coad
