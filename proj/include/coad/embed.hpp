#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coad/model.hpp"

namespace coad {

/// Which concept blocks make up an object's feature vector.
enum class FeatureSelection { color, content, both };

std::string to_string(FeatureSelection s);
FeatureSelection parse_selection(std::string_view s);

struct ObjectFeature {
    std::string object_id;
    std::vector<double> vector;
};

/// Mean over patches of every selected block, concatenated R, G, B, then the
/// content blocks in order, then L2-normalised (an all-zero vector stays zero).
/// Throws ConfigError when the embedding lacks a requested block family.
ObjectFeature pool(const ConceptEmbedding& embedding, FeatureSelection selection, std::string object_id = {});

/// Same reduction for an undisentangled latent (vit-ae).
ObjectFeature pool_latent(const Mat& latent, std::string object_id = {});

/// Thrown by extract_row_features with the position of the failing crop.
class CropError : public Error {
public:
    CropError(std::size_t index, const std::string& what)
        : Error("crop " + std::to_string(index) + ": " + what), index_(index)
    {
    }
    [[nodiscard]] std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// One feature per crop, in crop order. vit-ae models only accept `both`.
std::vector<ObjectFeature> extract_row_features(std::span<const Image> crops, const Model& model,
                                                FeatureSelection selection,
                                                std::span<const std::string> object_ids = {});

/// Features of one crop for several selections from a single encoder pass.
std::vector<ObjectFeature> extract_features(const Image& crop, const Model& model,
                                            std::span<const FeatureSelection> selections,
                                            const std::string& object_id = {});

/// On-disk feature cache, one JSON-lines file per (checkpoint digest, selection)
/// holding {"id": ..., "vector": [...]} records.
class EmbeddingCache {
public:
    EmbeddingCache(std::filesystem::path root, std::string checkpoint_digest, FeatureSelection selection);

    /// Root from COAD_CACHE_DIR, or nullopt when the variable is unset/empty.
    static std::optional<std::filesystem::path> root_from_env();

    [[nodiscard]] const std::filesystem::path& file() const noexcept { return file_; }
    [[nodiscard]] std::optional<std::vector<double>> find(const std::string& object_id) const;
    /// Records the feature in memory and appends it to the file.
    void put(const ObjectFeature& feature);
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

private:
    std::filesystem::path file_;
    std::map<std::string, std::vector<double>> entries_;
};

}  // namespace coad
