#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coad/image.hpp"

namespace coad {

/// One manifest record: {id, path, label, shelf_id?, row_id?, bbox? [x, y, w, h]}.
struct DatasetRecord {
    std::string id;
    std::filesystem::path path;  // relative paths resolve against the manifest directory
    std::string label;
    std::optional<std::string> shelf_id;
    std::optional<std::string> row_id;
    std::optional<BoundingBox> bbox;
};

class DatasetIndex {
public:
    DatasetIndex() = default;
    DatasetIndex(std::vector<DatasetRecord> records, std::filesystem::path base_dir = {});

    [[nodiscard]] const std::vector<DatasetRecord>& records() const noexcept { return records_; }
    [[nodiscard]] const std::filesystem::path& base_dir() const noexcept { return base_; }
    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }

    /// Record indices per class label, labels in sorted order.
    [[nodiscard]] const std::map<std::string, std::vector<std::size_t>>& classes() const noexcept { return classes_; }
    [[nodiscard]] const DatasetRecord& at(const std::string& id) const;
    [[nodiscard]] std::filesystem::path resolve(const DatasetRecord& r) const;

    /// Loads the record's image, cuts out its bbox (if any) and resizes to
    /// `size` x `size` (kept as is when `size` <= 0). Throws IoError / ShapeError.
    [[nodiscard]] Image load(const DatasetRecord& r, int size) const;

private:
    std::vector<DatasetRecord> records_;
    std::filesystem::path base_;
    std::map<std::string, std::size_t> by_id_;
    std::map<std::string, std::vector<std::size_t>> classes_;
};

/// Reads a JSON-lines (`.jsonl`/`.json`) or CSV manifest. CSV columns:
/// id,path,label[,shelf_id,row_id,bbox_x,bbox_y,bbox_w,bbox_h].
DatasetIndex load_manifest(const std::filesystem::path& path);
void write_manifest_jsonl(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);

}  // namespace coad
