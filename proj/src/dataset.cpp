#include "coad/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace coad {

DatasetIndex::DatasetIndex(std::vector<DatasetRecord> records, std::filesystem::path base_dir)
    : records_(std::move(records)), base_(std::move(base_dir))
{
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.id.empty()) {
            throw ConfigError("dataset record " + std::to_string(i) + " has an empty id");
        }
        if (r.label.empty()) {
            throw ConfigError("dataset record '" + r.id + "' has an empty label");
        }
        if (r.bbox && (r.bbox->w <= 0 || r.bbox->h <= 0 || r.bbox->x < 0 || r.bbox->y < 0)) {
            throw ConfigError("dataset record '" + r.id + "' has an invalid bbox");
        }
        if (!by_id_.emplace(r.id, i).second) {
            throw ConfigError("duplicate object id '" + r.id + "'");
        }
        classes_[r.label].push_back(i);
    }
}

const DatasetRecord& DatasetIndex::at(const std::string& id) const
{
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) {
        throw ConfigError("unknown object id '" + id + "'");
    }
    return records_[it->second];
}

std::filesystem::path DatasetIndex::resolve(const DatasetRecord& r) const
{
    return r.path.is_absolute() || base_.empty() ? r.path : base_ / r.path;
}

Image DatasetIndex::load(const DatasetRecord& r, int size) const
{
    Image img = load_image(resolve(r));
    if (r.bbox) {
        img = crop(img, *r.bbox);
    }
    return size > 0 ? resize(img, size, size) : img;
}

namespace {

DatasetRecord record_from_json(const nlohmann::json& j)
{
    DatasetRecord r;
    r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    r.path = j.at("path").get<std::string>();
    r.label = j.at("label").get<std::string>();
    if (j.contains("shelf_id") && !j["shelf_id"].is_null()) {
        r.shelf_id = j["shelf_id"].is_string() ? j["shelf_id"].get<std::string>() : j["shelf_id"].dump();
    }
    if (j.contains("row_id") && !j["row_id"].is_null()) {
        r.row_id = j["row_id"].is_string() ? j["row_id"].get<std::string>() : j["row_id"].dump();
    }
    if (j.contains("bbox") && !j["bbox"].is_null()) {
        const auto b = j["bbox"].get<std::vector<int>>();
        if (b.size() != 4) {
            throw ConfigError("bbox must be [x, y, w, h]");
        }
        r.bbox = BoundingBox{b[0], b[1], b[2], b[3]};
    }
    return r;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

DatasetIndex load_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest '" + path.string() + "'");
    }
    std::vector<DatasetRecord> records;
    std::string line;
    int lineno = 0;
    const auto ext = path.extension().string();
    if (ext == ".csv") {
        std::vector<std::string> header;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') {
                continue;
            }
            auto cells = split_csv(line);
            if (header.empty()) {
                header = cells;
                continue;
            }
            std::map<std::string, std::string> row;
            for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) {
                row[header[i]] = cells[i];
            }
            try {
                DatasetRecord r;
                r.id = row.at("id");
                r.path = row.at("path");
                r.label = row.at("label");
                if (!row["shelf_id"].empty()) {
                    r.shelf_id = row["shelf_id"];
                }
                if (!row["row_id"].empty()) {
                    r.row_id = row["row_id"];
                }
                if (!row["bbox_x"].empty()) {
                    r.bbox = BoundingBox{std::stoi(row.at("bbox_x")), std::stoi(row.at("bbox_y")),
                                         std::stoi(row.at("bbox_w")), std::stoi(row.at("bbox_h"))};
                }
                records.push_back(std::move(r));
            } catch (const std::exception& e) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad manifest row (" + e.what() +
                                  ")");
            }
        }
    } else {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            try {
                records.push_back(record_from_json(nlohmann::json::parse(line)));
            } catch (const std::exception& e) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad manifest record (" +
                                  e.what() + ")");
            }
        }
    }
    return DatasetIndex(std::move(records), path.parent_path());
}

void write_manifest_jsonl(const std::vector<DatasetRecord>& records, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write manifest '" + path.string() + "'");
    }
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["path"] = r.path.generic_string();
        j["label"] = r.label;
        if (r.shelf_id) {
            j["shelf_id"] = *r.shelf_id;
        }
        if (r.row_id) {
            j["row_id"] = *r.row_id;
        }
        if (r.bbox) {
            j["bbox"] = {r.bbox->x, r.bbox->y, r.bbox->w, r.bbox->h};
        }
        out << j.dump() << '\n';
    }
}

}  // namespace coad
