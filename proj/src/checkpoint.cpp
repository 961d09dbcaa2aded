#include "coad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace coad {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'A', 'D', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void write_pod(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& in, const std::string& what)
{
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw IoError("checkpoint truncated while reading " + what);
    }
    return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path, const ConfigEcho& echo)
{
    const ModelConfig& c = model.config();
    nlohmann::ordered_json header;
    header["format"] = "coad-checkpoint";
    header["variant"] = to_string(c.variant);
    header["model"] = {{"input_size", c.input_size}, {"patch_size", c.patch_size}, {"concept_dim", c.concept_dim},
                       {"heads", c.heads},           {"ff_width", c.ff_width},     {"init_seed", c.init_seed}};
    header["step"] = model.step;
    header["epoch"] = model.epoch;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : echo) {
        cfg[k] = v;
    }
    header["config"] = cfg;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    const auto params = model.parameters();
    for (const auto* p : params) {
        tensors.push_back({{"name", p->name}, {"rows", p->value.rows}, {"cols", p->value.cols}, {"offset", offset}});
        offset += p->value.size();
    }
    header["tensors"] = tensors;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write checkpoint '" + path.string() + "'");
    }
    out.write(kMagic, sizeof kMagic);
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* p : params) {
        out.write(reinterpret_cast<const char*>(p->value.data.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) {
        throw IoError("write failed for checkpoint '" + path.string() + "'");
    }
}

Model load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint '" + path.string() + "'");
    }
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw IoError("'" + path.string() + "' is not a checkpoint file");
    }
    const auto version = read_pod<std::uint32_t>(in, "version");
    if (version == 0 || version > kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = read_pod<std::uint64_t>(in, "header length");
    if (header_len > (1u << 28)) {
        throw IoError("checkpoint header length implausible");
    }
    std::string text(header_len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
        throw IoError("checkpoint truncated in header");
    }

    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    ModelConfig c;
    try {
        c.variant = parse_variant(header.at("variant").get<std::string>());
        const auto& m = header.at("model");
        c.input_size = m.at("input_size").get<int>();
        c.patch_size = m.at("patch_size").get<int>();
        c.concept_dim = m.at("concept_dim").get<int>();
        c.heads = m.at("heads").get<int>();
        c.ff_width = m.at("ff_width").get<int>();
        c.init_seed = m.at("init_seed").get<unsigned long long>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint header incomplete: ") + e.what());
    }

    Model model(c);
    model.step = header.value("step", 0L);
    model.epoch = header.value("epoch", 0);

    std::map<std::string, nn::Param*> by_name;
    for (auto* p : model.parameters()) {
        by_name[p->name] = p;
    }
    const std::streamoff data_start = in.tellg();
    std::size_t loaded = 0;
    for (const auto& t : header.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw IoError("checkpoint tensor '" + name + "' does not belong to a " + to_string(c.variant) + " model");
        }
        nn::Param& p = *it->second;
        if (t.at("rows").get<int>() != p.value.rows || t.at("cols").get<int>() != p.value.cols) {
            throw IoError("checkpoint tensor '" + name + "' has the wrong shape");
        }
        in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>() * sizeof(double)));
        if (!in.read(reinterpret_cast<char*>(p.value.data.data()),
                     static_cast<std::streamsize>(p.value.size() * sizeof(double)))) {
            throw IoError("checkpoint truncated in tensor '" + name + "'");
        }
        if (!all_finite(p.value)) {
            throw IoError("checkpoint tensor '" + name + "' has non-finite values");
        }
        ++loaded;
    }
    if (loaded != by_name.size()) {
        throw IoError("checkpoint is missing " + std::to_string(by_name.size() - loaded) + " tensors");
    }
    if (info != nullptr) {
        info->version = version;
        info->config_echo.clear();
        if (header.contains("config")) {
            for (const auto& [k, v] : header["config"].items()) {
                info->config_echo.emplace_back(k, v.get<std::string>());
            }
        }
    }
    return model;
}

std::string file_digest(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

}  // namespace coad
