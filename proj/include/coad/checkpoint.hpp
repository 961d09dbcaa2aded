#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "coad/model.hpp"

namespace coad {

// Checkpoint container, little-endian:
//   "COADCKPT" | u32 version | u64 header length | JSON header | f64 tensor data
// The header carries the variant, model geometry, step/epoch counters, a free
// form config echo and, per tensor, its name, shape and element offset.

inline constexpr std::uint32_t kCheckpointVersion = 1;

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct CheckpointInfo {
    std::uint32_t version = 0;
    ConfigEcho config_echo;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path, const ConfigEcho& echo = {});
Model load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

/// FNV-1a over the file bytes, hex encoded.
std::string file_digest(const std::filesystem::path& path);

}  // namespace coad
