#pragma once

#include <filesystem>
#include <string>

#include "capeskit/attention/config.hpp"
#include "capeskit/attention/params.hpp"

namespace capeskit::attention {

// TLA1 container, little-endian:
//   "TLA1"
//   u64 config length, then that many bytes of `key = value` text
//   u64 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, rank x u64 dims,
//               row-major f64 values

struct SavedModel {
  AttentionConfig config;
  ModelParams params;
};

std::string encode_model(const AttentionConfig& cfg, const ModelParams& params);
SavedModel decode_model(std::string_view bytes);

void save_model(const std::filesystem::path& path, const AttentionConfig& cfg, const ModelParams& params);
SavedModel load_model(const std::filesystem::path& path);

}  // namespace capeskit::attention
