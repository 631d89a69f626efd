#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "invlab/network.hpp"

namespace invlab {

// Binary layout:
//   4 bytes  magic "INVL"
//   u32      format version
//   u64      metadata length, then that many bytes of UTF-8 JSON (layer sizes,
//            objective, dataset spec, seeds, tensor table, run config)
//   f64[]    every tensor, little-endian, in declaration order; Adam moments
//            follow the weights when optimizer state is stored
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelMeta meta;
  ModelParams params;
  std::optional<AdamState> optimizer;
  nlohmann::json config;  // the configuration that produced the weights

  MlpModel model() const { return MlpModel(meta, params); }
};

void to_json(nlohmann::json& j, const ModelMeta& meta);
void from_json(const nlohmann::json& j, ModelMeta& meta);

void save_checkpoint(const std::filesystem::path& path, const ModelMeta& meta, const ModelParams& params,
                     const AdamState* optimizer, const nlohmann::json& config);

// Throws CheckpointError on bad magic, version, truncation or shape mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace invlab
