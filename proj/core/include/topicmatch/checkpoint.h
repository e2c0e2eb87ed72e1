#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "topicmatch/autograd.h"
#include "topicmatch/model.h"

namespace topicmatch {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// First and second moment estimates keyed by parameter name.
struct AdamState {
  std::map<std::string, ag::Matrix> m;
  std::map<std::string, ag::Matrix> v;
  std::int64_t step = 0;
};

// File layout: 8-byte magic "TMCKPT01", u32 format version, u64 header length,
// header JSON (tensor names, shapes, dtype, byte offsets, config, config hash,
// step), concatenated little-endian f64 payloads, then the SHA-256 of all
// preceding bytes.
struct CheckpointData {
  ModelConfig config;
  std::string config_hash;
  std::int64_t step = 0;
  std::int64_t adam_step = 0;
  std::map<std::string, ag::Matrix> tensors;  // "param/..", "buffer/..", "adam_m/..", "adam_v/.."
};

void save_checkpoint(const std::filesystem::path& path, Model& model, const AdamState* adam,
                     std::int64_t step);

// Throws IOError on short or corrupt files and VersionMismatch on an unknown
// magic or version.
CheckpointData read_checkpoint(const std::filesystem::path& path);

// Copies tensors into `model`. ConfigHashMismatch when the stored architecture
// differs from model.config unless `force` is set (then shapes must still agree).
void restore_model(const CheckpointData& data, Model& model, AdamState* adam, bool force = false);

// Reads a checkpoint and builds the model it describes.
Model load_model(const std::filesystem::path& path);

}  // namespace topicmatch
