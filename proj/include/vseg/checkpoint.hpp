#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>

#include "vseg/normalization.hpp"
#include "vseg/unet.hpp"

namespace vseg {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct TrainingMeta {
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  std::size_t crop = 64;  // ROI cube edge in voxels used for training and inference
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  double final_eval_loss = std::numeric_limits<double>::quiet_NaN();
};

struct UNetCheckpoint {
  UNet3d model;
  NormalizationStats norm_stats;
  TrainingMeta training_meta;
};

// Binary container, little-endian:
//   "VSEG" | u32 format_version | u32 tensor_count
//   per tensor: u32 name_len | name | u32 ndim | u64 dims[ndim] | u8 dtype (1 = f64)
//               | u64 payload_bytes | payload
//   u64 metadata_len | metadata (UTF-8 JSON: config, norm_stats, training_meta)
void save_checkpoint(const UNetCheckpoint& checkpoint, const std::filesystem::path& path);

// Throws CheckpointCorruptError for malformed or truncated files,
// CheckpointVersionError for an unknown format_version and ConfigError for
// a config describing a different network.
UNetCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vseg
