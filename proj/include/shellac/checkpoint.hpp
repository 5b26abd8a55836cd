#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "shellac/config.hpp"
#include "shellac/trainer.hpp"

namespace shellac {

/// Everything needed to sample from a model or resume training bit-identically.
///
/// File layout (little-endian):
///   "SHLCKPT\0", u32 version, u64 metadata length, metadata JSON,
///   u32 array count, then per array: u32 name length, name, i32 rows,
///   i32 cols, u8 trainable, f64 data[n], ema[n], adam_m[n], adam_v[n];
///   finally "SHLCEND\0".
struct Checkpoint {
    NetworkConfig network;
    TrainingConfig training;
    DataConfig data;
    TrainerState state;
    std::string data_state;  // batch source position
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws IoError when unreadable, DataError when truncated or inconsistent.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Metadata block only (configs, iteration, parameter count).
nlohmann::json checkpoint_metadata(const std::filesystem::path& path);

}  // namespace shellac
