#pragma once

// Versioned binary checkpoint.
//
// Layout: the 8-byte magic "COOPMARL", a u32 format version, a u32 field
// count, then named fields. Each field is a u16 name length, the name bytes,
// a u8 type tag and a payload:
//   tag 1  u64 scalar
//   tag 2  f64 array  (u64 count, then count IEEE-754 doubles)
//   tag 3  u64 array  (u64 count, then count u64)
//   tag 4  bytes      (u64 length, then raw bytes)
// All integers and doubles are little-endian.
//
// A checkpoint holds everything needed to continue training bit-exactly:
// the experiment config echo, all networks and optimizer moments, the
// replay buffer, the trainer RNG and the episode/step counters.

#include <cstdint>
#include <filesystem>
#include <string>

#include "coopmarl/config.hpp"
#include "coopmarl/trainer.hpp"

namespace coopmarl::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const maddpg::Trainer& trainer, const ExperimentConfig& config,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  ExperimentConfig config;
  std::string config_echo;
  maddpg::Trainer trainer;
};

// Throws CheckpointFormatError on a bad magic, unsupported version,
// truncation or missing field.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coopmarl::harness
