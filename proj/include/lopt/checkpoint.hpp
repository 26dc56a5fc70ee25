#pragma once

// Binary persistence of meta-parameters and meta-training progress.
//
// Checkpoint layout (little-endian):
//   "LOPT", u32 version,
//   u32 feature bits, u32 timescales, u32 K_P, u32 K_T, u32 K_G,
//   u32 array count, then per array: u32 name length, name bytes, u32 rank,
//   u64 dims[rank], f64 data[prod(dims)],
//   u64 FNV-1a hash of every preceding byte.
//
// The training-state file ("LOPS") holds the meta-optimizer accumulators,
// iteration counter and moving average, with the same trailing hash.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "lopt/meta.hpp"
#include "lopt/optimizer.hpp"

namespace lopt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::string_view bytes);

std::string encode_checkpoint(const MetaParams& meta);
/// Throws CheckpointError on bad magic, version, checksum, names or shapes.
MetaParams decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const MetaParams& meta);
MetaParams load_checkpoint(const std::filesystem::path& path);

std::string encode_training_state(const MetaTrainState& state);
/// `meta` supplies the parameters; the file supplies everything else.
MetaTrainState decode_training_state(std::string_view bytes, MetaParams meta);

/// Sidecar path of the training state for a checkpoint.
std::filesystem::path training_state_path(const std::filesystem::path& checkpoint);

void save_training(const std::filesystem::path& checkpoint, const MetaTrainState& state);
MetaTrainState load_training(const std::filesystem::path& checkpoint);

}  // namespace lopt
