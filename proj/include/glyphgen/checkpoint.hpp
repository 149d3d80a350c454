#pragma once

#include <cstdint>
#include <filesystem>

#include "glyphgen/trainer.hpp"

namespace glyphgen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes the full training state (networks, optimizers, memory, config,
/// counters, rng) atomically: a temporary file is renamed over `path`.
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);

/// Reads a checkpoint written by save_checkpoint. Raises IoError when the
/// file cannot be read, IntegrityError on a bad magic, truncation or CRC
/// mismatch, and IncompatibleError on an unknown format version.
TrainingState load_checkpoint(const std::filesystem::path& path);

/// Overwrites the version field of an existing checkpoint (test hook).
void rewrite_checkpoint_version(const std::filesystem::path& path, std::uint32_t version);

}  // namespace glyphgen
