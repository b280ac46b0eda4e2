#pragma once

#include <filesystem>

#include "fedmix/params.hpp"

namespace fedmix {

// Binary checkpoint: 8-byte magic, version byte, architecture digest,
// parameter count, float64 little-endian payload, then provenance
// (rounds completed, master seed). Bit-exact round trip.
struct CheckpointInfo {
  std::uint32_t rounds_completed = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamVector& params, const CheckpointInfo& info);

struct LoadedCheckpoint {
  ParamVector params;
  CheckpointInfo info;
};

// Fails with ConfigError when the digest does not match the expected config,
// IngestionError on a malformed or truncated file.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig& expected);

}  // namespace fedmix
