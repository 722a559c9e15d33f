#pragma once

#include <cstdint>
#include <filesystem>

#include "delayformer/model.hpp"
#include "delayformer/pipeline.hpp"

namespace delayformer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    NormalizerStats stats;
};

/// Single-file binary container: magic "DLFM", little-endian u32 version,
/// length-prefixed JSON header (config, normalizer stats, tensor manifest of
/// name/shape/offset), then the raw little-endian f64 payload. Written
/// atomically. Round trips are bit-exact.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params, const NormalizerStats& stats);

/// Throws FormatError on bad magic or framing, UnsupportedVersionError on a
/// version this build does not read, IntegrityError on truncated or
/// inconsistent contents, IoError when unreadable.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace delayformer
