#pragma once

#include <filesystem>

#include "mia/lm.hpp"

namespace mia {

// Checkpoint file layout:
//   8-byte magic "MIALM\0\0\1"
//   u32 little-endian header length, then that many bytes of JSON:
//     {version, config{...}, tensors[{name, shape, offset}]}
//     with offsets relative to the start of the payload region
//   raw little-endian float32 tensor payloads in manifest order
//   u64 little-endian FNV-1a checksum of the payload bytes
//
// Round trips are bit-exact.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const LmModel& model, const std::filesystem::path& path);
LmModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mia
