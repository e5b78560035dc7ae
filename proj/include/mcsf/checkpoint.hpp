#pragma once

#include <filesystem>

#include "mcsf/model.hpp"

namespace mcsf {

// Checkpoint file layout (documented for portability):
//   bytes 0..7   magic "MCSFCKPT"
//   bytes 8..11  u32 little-endian JSON header length N
//   bytes 12..12+N  UTF-8 JSON header: strategy, source, dims, hidden,
//                   fused_dim, deltas, late_fusion_space, seed, m, and the
//                   ordered tensor table [{name, rows, cols}, ...]
//   remainder    tensor payload: raw little-endian f32, row-major, in
//                table order
struct Checkpoint {
  ScorerParams params;
  int m = 0;  // segment count the scorer was trained with (0 = auto)
};

void save_checkpoint(const std::filesystem::path& path, const ScorerParams& params, int m);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mcsf
