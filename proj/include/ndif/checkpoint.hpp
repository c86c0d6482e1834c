// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ndif/data.hpp"
#include "ndif/diffusion.hpp"
#include "ndif/unet.hpp"

namespace ndif {

struct OptimizerState {
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> m, v;  // one per parameter, in name order
};

struct Checkpoint {
  UNetConfig unet;
  ScheduleConfig schedule;
  Normalizer normalizer;
  std::uint64_t seed = 0;  // training seed
  std::int64_t epochs_done = 0;
  ParamStore params;
  std::optional<OptimizerState> optimizer;
};

// Layout:
//   "NDIF1" | u32 version | u32 header bytes | JSON header | f32 LE payload
// The header lists every tensor with its shape and byte offset into the
// payload. Values are stored as float32, so a save/load round trip rounds
// each parameter to the nearest float.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws DataError on a missing file, bad magic, unknown version or an
// inconsistent manifest.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ndif
