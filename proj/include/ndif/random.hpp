// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace ndif {

// Purposes mixed into derived seeds so that e.g. event k and trajectory k
// never share a stream.
enum class StreamTag : std::uint32_t {
  kSynthetic = 1,
  kSplit = 2,
  kInit = 3,
  kTraining = 4,
  kForecast = 5,
  kSampling = 6,
};

// Independent generator for (seed, tag, index). The result depends only on
// these three values, never on how many other streams were created.
inline std::mt19937_64 make_stream(std::uint64_t seed, StreamTag tag,
                                   std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace ndif
