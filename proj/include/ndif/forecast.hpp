// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "ndif/data.hpp"
#include "ndif/diffusion.hpp"
#include "ndif/tensor.hpp"

namespace ndif {

// Known prefix [0, cutoff_index), unknown suffix.
struct Mask {
  std::vector<std::uint8_t> known;
  std::size_t cutoff_index = 0;

  static Mask prefix(std::size_t length, std::size_t cutoff_index);
  std::size_t length() const { return known.size(); }
};

// Number of grid steps with tau >= cutoff_days; cutoff must lie in (1/24, 7).
std::size_t cutoff_index_for(double cutoff_days);

// m * known + (1 - m) * unknown along the last axis.
Tensor mask_combine(const Mask& m, const Tensor& known, const Tensor& unknown);

enum class PointEstimate { kMedian, kMean };

struct ForecastConfig {
  std::size_t num_samples = 32;
  int resample_count = 1;  // U; 1 disables resampling
  int jump_length = 1;
  std::uint64_t seed = 7;
  PointEstimate point = PointEstimate::kMedian;
  double q_low = 0.05, q_high = 0.95;
  // Trajectories run in fixed-size batches; results depend on the batch
  // size but never on the thread count.
  std::size_t batch = 8;
  std::size_t threads = 1;

  void validate() const;
};

struct RepaintStats {
  std::size_t fused_steps = 0;
  std::size_t renoise_steps = 0;
};

// Mask-conditioned reverse chain for a batch [B,1,L]; row n draws all of its
// noise from rngs[n].
Tensor repaint_sample(const Denoiser& denoiser, const NoiseSchedule& schedule,
                      const Tensor& x0_known, const Mask& mask,
                      const ForecastConfig& config,
                      std::span<std::mt19937_64> rngs,
                      const ReverseOptions& options = {},
                      RepaintStats* stats = nullptr);

Tensor repaint_sample(const Denoiser& denoiser, const NoiseSchedule& schedule,
                      const Tensor& x0_known, const Mask& mask,
                      const ForecastConfig& config, std::mt19937_64& rng,
                      const ReverseOptions& options = {},
                      RepaintStats* stats = nullptr);

// Known-region series built from observations at or before the cutoff only:
// snapped, interpolated, left-padded, and the last value held up to the
// cutoff. Throws DataError when no observation precedes the cutoff.
struct Conditioning {
  GriddedSeries series;  // normalised
  Mask mask;
};

Conditioning condition_on_cutoff(const ConjunctionEvent& event,
                                 const Normalizer& normalizer, double cutoff_days);

struct Bands {
  std::vector<double> point, low, high;
};

// Per-step statistics over an N x L row-major matrix; quantiles interpolate
// linearly between order statistics.
Bands aggregate(std::span<const double> trajectories, std::size_t n, std::size_t length,
                double q_low = 0.05, double q_high = 0.95,
                PointEstimate point = PointEstimate::kMedian);

double quantile_sorted(std::span<const double> sorted, double q);

struct ForecastResult {
  std::string event_id;
  std::size_t num_samples = 0;
  std::vector<double> trajectories;  // num_samples x L, metres
  Bands bands;                       // metres
  Mask mask;

  double trajectory(std::size_t k, std::size_t step) const {
    return trajectories[k * mask.length() + step];
  }
};

ForecastResult forecast(const Denoiser& denoiser, const NoiseSchedule& schedule,
                        const Conditioning& conditioning, const Normalizer& normalizer,
                        const ForecastConfig& config);

// tau_days,median_m,q05_m,q95_m,known_flag
void write_forecast(const std::filesystem::path& path, const ForecastResult& r);
// tau_days,traj_0,...,traj_{N-1}
void write_trajectories(const std::filesystem::path& path, const ForecastResult& r);

}  // namespace ndif
