// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "ndif/adam.hpp"
#include "ndif/data.hpp"
#include "ndif/diffusion.hpp"

namespace ndif {

struct TrainConfig {
  int epochs = 200;
  std::size_t batch_size = 16;
  double learning_rate = 2e-4;
  std::uint64_t seed = 7;

  void validate() const;
};

struct EpochLog {
  std::int64_t epoch;  // 1-based, counted across resumes
  std::int64_t step;   // optimizer step count at the end of the epoch
  double mean_loss;    // average minibatch loss over the epoch
};

// Stacks series values into [B,1,L].
Tensor stack_series(std::span<const GriddedSeries> series,
                    std::span<const std::size_t> rows);

using EpochFn = std::function<void(const EpochLog&)>;

// Runs epochs first_epoch+1 .. config.epochs. Epoch e shuffles and draws its
// noise from its own stream, so resuming at an epoch boundary replays the
// same data order. A non-finite loss aborts with NumericError naming the
// optimizer step.
std::vector<EpochLog> train_epochs(const Denoiser& denoiser, Adam& optimizer,
                                   const NoiseSchedule& schedule,
                                   std::span<const GriddedSeries> data,
                                   const TrainConfig& config, std::int64_t first_epoch = 0,
                                   const EpochFn& on_epoch = {});

// epoch,step,loss
void write_loss_log(const std::filesystem::path& path, std::span<const EpochLog> log,
                    bool append);

}  // namespace ndif
