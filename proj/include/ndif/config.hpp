// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ndif/data.hpp"
#include "ndif/diffusion.hpp"
#include "ndif/forecast.hpp"
#include "ndif/train.hpp"
#include "ndif/unet.hpp"

namespace ndif {

struct EvalConfig {
  double cutoff_days = 2.0;
  double tolerance_hours = 0.5;
};

// Everything a run needs. One master seed feeds every module; the modules
// separate their streams by tag. forecast.threads is a command-line setting
// only: it never changes results, so it is not persisted.
struct RunConfig {
  std::uint64_t seed = 7;
  SyntheticConfig synthetic;
  SplitFractions split;
  UNetConfig unet;
  ScheduleConfig schedule;
  TrainConfig train;
  ForecastConfig forecast;
  EvalConfig eval;

  // Pushes the master seed into the module configs and validates them.
  void finalize();
};

// Overlays the keys present in a JSON document onto `cfg`. Unknown keys and
// ill-typed values are ConfigErrors.
void merge_config_json(RunConfig& cfg, const std::string& text, const std::string& source);
void merge_config_file(RunConfig& cfg, const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);
void write_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace ndif
