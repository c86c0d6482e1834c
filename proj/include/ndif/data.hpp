// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ndif/errors.hpp"

namespace ndif {

// Hourly grid from 7 days to 1 hour before TCA.
inline constexpr std::size_t kGridLength = 168;
inline constexpr double kHorizonDays = 7.0;
inline constexpr double kStepsPerDay = 24.0;

double grid_tau(std::size_t step);

// Nearest grid step (ties toward the smaller index), or nullopt when the
// time lies more than half a step beyond the last grid point.
std::optional<std::size_t> nearest_step(double tau_days);

struct Observation {
  double tau_days = 0.0;
  double sigma_m = 0.0;
  bool operator==(const Observation&) const = default;
};

struct ConjunctionEvent {
  std::string event_id;
  std::vector<Observation> observations;  // decreasing tau_days
  bool operator==(const ConjunctionEvent&) const = default;
};

// Throws DataError naming the event on any invariant violation.
void validate_event(const ConjunctionEvent& event);

struct SyntheticConfig {
  std::size_t n_events = 1400;
  double cdm_rate = 3.0;  // per day
  double sigma7_min = 2000.0, sigma7_max = 50000.0;
  double sigma0_min = 50.0, sigma0_max = 2000.0;
  double jitter_std = 0.1;
  double jump_prob = 0.3;
  double jump_min = 0.5, jump_max = 1.5;
  std::uint64_t seed = 7;

  void validate() const;
};

// sigma(tau) = sigma0 * (sigma7 / sigma0)^(tau / 7)
double synthetic_curve(double tau_days, double sigma7, double sigma0);

std::vector<ConjunctionEvent> generate_synthetic_events(const SyntheticConfig& cfg);

// log10 then affine onto [-1, 1]; inputs below 1 m are clamped.
class Normalizer {
 public:
  static constexpr double kFloorMetres = 1.0;

  Normalizer() = default;
  Normalizer(double lo, double hi);
  static Normalizer fit(std::span<const ConjunctionEvent> events);

  double normalize(double metres) const;
  double denormalize(double value) const;
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  double lo_ = 0.0, hi_ = 1.0;
};

template <class S>
concept Scaler = requires(const S& s, double v) {
  { s.normalize(v) } -> std::convertible_to<double>;
};

struct GriddedSeries {
  std::string event_id;
  std::vector<double> values;
  std::vector<std::uint8_t> obs_mask;
  std::vector<std::uint8_t> pad_mask;
};

// (grid step, index into observations) after snapping; on collisions the
// later-in-time observation wins. Off-grid observations are dropped.
std::vector<std::pair<std::size_t, std::size_t>> snap_observations(
    std::span<const Observation> observations);

// Linear interpolation between anchor points (step, value), sorted by step,
// zero padding outside them.
GriddedSeries fill_grid(std::string event_id,
                        std::span<const std::pair<std::size_t, double>> anchors);

template <Scaler S>
GriddedSeries grid_event(const ConjunctionEvent& event, const S& scaler) {
  const auto snapped = snap_observations(event.observations);
  if (snapped.size() < 2) {
    throw DataError("event " + event.event_id +
                    " is degenerate: observations cover fewer than two grid steps");
  }
  std::vector<std::pair<std::size_t, double>> anchors;
  anchors.reserve(snapped.size());
  for (auto [step, k] : snapped) {
    anchors.emplace_back(step, scaler.normalize(event.observations[k].sigma_m));
  }
  return fill_grid(event.event_id, anchors);
}

struct SplitFractions {
  double train = 5.0 / 7.0;
  double validation = 1.0 / 7.0;
  double test = 1.0 / 7.0;
};

struct DatasetSplit {
  std::vector<ConjunctionEvent> train, validation, test;
};

// Shuffles events with a seeded stream, gives validation and test
// floor(f * n) events each and the remainder to train.
DatasetSplit split_dataset(std::vector<ConjunctionEvent> events,
                           const SplitFractions& fractions, std::uint64_t seed);

// Tabular text with header event_id,tau_days,sigma_t_m.
void write_events(std::ostream& out, std::span<const ConjunctionEvent> events);
void write_events(const std::filesystem::path& path,
                  std::span<const ConjunctionEvent> events);
std::vector<ConjunctionEvent> read_events(std::istream& in,
                                          const std::string& source = "<stream>");
std::vector<ConjunctionEvent> read_events(const std::filesystem::path& path);

struct DatasetManifest {
  std::filesystem::path train_file, validation_file, test_file;  // relative
  Normalizer normalizer;
  std::size_t n_train = 0, n_validation = 0, n_test = 0;
  std::uint64_t seed = 0;
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace ndif
