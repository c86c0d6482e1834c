// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ndif/data.hpp"
#include "ndif/forecast.hpp"

namespace ndif {

// Last-value hold: every grid step gets the sigma of the latest observation
// at or before the cutoff (only the unknown steps are meaningful).
std::vector<double> baseline_forecast(const ConjunctionEvent& event, double cutoff_days);

// Throw NumericError on empty or mismatched input.
double mae(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);

struct MatchedSample {
  std::size_t step;
  double sigma_m;
};

// Post-cutoff observations paired with their nearest unknown grid step when
// within the tolerance; one-to-one, closest pairs first, ties to the smaller
// step. Sorted by step.
std::vector<MatchedSample> match_true_samples(const ConjunctionEvent& event,
                                              double cutoff_days,
                                              double tolerance_hours = 0.5);

struct Prediction {
  std::vector<double> point;     // metres, one per grid step
  std::vector<double> low, high; // optional band, empty if none
};

class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::string name() const = 0;
  // Throws DataError when the event cannot be forecast at this cutoff.
  virtual Prediction predict(const ConjunctionEvent& event, double cutoff_days) const = 0;
};

class BaselineForecaster : public Forecaster {
 public:
  std::string name() const override { return "baseline"; }
  Prediction predict(const ConjunctionEvent& event, double cutoff_days) const override;
};

class DiffusionForecaster : public Forecaster {
 public:
  DiffusionForecaster(const Denoiser& denoiser, NoiseSchedule schedule,
                      Normalizer normalizer, ForecastConfig config)
      : denoiser_(denoiser), schedule_(std::move(schedule)),
        normalizer_(normalizer), config_(config) {}
  std::string name() const override { return "diffusion"; }
  Prediction predict(const ConjunctionEvent& event, double cutoff_days) const override;
  ForecastResult run(const ConjunctionEvent& event, double cutoff_days) const;

 private:
  const Denoiser& denoiser_;
  NoiseSchedule schedule_;
  Normalizer normalizer_;
  ForecastConfig config_;
};

struct EventMetrics {
  std::string event_id;
  std::size_t n = 0;
  double mae = 0.0, rmse = 0.0;
};

struct MetricsReport {
  std::string model;
  double cutoff_days = 0.0;
  std::size_t n = 0;         // matched samples
  std::size_t n_events = 0;  // events contributing samples
  double mae = 0.0, rmse = 0.0;
  // Fraction of matched samples inside [low, high]; models without bands
  // report nullopt.
  std::optional<double> band_coverage;
  std::vector<EventMetrics> per_event;
};

struct Evaluation {
  std::vector<MetricsReport> reports;
  std::size_t events_total = 0;
  std::size_t events_rejected = 0;        // excluded from every model
  std::size_t events_without_matches = 0; // nothing to score
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

Evaluation evaluate(std::span<const Forecaster* const> models,
                    std::span<const ConjunctionEvent> events, double cutoff_days,
                    double tolerance_hours = 0.5, const ProgressFn& progress = {});

// model,cutoff_days,n,mae_m,rmse_m
void write_metrics(const std::filesystem::path& path, const Evaluation& e);
// model,event_id,n,mae_m,rmse_m
void write_event_metrics(const std::filesystem::path& path, const Evaluation& e);
std::string format_metrics_table(const Evaluation& e);

}  // namespace ndif
