// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "ndif/textio.hpp"

namespace ndif {

std::vector<double> baseline_forecast(const ConjunctionEvent& event, double cutoff_days) {
  cutoff_index_for(cutoff_days);  // range check
  const Observation* last = nullptr;
  for (const auto& o : event.observations) {
    if (o.tau_days < cutoff_days) break;
    last = &o;
  }
  if (!last) {
    throw DataError("event " + event.event_id + " has no observation at or before " +
                    format_double(cutoff_days) + " days to TCA");
  }
  return std::vector<double>(kGridLength, last->sigma_m);
}

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.empty() || y.size() != yhat.size()) {
    throw NumericError(std::string(what) + " is undefined for " + std::to_string(y.size()) +
                       " truths and " + std::to_string(yhat.size()) + " predictions");
  }
}

}  // namespace

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "MAE");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "RMSE");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

std::vector<MatchedSample> match_true_samples(const ConjunctionEvent& event,
                                              double cutoff_days, double tolerance_hours) {
  const std::size_t ci = cutoff_index_for(cutoff_days);
  // (distance in hours, step, observation)
  std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
  for (std::size_t k = 0; k < event.observations.size(); ++k) {
    const double tau = event.observations[k].tau_days;
    if (tau >= cutoff_days) continue;
    const double r = (kHorizonDays - tau) * kStepsPerDay;
    const double nearest = std::clamp(std::ceil(r - 0.5), 0.0,
                                      static_cast<double>(kGridLength - 1));
    const auto step = static_cast<std::size_t>(nearest);
    if (step < ci) continue;
    const double hours = std::abs(grid_tau(step) - tau) * kStepsPerDay;
    if (hours <= tolerance_hours + 1e-9) cand.emplace_back(hours, step, k);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<std::uint8_t> taken(kGridLength, 0);
  std::vector<MatchedSample> out;
  for (const auto& [hours, step, k] : cand) {
    if (taken[step]) continue;
    taken[step] = 1;
    out.push_back({step, event.observations[k].sigma_m});
  }
  std::sort(out.begin(), out.end(),
            [](const MatchedSample& a, const MatchedSample& b) { return a.step < b.step; });
  return out;
}

Prediction BaselineForecaster::predict(const ConjunctionEvent& event,
                                       double cutoff_days) const {
  return {baseline_forecast(event, cutoff_days), {}, {}};
}

ForecastResult DiffusionForecaster::run(const ConjunctionEvent& event,
                                        double cutoff_days) const {
  const auto cond = condition_on_cutoff(event, normalizer_, cutoff_days);
  return forecast(denoiser_, schedule_, cond, normalizer_, config_);
}

Prediction DiffusionForecaster::predict(const ConjunctionEvent& event,
                                        double cutoff_days) const {
  auto r = run(event, cutoff_days);
  return {std::move(r.bands.point), std::move(r.bands.low), std::move(r.bands.high)};
}

Evaluation evaluate(std::span<const Forecaster* const> models,
                    std::span<const ConjunctionEvent> events, double cutoff_days,
                    double tolerance_hours, const ProgressFn& progress) {
  struct Pool {
    std::vector<double> truth, pred;
    std::size_t covered = 0;
    bool has_band = false;
  };
  Evaluation ev;
  ev.events_total = events.size();
  std::vector<Pool> pools(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    ev.reports.push_back({models[m]->name(), cutoff_days, 0, 0, 0.0, 0.0, {}, {}});
  }

  std::size_t done = 0;
  for (const auto& event : events) {
    const auto matches = match_true_samples(event, cutoff_days, tolerance_hours);
    std::vector<Prediction> preds;
    bool rejected = false;
    if (!matches.empty()) {
      for (const auto* model : models) {
        try {
          preds.push_back(model->predict(event, cutoff_days));
        } catch (const DataError&) {
          rejected = true;
          break;
        }
      }
    }
    if (rejected) {
      ++ev.events_rejected;
    } else if (matches.empty()) {
      ++ev.events_without_matches;
    } else {
      std::vector<double> truth;
      for (const auto& s : matches) truth.push_back(s.sigma_m);
      for (std::size_t m = 0; m < models.size(); ++m) {
        const auto& p = preds[m];
        std::vector<double> yhat;
        for (const auto& s : matches) yhat.push_back(p.point.at(s.step));
        auto& pool = pools[m];
        pool.truth.insert(pool.truth.end(), truth.begin(), truth.end());
        pool.pred.insert(pool.pred.end(), yhat.begin(), yhat.end());
        if (!p.low.empty()) {
          pool.has_band = true;
          for (const auto& s : matches) {
            if (p.low[s.step] <= s.sigma_m && s.sigma_m <= p.high[s.step]) ++pool.covered;
          }
        }
        ev.reports[m].per_event.push_back(
            {event.event_id, truth.size(), mae(truth, yhat), rmse(truth, yhat)});
      }
    }
    if (progress) progress(++done, events.size());
  }

  for (std::size_t m = 0; m < models.size(); ++m) {
    auto& r = ev.reports[m];
    const auto& pool = pools[m];
    r.n = pool.truth.size();
    r.n_events = r.per_event.size();
    if (r.n == 0) {
      r.mae = r.rmse = NAN;
      continue;
    }
    r.mae = mae(pool.truth, pool.pred);
    r.rmse = rmse(pool.truth, pool.pred);
    if (pool.has_band) {
      r.band_coverage = static_cast<double>(pool.covered) / static_cast<double>(r.n);
    }
  }
  return ev;
}

void write_metrics(const std::filesystem::path& path, const Evaluation& e) {
  auto out = open_for_write(path);
  out << "model,cutoff_days,n,mae_m,rmse_m\n";
  for (const auto& r : e.reports) {
    out << r.model << ',';
    put_double(out, r.cutoff_days);
    out << ',' << r.n << ',';
    put_double(out, r.mae);
    out << ',';
    put_double(out, r.rmse);
    out << '\n';
  }
}

void write_event_metrics(const std::filesystem::path& path, const Evaluation& e) {
  auto out = open_for_write(path);
  out << "model,event_id,n,mae_m,rmse_m\n";
  for (const auto& r : e.reports) {
    for (const auto& pe : r.per_event) {
      out << r.model << ',' << pe.event_id << ',' << pe.n << ',';
      put_double(out, pe.mae);
      out << ',';
      put_double(out, pe.rmse);
      out << '\n';
    }
  }
}

std::string format_metrics_table(const Evaluation& e) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << std::left << std::setw(12) << "model" << std::right << std::setw(8) << "cutoff"
     << std::setw(8) << "events" << std::setw(8) << "n" << std::setw(12) << "MAE [m]"
     << std::setw(12) << "RMSE [m]" << std::setw(12) << "5-95% cov" << '\n';
  for (const auto& r : e.reports) {
    os << std::left << std::setw(12) << r.model << std::right << std::setw(8)
       << std::setprecision(2) << r.cutoff_days << std::setprecision(1) << std::setw(8)
       << r.n_events << std::setw(8) << r.n << std::setw(12) << r.mae << std::setw(12)
       << r.rmse;
    if (r.band_coverage) {
      os << std::setw(11) << 100.0 * *r.band_coverage << '%';
    } else {
      os << std::setw(12) << "-";
    }
    os << '\n';
  }
  os << "events: " << e.events_total << " total, " << e.events_rejected
     << " rejected by a model (excluded from all), " << e.events_without_matches
     << " without matched samples\n";
  return os.str();
}

}  // namespace ndif
