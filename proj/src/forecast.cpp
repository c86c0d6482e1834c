// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/forecast.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "ndif/random.hpp"
#include "ndif/textio.hpp"

namespace ndif {

Mask Mask::prefix(std::size_t length, std::size_t cutoff_index) {
  if (cutoff_index < 1 || cutoff_index + 1 > length) {
    throw ConfigError("mask cutoff index " + std::to_string(cutoff_index) +
                      " must leave at least one known and one unknown step of " +
                      std::to_string(length));
  }
  Mask m;
  m.known.assign(length, 0);
  std::fill_n(m.known.begin(), cutoff_index, 1);
  m.cutoff_index = cutoff_index;
  return m;
}

std::size_t cutoff_index_for(double cutoff_days) {
  if (!(cutoff_days > 1.0 / kStepsPerDay && cutoff_days < kHorizonDays)) {
    throw ConfigError("cutoff_days must lie in (1/24, 7), got " +
                      std::to_string(cutoff_days));
  }
  std::size_t n = 0;
  while (n < kGridLength && grid_tau(n) >= cutoff_days - 1e-12) ++n;
  return n;
}

Tensor mask_combine(const Mask& m, const Tensor& known, const Tensor& unknown) {
  if (known.shape() != unknown.shape() || known.rank() == 0 ||
      known.shape().back() != m.length()) {
    throw ShapeError("mask_combine: shapes " + shape_str(known.shape()) + ", " +
                     shape_str(unknown.shape()) + " with mask of length " +
                     std::to_string(m.length()));
  }
  const std::size_t L = m.length();
  Tensor out = Tensor::empty(known.shape());
  auto o = out.mutable_data();
  const auto k = known.data();
  const auto u = unknown.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = m.known[i % L] ? k[i] : u[i];
  return out;
}

void ForecastConfig::validate() const {
  if (num_samples < 1) throw ConfigError("num_samples must be at least 1");
  if (resample_count < 1) throw ConfigError("resample_count must be at least 1");
  if (jump_length < 1) throw ConfigError("jump_length must be at least 1");
  if (batch < 1) throw ConfigError("forecast batch must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!(0.0 <= q_low && q_low <= q_high && q_high <= 1.0)) {
    throw ConfigError("quantiles must satisfy 0 <= q_low <= q_high <= 1");
  }
}

namespace {

// Per-row standard normal draws; each row owns its generator.
class RowNoise {
 public:
  RowNoise(std::span<std::mt19937_64> rngs, std::size_t length)
      : rngs_(rngs), dists_(rngs.size()), length_(length) {}

  Tensor draw() {
    Tensor t = Tensor::empty({rngs_.size(), 1, length_});
    auto d = t.mutable_data();
    for (std::size_t n = 0; n < rngs_.size(); ++n) {
      for (std::size_t i = 0; i < length_; ++i) {
        d[n * length_ + i] = dists_[n](rngs_[n]);
      }
    }
    return t;
  }

 private:
  std::span<std::mt19937_64> rngs_;
  std::vector<std::normal_distribution<double>> dists_;
  std::size_t length_;
};

}  // namespace

Tensor repaint_sample(const Denoiser& denoiser, const NoiseSchedule& schedule,
                      const Tensor& x0_known, const Mask& mask,
                      const ForecastConfig& config,
                      std::span<std::mt19937_64> rngs,
                      const ReverseOptions& options, RepaintStats* stats) {
  config.validate();
  if (x0_known.rank() != 3 || x0_known.dim(1) != 1 ||
      x0_known.dim(2) != mask.length()) {
    throw ShapeError("repaint_sample: x0_known " + shape_str(x0_known.shape()) +
                     " does not match mask of length " + std::to_string(mask.length()));
  }
  if (rngs.size() != x0_known.dim(0)) {
    throw ShapeError("repaint_sample: one generator per batch row required");
  }
  denoiser.check_length(mask.length());

  RowNoise noise(rngs, mask.length());
  RepaintStats local;
  const auto fused = [&](const Tensor& x_t, int t) {
    ++local.fused_steps;
    // Known part at t-1; t-1 = 0 returns the conditioning values verbatim.
    const Tensor known =
        t > 1 ? q_sample(x0_known, t - 1, schedule, noise.draw()) : x0_known;
    const Tensor z = t > 1 ? noise.draw() : Tensor::zeros(x_t.shape());
    const Tensor unknown = p_sample_step(denoiser, x_t, t, schedule, z, options);
    return mask_combine(mask, known, unknown);
  };

  Tensor x = noise.draw();
  const int U = config.resample_count;
  const int jump = config.jump_length;
  for (int t = schedule.steps(); t >= 1;) {
    const int stop = std::max(t - jump, 0);
    for (int u = 1; u <= U; ++u) {
      for (int s = t; s > stop; --s) x = fused(x, s);
      if (u == U) break;
      for (int s = stop + 1; s <= t; ++s) {
        x = forward_step(x, s, schedule, noise.draw());
        ++local.renoise_steps;
      }
    }
    t = stop;
  }

  for (double v : x.data()) {
    if (!std::isfinite(v)) {
      throw NumericError("repaint_sample produced a non-finite value; "
                         "the denoiser parameters are unusable");
    }
  }
  if (stats) *stats = local;
  return x;
}

Tensor repaint_sample(const Denoiser& denoiser, const NoiseSchedule& schedule,
                      const Tensor& x0_known, const Mask& mask,
                      const ForecastConfig& config, std::mt19937_64& rng,
                      const ReverseOptions& options, RepaintStats* stats) {
  return repaint_sample(denoiser, schedule, x0_known, mask, config,
                        std::span<std::mt19937_64>(&rng, 1), options, stats);
}

Conditioning condition_on_cutoff(const ConjunctionEvent& event,
                                 const Normalizer& normalizer, double cutoff_days) {
  const std::size_t ci = cutoff_index_for(cutoff_days);
  std::vector<std::pair<std::size_t, double>> anchors;
  for (const auto& o : event.observations) {
    if (o.tau_days < cutoff_days) break;
    // Observations just above the cutoff may round onto the first unknown
    // step; they belong to the last known one.
    const std::size_t step = std::min(*nearest_step(o.tau_days), ci - 1);
    const double v = normalizer.normalize(o.sigma_m);
    if (!anchors.empty() && anchors.back().first == step) {
      anchors.back().second = v;
    } else {
      anchors.emplace_back(step, v);
    }
  }
  if (anchors.empty()) {
    throw DataError("event " + event.event_id + " has no observation at or before " +
                    format_double(cutoff_days) + " days to TCA");
  }
  Conditioning c{fill_grid(event.event_id, anchors), Mask::prefix(kGridLength, ci)};
  auto& s = c.series;
  const auto [last_step, last_value] = anchors.back();
  for (std::size_t i = last_step + 1; i < kGridLength; ++i) {
    s.values[i] = i < ci ? last_value : 0.0;
    s.pad_mask[i] = 0;
  }
  return c;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Bands aggregate(std::span<const double> trajectories, std::size_t n,
                std::size_t length, double q_low, double q_high, PointEstimate point) {
  if (n == 0 || trajectories.size() != n * length) {
    throw ShapeError("aggregate: expected " + std::to_string(n) + " x " +
                     std::to_string(length) + " values");
  }
  Bands b;
  b.point.resize(length);
  b.low.resize(length);
  b.high.resize(length);
  std::vector<double> column(n);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t k = 0; k < n; ++k) column[k] = trajectories[k * length + i];
    std::sort(column.begin(), column.end());
    b.low[i] = quantile_sorted(column, q_low);
    b.high[i] = quantile_sorted(column, q_high);
    if (point == PointEstimate::kMedian) {
      b.point[i] = quantile_sorted(column, 0.5);
    } else {
      double sum = 0.0;
      for (double v : column) sum += v;
      b.point[i] = sum / static_cast<double>(n);
    }
  }
  return b;
}

ForecastResult forecast(const Denoiser& denoiser, const NoiseSchedule& schedule,
                        const Conditioning& conditioning, const Normalizer& normalizer,
                        const ForecastConfig& config) {
  config.validate();
  const std::size_t L = conditioning.mask.length();
  const std::size_t N = config.num_samples;
  denoiser.check_length(L);

  ForecastResult r;
  r.event_id = conditioning.series.event_id;
  r.num_samples = N;
  r.mask = conditioning.mask;
  r.trajectories.resize(N * L);

  const std::size_t chunks = (N + config.batch - 1) / config.batch;
  const auto run_chunk = [&](std::size_t c) {
    const std::size_t first = c * config.batch;
    const std::size_t rows = std::min(config.batch, N - first);
    std::vector<std::mt19937_64> rngs;
    rngs.reserve(rows);
    std::vector<double> x0;
    x0.reserve(rows * L);
    for (std::size_t k = 0; k < rows; ++k) {
      rngs.push_back(make_stream(config.seed, StreamTag::kForecast, first + k));
      x0.insert(x0.end(), conditioning.series.values.begin(),
                conditioning.series.values.end());
    }
    const Tensor out = repaint_sample(denoiser, schedule, Tensor::from({rows, 1, L}, x0),
                                      conditioning.mask, config, rngs);
    const auto d = out.data();
    for (std::size_t j = 0; j < rows * L; ++j) {
      r.trajectories[first * L + j] = normalizer.denormalize(d[j]);
    }
  };

  const std::size_t workers = std::min(config.threads, chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = next++; c < chunks; c = next++) run_chunk(c);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  r.bands = aggregate(r.trajectories, N, L, config.q_low, config.q_high, config.point);
  return r;
}

void write_forecast(const std::filesystem::path& path, const ForecastResult& r) {
  auto out = open_for_write(path);
  out << "tau_days,median_m,q05_m,q95_m,known_flag\n";
  for (std::size_t i = 0; i < r.mask.length(); ++i) {
    put_double(out, grid_tau(i));
    for (double v : {r.bands.point[i], r.bands.low[i], r.bands.high[i]}) {
      out << ',';
      put_double(out, v);
    }
    out << ',' << int{r.mask.known[i]} << '\n';
  }
}

void write_trajectories(const std::filesystem::path& path, const ForecastResult& r) {
  auto out = open_for_write(path);
  out << "tau_days";
  for (std::size_t k = 0; k < r.num_samples; ++k) out << ",traj_" << k;
  out << '\n';
  for (std::size_t i = 0; i < r.mask.length(); ++i) {
    put_double(out, grid_tau(i));
    for (std::size_t k = 0; k < r.num_samples; ++k) {
      out << ',';
      put_double(out, r.trajectory(k, i));
    }
    out << '\n';
  }
}

}  // namespace ndif
