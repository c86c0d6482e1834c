// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "ndif/random.hpp"
#include "ndif/textio.hpp"

namespace ndif {

double grid_tau(std::size_t step) {
  return kHorizonDays - static_cast<double>(step) / kStepsPerDay;
}

std::optional<std::size_t> nearest_step(double tau_days) {
  const double r = (kHorizonDays - tau_days) * kStepsPerDay;
  const double i = std::ceil(r - 0.5);
  if (i < 0.0 || i >= static_cast<double>(kGridLength)) return std::nullopt;
  return static_cast<std::size_t>(i);
}

void validate_event(const ConjunctionEvent& e) {
  const auto fail = [&](const std::string& why) {
    throw DataError("event " + e.event_id + ": " + why);
  };
  if (e.event_id.empty()) throw DataError("event with empty id");
  if (e.observations.size() < 2) fail("needs at least two observations");
  for (std::size_t k = 0; k < e.observations.size(); ++k) {
    const auto& o = e.observations[k];
    if (!(o.sigma_m > 0.0) || !std::isfinite(o.sigma_m)) {
      fail("sigma_t must be positive and finite");
    }
    if (!(o.tau_days >= 0.0 && o.tau_days <= kHorizonDays)) {
      fail("tau_days must lie in [0, 7]");
    }
    if (k > 0 && !(o.tau_days < e.observations[k - 1].tau_days)) {
      fail("tau_days must be strictly decreasing");
    }
  }
}

void SyntheticConfig::validate() const {
  const auto range_ok = [](double a, double b) { return a > 0.0 && a <= b; };
  if (!(cdm_rate > 0.0)) throw ConfigError("cdm_rate must be positive");
  if (!range_ok(sigma7_min, sigma7_max) || !range_ok(sigma0_min, sigma0_max) ||
      !range_ok(jump_min, jump_max)) {
    throw ConfigError("synthetic ranges must be positive with min <= max");
  }
  if (!(jitter_std >= 0.0)) throw ConfigError("jitter_std must be non-negative");
  if (!(jump_prob >= 0.0 && jump_prob <= 1.0)) {
    throw ConfigError("jump_prob must lie in [0, 1]");
  }
}

double synthetic_curve(double tau_days, double sigma7, double sigma0) {
  return sigma0 * std::pow(sigma7 / sigma0, tau_days / kHorizonDays);
}

namespace {

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

std::string event_name(std::size_t k) {
  std::ostringstream os;
  os << 'E' << std::setw(5) << std::setfill('0') << k;
  return os.str();
}

std::optional<ConjunctionEvent> draw_event(const SyntheticConfig& cfg,
                                           std::mt19937_64& rng) {
  const double sigma7 = log_uniform(rng, cfg.sigma7_min, cfg.sigma7_max);
  const double sigma0 = log_uniform(rng, cfg.sigma0_min, cfg.sigma0_max);

  // Arrival times of a homogeneous Poisson process, as time since day 7.
  std::exponential_distribution<double> gap(cfg.cdm_rate);
  std::vector<Observation> obs;
  for (double elapsed = gap(rng); elapsed <= kHorizonDays; elapsed += gap(rng)) {
    obs.push_back({kHorizonDays - elapsed, 0.0});
  }

  std::normal_distribution<double> jitter(0.0, cfg.jitter_std > 0 ? cfg.jitter_std : 1.0);
  for (auto& o : obs) {
    o.sigma_m = synthetic_curve(o.tau_days, sigma7, sigma0);
    if (cfg.jitter_std > 0.0) o.sigma_m *= std::exp(jitter(rng));
  }

  std::bernoulli_distribution jump(cfg.jump_prob);
  if (jump(rng)) {
    std::uniform_real_distribution<double> when(0.0, kHorizonDays);
    const double tau_jump = when(rng);
    const double factor = log_uniform(rng, cfg.jump_min, cfg.jump_max);
    for (auto& o : obs) {
      if (o.tau_days < tau_jump) o.sigma_m *= factor;
    }
  }

  const auto early = std::count_if(obs.begin(), obs.end(),
                                   [](const Observation& o) { return o.tau_days >= 2.0; });
  if (obs.size() < 3 || early < 2) return std::nullopt;
  return ConjunctionEvent{{}, std::move(obs)};
}

}  // namespace

std::vector<ConjunctionEvent> generate_synthetic_events(const SyntheticConfig& cfg) {
  cfg.validate();
  constexpr int kMaxRedraws = 1000;
  std::vector<ConjunctionEvent> events;
  events.reserve(cfg.n_events);
  for (std::size_t k = 0; k < cfg.n_events; ++k) {
    auto rng = make_stream(cfg.seed, StreamTag::kSynthetic, k);
    std::optional<ConjunctionEvent> ev;
    for (int attempt = 0; attempt <= kMaxRedraws && !ev; ++attempt) {
      ev = draw_event(cfg, rng);
    }
    if (!ev) {
      throw DataError("event " + std::to_string(k) + ": no valid draw after " +
                      std::to_string(kMaxRedraws) +
                      " redraws (cdm_rate too low for the 3-observation rule?)");
    }
    ev->event_id = event_name(k);
    validate_event(*ev);
    events.push_back(std::move(*ev));
  }
  return events;
}

Normalizer::Normalizer(double lo, double hi) : lo_(lo), hi_(hi) {
  if (!(hi - lo >= 1e-9) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ConfigError("normalizer needs lo < hi, got lo=" + std::to_string(lo) +
                      " hi=" + std::to_string(hi));
  }
}

Normalizer Normalizer::fit(std::span<const ConjunctionEvent> events) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& e : events) {
    for (const auto& o : e.observations) {
      const double l = std::log10(std::max(o.sigma_m, kFloorMetres));
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
  }
  if (!std::isfinite(lo)) throw ConfigError("cannot fit a normalizer to no data");
  return {lo, hi};
}

double Normalizer::normalize(double metres) const {
  const double l = std::log10(std::max(metres, kFloorMetres));
  return 2.0 * (l - lo_) / (hi_ - lo_) - 1.0;
}

double Normalizer::denormalize(double value) const {
  return std::pow(10.0, lo_ + (value + 1.0) * 0.5 * (hi_ - lo_));
}

std::vector<std::pair<std::size_t, std::size_t>> snap_observations(
    std::span<const Observation> observations) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  // Observations run forward in time, so steps are non-decreasing and a
  // collision replaces the previous entry.
  for (std::size_t k = 0; k < observations.size(); ++k) {
    const auto step = nearest_step(observations[k].tau_days);
    if (!step) continue;
    if (!out.empty() && out.back().first == *step) {
      out.back().second = k;
    } else {
      out.emplace_back(*step, k);
    }
  }
  return out;
}

GriddedSeries fill_grid(std::string event_id,
                        std::span<const std::pair<std::size_t, double>> anchors) {
  GriddedSeries g;
  g.event_id = std::move(event_id);
  g.values.assign(kGridLength, 0.0);
  g.obs_mask.assign(kGridLength, 0);
  g.pad_mask.assign(kGridLength, 1);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const auto [step, value] = anchors[a];
    if (step >= kGridLength || (a > 0 && step <= anchors[a - 1].first)) {
      throw std::logic_error("fill_grid: anchors must be strictly increasing");
    }
    g.values[step] = value;
    g.obs_mask[step] = 1;
    g.pad_mask[step] = 0;
    if (a == 0) continue;
    const auto [prev_step, prev_value] = anchors[a - 1];
    const double span = static_cast<double>(step - prev_step);
    for (std::size_t i = prev_step + 1; i < step; ++i) {
      const double w = static_cast<double>(i - prev_step) / span;
      g.values[i] = prev_value + w * (value - prev_value);
      g.pad_mask[i] = 0;
    }
  }
  return g;
}

DatasetSplit split_dataset(std::vector<ConjunctionEvent> events,
                           const SplitFractions& f, std::uint64_t seed) {
  for (double x : {f.train, f.validation, f.test}) {
    if (!(x >= 0.0)) throw ConfigError("split fractions must be non-negative");
  }
  if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const std::size_t n = events.size();
  auto rng = make_stream(seed, StreamTag::kSplit);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Fisher-Yates with explicit draws; std::shuffle's algorithm is
  // implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  const auto take = [n](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_val = take(f.validation), n_test = take(f.test);
  const std::size_t n_train = n - n_val - n_test;
  const auto check = [](double frac, std::size_t size, const char* name) {
    if (frac > 0.0 && size == 0) {
      throw ConfigError(std::string("split leaves the ") + name +
                        " partition empty; add events or raise its fraction");
    }
  };
  check(f.train, n_train, "train");
  check(f.validation, n_val, "validation");
  check(f.test, n_test, "test");

  DatasetSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& ev = events[order[i]];
    if (i < n_train) {
      s.train.push_back(std::move(ev));
    } else if (i < n_train + n_val) {
      s.validation.push_back(std::move(ev));
    } else {
      s.test.push_back(std::move(ev));
    }
  }
  return s;
}

namespace {

constexpr const char* kHeader = "event_id,tau_days,sigma_t_m";

}  // namespace

void write_events(std::ostream& out, std::span<const ConjunctionEvent> events) {
  out << kHeader << '\n';
  for (const auto& e : events) {
    for (const auto& o : e.observations) {
      out << e.event_id << ',';
      put_double(out, o.tau_days);
      out << ',';
      put_double(out, o.sigma_m);
      out << '\n';
    }
  }
}

void write_events(const std::filesystem::path& path,
                  std::span<const ConjunctionEvent> events) {
  auto out = open_for_write(path);
  write_events(out, events);
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<ConjunctionEvent> read_events(std::istream& in, const std::string& source) {
  std::vector<ConjunctionEvent> events;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) return events;
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw DataError(source + ":1: expected header '" + kHeader + "'");
  }
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw DataError(where + ": expected 3 comma-separated fields");
    }
    const std::string id = line.substr(0, c1);
    if (id.empty()) throw DataError(where + ": empty event_id");
    const std::string_view view(line);
    const double tau = parse_double(view.substr(c1 + 1, c2 - c1 - 1), where);
    const double sigma = parse_double(view.substr(c2 + 1), where);
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw DataError(where + ": sigma_t_m must be positive, got " +
                      std::string(view.substr(c2 + 1)));
    }
    if (!(tau >= 0.0 && tau <= kHorizonDays)) {
      throw DataError(where + ": tau_days must lie in [0, 7]");
    }
    if (events.empty() || events.back().event_id != id) {
      if (std::find(seen.begin(), seen.end(), id) != seen.end()) {
        throw DataError(where + ": rows of event " + id + " are not contiguous");
      }
      seen.push_back(id);
      events.push_back({id, {}});
    } else if (!(tau < events.back().observations.back().tau_days)) {
      throw DataError(where + ": tau_days not strictly decreasing within event " + id);
    }
    events.back().observations.push_back({tau, sigma});
  }
  for (const auto& e : events) {
    try {
      validate_event(e);
    } catch (const DataError& err) {
      throw DataError(source + ": " + err.what());
    }
  }
  return events;
}

std::vector<ConjunctionEvent> read_events(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return read_events(in, path.string());
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "ndif-dataset";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["partitions"] = {
      {"train", {{"file", m.train_file.generic_string()}, {"events", m.n_train}}},
      {"validation",
       {{"file", m.validation_file.generic_string()}, {"events", m.n_validation}}},
      {"test", {{"file", m.test_file.generic_string()}, {"events", m.n_test}}},
  };
  j["normalizer"] = {{"transform", "log10-affine"},
                     {"lo", m.normalizer.lo()},
                     {"hi", m.normalizer.hi()},
                     {"floor_m", Normalizer::kFloorMetres}};
  auto out = open_for_write(path);
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "ndif-dataset") throw DataError("not a dataset manifest");
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("partitions");
    m.train_file = p.at("train").at("file").get<std::string>();
    m.validation_file = p.at("validation").at("file").get<std::string>();
    m.test_file = p.at("test").at("file").get<std::string>();
    m.n_train = p.at("train").at("events").get<std::size_t>();
    m.n_validation = p.at("validation").at("events").get<std::size_t>();
    m.n_test = p.at("test").at("events").get<std::size_t>();
    m.normalizer = Normalizer(j.at("normalizer").at("lo").get<double>(),
                              j.at("normalizer").at("hi").get<double>());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace ndif
