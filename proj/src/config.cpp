// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ndif/textio.hpp"

namespace ndif {

namespace {

using json = nlohmann::ordered_json;

const char* point_name(PointEstimate p) {
  return p == PointEstimate::kMedian ? "median" : "mean";
}

// Walks a JSON object, handing each key to a setter; anything not consumed
// is an error.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <class T>
  Section& get(const char* key, T& out) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<T>();
      } catch (const json::exception&) {
        throw ConfigError(path_ + "." + key + " has the wrong type");
      }
    }
    return *this;
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void done() const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
        throw ConfigError("unknown configuration key " + path_ + "." + k);
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace

void RunConfig::finalize() {
  synthetic.seed = seed;
  train.seed = seed;
  forecast.seed = seed;
  synthetic.validate();
  unet.validate();
  train.validate();
  forecast.validate();
  if (schedule.steps < 1) throw ConfigError("schedule.steps must be at least 1");
  cutoff_index_for(eval.cutoff_days);
  if (!(eval.tolerance_hours >= 0.0)) throw ConfigError("eval.tolerance_hours must be >= 0");
}

void merge_config_json(RunConfig& c, const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  try {
    Section root(j, "config");
    root.get("seed", c.seed);
    if (auto* s = root.child("synthetic")) {
      Section(*s, "synthetic")
          .get("n_events", c.synthetic.n_events)
          .get("cdm_rate", c.synthetic.cdm_rate)
          .get("sigma7_min", c.synthetic.sigma7_min)
          .get("sigma7_max", c.synthetic.sigma7_max)
          .get("sigma0_min", c.synthetic.sigma0_min)
          .get("sigma0_max", c.synthetic.sigma0_max)
          .get("jitter_std", c.synthetic.jitter_std)
          .get("jump_prob", c.synthetic.jump_prob)
          .get("jump_min", c.synthetic.jump_min)
          .get("jump_max", c.synthetic.jump_max)
          .done();
    }
    if (auto* s = root.child("split")) {
      Section(*s, "split")
          .get("train", c.split.train)
          .get("validation", c.split.validation)
          .get("test", c.split.test)
          .done();
    }
    if (auto* s = root.child("unet")) {
      Section(*s, "unet")
          .get("base_channels", c.unet.base_channels)
          .get("channel_mults", c.unet.channel_mults)
          .get("res_blocks_per_level", c.unet.res_blocks_per_level)
          .get("groups", c.unet.groups)
          .get("time_embed_dim", c.unet.time_embed_dim)
          .done();
    }
    if (auto* s = root.child("schedule")) {
      Section(*s, "schedule")
          .get("steps", c.schedule.steps)
          .get("beta_start", c.schedule.beta_start)
          .get("beta_end", c.schedule.beta_end)
          .done();
    }
    if (auto* s = root.child("train")) {
      Section(*s, "train")
          .get("epochs", c.train.epochs)
          .get("batch_size", c.train.batch_size)
          .get("learning_rate", c.train.learning_rate)
          .done();
    }
    if (auto* s = root.child("forecast")) {
      std::string point = point_name(c.forecast.point);
      Section(*s, "forecast")
          .get("num_samples", c.forecast.num_samples)
          .get("resample_count", c.forecast.resample_count)
          .get("jump_length", c.forecast.jump_length)
          .get("point", point)
          .get("q_low", c.forecast.q_low)
          .get("q_high", c.forecast.q_high)
          .get("batch", c.forecast.batch)
          .done();
      if (point == "median") {
        c.forecast.point = PointEstimate::kMedian;
      } else if (point == "mean") {
        c.forecast.point = PointEstimate::kMean;
      } else {
        throw ConfigError("forecast.point must be \"median\" or \"mean\"");
      }
    }
    if (auto* s = root.child("eval")) {
      Section(*s, "eval")
          .get("cutoff_days", c.eval.cutoff_days)
          .get("tolerance_hours", c.eval.tolerance_hours)
          .done();
    }
    root.done();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

void merge_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_config_json(cfg, ss.str(), path.string());
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  const auto& s = c.synthetic;
  j["synthetic"] = {{"n_events", s.n_events},       {"cdm_rate", s.cdm_rate},
                    {"sigma7_min", s.sigma7_min},   {"sigma7_max", s.sigma7_max},
                    {"sigma0_min", s.sigma0_min},   {"sigma0_max", s.sigma0_max},
                    {"jitter_std", s.jitter_std},   {"jump_prob", s.jump_prob},
                    {"jump_min", s.jump_min},       {"jump_max", s.jump_max}};
  j["split"] = {{"train", c.split.train},
                {"validation", c.split.validation},
                {"test", c.split.test}};
  j["unet"] = {{"base_channels", c.unet.base_channels},
               {"channel_mults", c.unet.channel_mults},
               {"res_blocks_per_level", c.unet.res_blocks_per_level},
               {"groups", c.unet.groups},
               {"time_embed_dim", c.unet.time_embed_dim}};
  j["schedule"] = {{"steps", c.schedule.steps},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate}};
  const auto& f = c.forecast;
  j["forecast"] = {{"num_samples", f.num_samples}, {"resample_count", f.resample_count},
                   {"jump_length", f.jump_length}, {"point", point_name(f.point)},
                   {"q_low", f.q_low},             {"q_high", f.q_high},
                   {"batch", f.batch}};
  j["eval"] = {{"cutoff_days", c.eval.cutoff_days},
               {"tolerance_hours", c.eval.tolerance_hours}};
  return j.dump(2) + "\n";
}

void write_config(const std::filesystem::path& path, const RunConfig& cfg) {
  auto out = open_for_write(path);
  out << config_to_json(cfg);
}

}  // namespace ndif
