// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

// ndif: command-line front end. Primary outputs go to files; progress and
// timings go to stderr only.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "ndif/checkpoint.hpp"
#include "ndif/config.hpp"
#include "ndif/eval.hpp"
#include "ndif/plot.hpp"
#include "ndif/random.hpp"
#include "ndif/runtime.hpp"
#include "ndif/textio.hpp"

namespace fs = std::filesystem;
using namespace ndif;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumeric = 4 };

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Flags shared by every subcommand. Values are applied over the config file
// only when given.
struct Common {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "JSON config file (defaults < file < flags)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Master seed (falls back to $NDIF_SEED, then 7)");
}

RunConfig base_config(const Common& c) {
  RunConfig cfg;
  if (const char* env = std::getenv("NDIF_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (env[used] != '\0') throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(std::string("NDIF_SEED is not an unsigned integer: ") + env);
    }
  }
  if (!c.config_file.empty()) merge_config_file(cfg, c.config_file);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

template <class T>
void set_if(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

// Output directories: created if absent, refused if non-empty without
// --force.
void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw ConfigError(dir.string() + " exists and is not a directory");
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw ConfigError(dir.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_for_write(path);
  out << text;
}

// --- dataset access -------------------------------------------------------

struct Dataset {
  fs::path dir;
  DatasetManifest manifest;

  static Dataset open(const fs::path& dir) {
    return {dir, read_manifest(dir / "manifest.json")};
  }
  std::vector<ConjunctionEvent> partition(const std::string& name) const {
    if (name == "train") return read_events(dir / manifest.train_file);
    if (name == "validation") return read_events(dir / manifest.validation_file);
    if (name == "test") return read_events(dir / manifest.test_file);
    throw ConfigError("unknown partition '" + name + "' (train, validation, test)");
  }
};

const ConjunctionEvent& find_event(const std::vector<ConjunctionEvent>& events,
                                   const std::string& id) {
  for (const auto& e : events) {
    if (e.event_id == id) return e;
  }
  throw DataError("unknown event id " + id);
}

struct Model {
  Checkpoint ckpt;
  UNet net;
  NoiseSchedule schedule;

  explicit Model(const fs::path& path)
      : ckpt(load_checkpoint(path)),
        net(ckpt.unet, ckpt.params),
        schedule(NoiseSchedule::linear(ckpt.schedule)) {}
};

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  Common common;
  std::string out = "data";
  std::optional<std::size_t> n_events;
};

int gen_data(const GenDataArgs& a) {
  RunConfig cfg = base_config(a.common);
  set_if(a.n_events, cfg.synthetic.n_events);
  if (cfg.synthetic.n_events == 0) throw ConfigError("--n-events must be at least 1");
  cfg.finalize();
  prepare_dir(a.out, a.common.force);

  auto events = generate_synthetic_events(cfg.synthetic);
  auto split = split_dataset(std::move(events), cfg.split, cfg.seed);
  DatasetManifest m;
  m.train_file = "train.csv";
  m.validation_file = "validation.csv";
  m.test_file = "test.csv";
  m.normalizer = Normalizer::fit(split.train);
  m.n_train = split.train.size();
  m.n_validation = split.validation.size();
  m.n_test = split.test.size();
  m.seed = cfg.seed;
  const fs::path dir = a.out;
  write_events(dir / m.train_file, split.train);
  write_events(dir / m.validation_file, split.validation);
  write_events(dir / m.test_file, split.test);
  write_manifest(dir / "manifest.json", m);
  write_config(dir / "config.json", cfg);
  std::cout << "wrote " << m.n_train << " train, " << m.n_validation << " validation, "
            << m.n_test << " test events to " << dir.string() << "\n";
  return kOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data = "data";
  std::string out = "run";
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::size_t> base_channels;
  int save_every = 10;
  bool resume = false;
  bool quiet = false;
};

int train(const TrainArgs& a) {
  RunConfig cfg = base_config(a.common);
  set_if(a.epochs, cfg.train.epochs);
  set_if(a.batch_size, cfg.train.batch_size);
  set_if(a.learning_rate, cfg.train.learning_rate);
  set_if(a.base_channels, cfg.unet.base_channels);

  const fs::path dir = a.out;
  const fs::path model_path = dir / "model.ndif";
  std::optional<Checkpoint> prior;
  if (a.resume) {
    prior = load_checkpoint(model_path);
    // The architecture and streams are fixed by the checkpoint.
    cfg.seed = prior->seed;
    cfg.unet = prior->unet;
    cfg.schedule = prior->schedule;
  }
  cfg.finalize();
  if (!a.resume) prepare_dir(dir, a.common.force);

  const auto data = Dataset::open(a.data);
  const Normalizer norm = prior ? prior->normalizer : data.manifest.normalizer;
  std::vector<GriddedSeries> series;
  std::size_t skipped = 0;
  for (const auto& e : data.partition("train")) {
    try {
      series.push_back(grid_event(e, norm));
    } catch (const DataError&) {
      ++skipped;
    }
  }
  if (skipped) std::cerr << "skipped " << skipped << " events with < 2 grid steps\n";

  const auto schedule = NoiseSchedule::linear(cfg.schedule);
  UNet net = prior ? UNet(cfg.unet, prior->params) : UNet(cfg.unet, cfg.seed);
  Adam opt(net.params().tensors(), {.learning_rate = cfg.train.learning_rate});
  std::int64_t done = 0;
  if (prior) {
    done = prior->epochs_done;
    if (prior->optimizer) {
      opt.restore(prior->optimizer->step_count, prior->optimizer->m, prior->optimizer->v);
    }
  }

  const auto save = [&](std::int64_t epochs_done) {
    Checkpoint c;
    c.unet = cfg.unet;
    c.schedule = cfg.schedule;
    c.normalizer = norm;
    c.seed = cfg.seed;
    c.epochs_done = epochs_done;
    c.params = net.params();
    c.optimizer = OptimizerState{opt.step_count(), opt.first_moments(), opt.second_moments()};
    save_checkpoint(model_path, c);
  };

  write_config(dir / "config.json", cfg);
  if (!prior) write_loss_log(dir / "loss.csv", {}, false);
  const auto t0 = Clock::now();
  std::vector<EpochLog> pending;
  train_epochs(net, opt, schedule, series, cfg.train, done, [&](const EpochLog& e) {
    pending.push_back(e);
    if (!a.quiet) {
      std::fprintf(stderr, "epoch %4lld/%d  step %7lld  loss %.5f  %.0fs\n",
                   static_cast<long long>(e.epoch), cfg.train.epochs,
                   static_cast<long long>(e.step), e.mean_loss, seconds_since(t0));
    }
    if (a.save_every > 0 && e.epoch % a.save_every == 0) {
      write_loss_log(dir / "loss.csv", pending, true);
      pending.clear();
      save(e.epoch);
    }
  });
  write_loss_log(dir / "loss.csv", pending, true);
  save(std::max<std::int64_t>(done, cfg.train.epochs));
  std::cout << "trained " << series.size() << " series to epoch "
            << std::max<std::int64_t>(done, cfg.train.epochs) << " (" << opt.step_count()
            << " steps); model at " << model_path.string() << "\n";
  return kOk;
}

// --- sample -------------------------------------------------------------------

struct SampleArgs {
  Common common;
  std::string model = "run/model.ndif";
  std::string out = "samples.csv";
  std::string svg;
  std::size_t count = 8;
};

int sample(const SampleArgs& a) {
  RunConfig cfg = base_config(a.common);
  cfg.finalize();
  if (a.count < 1) throw ConfigError("--count must be at least 1");
  const Model m(a.model);
  const std::size_t L = m.ckpt.unet.grid_length;
  auto rng = make_stream(cfg.seed, StreamTag::kSampling);
  const Tensor x = sample_unconditional(m.net, m.schedule, L, a.count, rng);
  std::vector<double> metres;
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError("sampler produced a non-finite value");
    metres.push_back(m.ckpt.normalizer.denormalize(v));
  }
  auto out = open_for_write(a.out);
  for (std::size_t i = 0; i < L; ++i) out << (i ? "," : "") << "step_" << i;
  out << '\n';
  for (std::size_t k = 0; k < a.count; ++k) {
    for (std::size_t i = 0; i < L; ++i) {
      if (i) out << ',';
      put_double(out, metres[k * L + i]);
    }
    out << '\n';
  }
  if (!a.svg.empty()) {
    write_text(a.svg, samples_svg(metres, a.count, "unconditional samples"));
  }
  std::cout << "wrote " << a.count << " samples to " << a.out << "\n";
  return kOk;
}

// --- forecast / eval / plot ---------------------------------------------------

struct ForecastFlags {
  std::string model = "run/model.ndif";
  std::string data = "data";
  std::string partition = "test";
  std::optional<double> cutoff_days;
  std::optional<std::size_t> num_samples;
  std::optional<int> resample_count;
  std::optional<int> jump_length;
  std::size_t threads = 1;
};

void add_forecast_flags(CLI::App* cmd, ForecastFlags& f) {
  cmd->add_option("--model", f.model, "Checkpoint file")->capture_default_str();
  cmd->add_option("--data", f.data, "Dataset directory (holds manifest.json)")
      ->capture_default_str();
  cmd->add_option("--partition", f.partition, "train, validation or test")
      ->capture_default_str();
  cmd->add_option("--cutoff-days", f.cutoff_days,
                  "Forecast origin in days before TCA, in (1/24, 7) [2]");
  cmd->add_option("--num-samples", f.num_samples, "Trajectories per event [32]");
  cmd->add_option("--resample-count", f.resample_count,
                  "Resampling repeats per segment; 1 disables [1]");
  cmd->add_option("--jump-length", f.jump_length, "Resampling segment length [1]");
  cmd->add_option("--threads", f.threads,
                  "Worker threads for trajectories (results do not depend on it)")
      ->capture_default_str();
}

void apply_forecast_flags(const ForecastFlags& f, RunConfig& cfg) {
  set_if(f.cutoff_days, cfg.eval.cutoff_days);
  set_if(f.num_samples, cfg.forecast.num_samples);
  set_if(f.resample_count, cfg.forecast.resample_count);
  set_if(f.jump_length, cfg.forecast.jump_length);
  cfg.forecast.threads = f.threads;
  cfg.finalize();
}

struct ForecastArgs {
  Common common;
  ForecastFlags f;
  std::string event_id;
  std::string out = "forecast";
  bool svg = false;
};

int forecast_cmd(const ForecastArgs& a) {
  RunConfig cfg = base_config(a.common);
  apply_forecast_flags(a.f, cfg);
  const auto events = Dataset::open(a.f.data).partition(a.f.partition);
  const auto& event = find_event(events, a.event_id);
  const Model m(a.f.model);
  const DiffusionForecaster fc(m.net, m.schedule, m.ckpt.normalizer, cfg.forecast);
  const auto r = fc.run(event, cfg.eval.cutoff_days);

  fs::create_directories(a.out);
  const fs::path dir = a.out;
  write_forecast(dir / ("forecast_" + event.event_id + ".csv"), r);
  write_trajectories(dir / ("trajectories_" + event.event_id + ".csv"), r);
  if (a.svg) {
    write_text(dir / ("plot_" + event.event_id + ".svg"),
               forecast_svg(event, cfg.eval.cutoff_days,
                            baseline_forecast(event, cfg.eval.cutoff_days), r));
  }
  std::cout << "forecast " << event.event_id << " from " << format_double(cfg.eval.cutoff_days)
            << " days with " << r.num_samples << " trajectories -> " << dir.string() << "\n";
  return kOk;
}

struct EvalArgs {
  Common common;
  ForecastFlags f;
  std::string out = "eval";
  std::optional<double> tolerance_hours;
  std::size_t limit = 0;
  bool per_event = false;
  bool quiet = false;
};

int eval_cmd(const EvalArgs& a) {
  RunConfig cfg = base_config(a.common);
  set_if(a.tolerance_hours, cfg.eval.tolerance_hours);
  apply_forecast_flags(a.f, cfg);
  auto events = Dataset::open(a.f.data).partition(a.f.partition);
  if (a.limit > 0 && events.size() > a.limit) events.resize(a.limit);
  const Model m(a.f.model);
  const BaselineForecaster base;
  const DiffusionForecaster diff(m.net, m.schedule, m.ckpt.normalizer, cfg.forecast);
  const Forecaster* models[] = {&base, &diff};

  const auto t0 = Clock::now();
  const auto ev = evaluate(models, events, cfg.eval.cutoff_days, cfg.eval.tolerance_hours,
                           [&](std::size_t done, std::size_t total) {
                             if (!a.quiet && (done % 10 == 0 || done == total)) {
                               std::fprintf(stderr, "evaluated %zu/%zu events  %.0fs\n", done,
                                            total, seconds_since(t0));
                             }
                           });

  fs::create_directories(a.out);
  const fs::path dir = a.out;
  write_metrics(dir / "metrics.csv", ev);
  if (a.per_event) write_event_metrics(dir / "events.csv", ev);
  nlohmann::ordered_json s;
  s["cutoff_days"] = cfg.eval.cutoff_days;
  s["tolerance_hours"] = cfg.eval.tolerance_hours;
  s["events_total"] = ev.events_total;
  s["events_rejected"] = ev.events_rejected;
  s["events_without_matches"] = ev.events_without_matches;
  for (const auto& r : ev.reports) {
    s["models"][r.model] = {{"events", r.n_events}, {"samples", r.n},
                            {"mae_m", r.mae},        {"rmse_m", r.rmse}};
    if (r.band_coverage) s["models"][r.model]["band_coverage"] = *r.band_coverage;
  }
  write_text(dir / "summary.json", s.dump(2) + "\n");
  std::cout << format_metrics_table(ev);
  return kOk;
}

struct PlotArgs {
  Common common;
  ForecastFlags f;
  std::vector<std::string> event_ids;
  std::size_t first = 3;
  std::string out = "plots";
};

int plot_cmd(const PlotArgs& a) {
  RunConfig cfg = base_config(a.common);
  apply_forecast_flags(a.f, cfg);
  const auto events = Dataset::open(a.f.data).partition(a.f.partition);
  std::vector<const ConjunctionEvent*> chosen;
  for (const auto& id : a.event_ids) chosen.push_back(&find_event(events, id));
  if (a.event_ids.empty()) {
    for (std::size_t i = 0; i < events.size() && chosen.size() < a.first; ++i) {
      chosen.push_back(&events[i]);
    }
  }
  const Model m(a.f.model);
  const DiffusionForecaster fc(m.net, m.schedule, m.ckpt.normalizer, cfg.forecast);
  fs::create_directories(a.out);
  const fs::path dir = a.out;
  const double cutoff = cfg.eval.cutoff_days;
  for (const auto* e : chosen) {
    const auto r = fc.run(*e, cutoff);
    const auto path = dir / ("plot_" + e->event_id + ".svg");
    write_text(path, forecast_svg(*e, cutoff, baseline_forecast(*e, cutoff), r));
    std::cout << "wrote " << path.string() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"ndif: diffusion-model forecasts of conjunction position uncertainty"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ndif 0.1.0");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and split it");
  add_common(gen, gd.common);
  gen->add_option("--out", gd.out, "Output directory")->capture_default_str();
  gen->add_option("--n-events", gd.n_events, "Number of events to generate [1400]");
  gen->add_flag("--force", gd.common.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train the denoiser on the training partition");
  add_common(trn, tr.common);
  trn->add_option("--data", tr.data, "Dataset directory")->capture_default_str();
  trn->add_option("--out", tr.out, "Run directory (model.ndif, loss.csv, config.json)")
      ->capture_default_str();
  trn->add_option("--epochs", tr.epochs, "Total epochs, counting resumed ones [200]");
  trn->add_option("--batch-size", tr.batch_size, "Minibatch size [16]");
  trn->add_option("--lr", tr.learning_rate, "Adam learning rate [2e-4]");
  trn->add_option("--base-channels", tr.base_channels, "U-Net width [16]");
  trn->add_option("--save-every", tr.save_every, "Checkpoint every N epochs; 0 = end only")
      ->capture_default_str();
  trn->add_flag("--resume", tr.resume, "Continue from <out>/model.ndif");
  trn->add_flag("--quiet", tr.quiet, "No per-epoch progress");
  trn->add_flag("--force", tr.common.force, "Overwrite a non-empty run directory");

  SampleArgs sa;
  auto* smp = app.add_subcommand("sample", "Draw unconditional samples from a model");
  add_common(smp, sa.common);
  smp->add_option("--model", sa.model, "Checkpoint file")->capture_default_str();
  smp->add_option("--count", sa.count, "Number of series")->capture_default_str();
  smp->add_option("--out", sa.out, "Output CSV (one row per series)")->capture_default_str();
  smp->add_option("--svg", sa.svg, "Also write a line plot here");

  ForecastArgs fa;
  auto* fct = app.add_subcommand("forecast", "Forecast one event from a cutoff");
  add_common(fct, fa.common);
  add_forecast_flags(fct, fa.f);
  fct->add_option("--event-id", fa.event_id, "Event to forecast")->required();
  fct->add_option("--out", fa.out, "Output directory")->capture_default_str();
  fct->add_flag("--svg", fa.svg, "Also write plot_<id>.svg");

  EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "Score diffusion and baseline on a partition");
  add_common(evl, ea.common);
  add_forecast_flags(evl, ea.f);
  evl->add_option("--out", ea.out, "Output directory (metrics.csv, summary.json)")
      ->capture_default_str();
  evl->add_option("--tolerance-hours", ea.tolerance_hours,
                  "Max distance between an observation and its grid step [0.5]");
  evl->add_option("--limit", ea.limit, "Score only the first N events; 0 = all")
      ->capture_default_str();
  evl->add_flag("--per-event", ea.per_event, "Also write events.csv");
  evl->add_flag("--quiet", ea.quiet, "No progress output");

  PlotArgs pa;
  auto* plt = app.add_subcommand("plot", "Render forecast plots as SVG");
  add_common(plt, pa.common);
  add_forecast_flags(plt, pa.f);
  plt->add_option("--event-id", pa.event_ids, "Event(s) to plot (repeatable)");
  plt->add_option("--first", pa.first, "Without --event-id, plot the first N events")
      ->capture_default_str();
  plt->add_option("--out", pa.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_data(gd);
    if (*trn) return train(tr);
    if (*smp) return sample(sa);
    if (*fct) return forecast_cmd(fa);
    if (*evl) return eval_cmd(ea);
    if (*plt) return plot_cmd(pa);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
