// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/train.hpp"

#include <cmath>
#include <fstream>

#include "ndif/random.hpp"
#include "ndif/textio.hpp"

namespace ndif {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

Tensor stack_series(std::span<const GriddedSeries> series,
                    std::span<const std::size_t> rows) {
  if (rows.empty()) throw ShapeError("stack_series: no rows");
  const std::size_t L = series[rows[0]].values.size();
  std::vector<double> v;
  v.reserve(rows.size() * L);
  for (auto r : rows) {
    if (series[r].values.size() != L) throw ShapeError("stack_series: ragged series");
    v.insert(v.end(), series[r].values.begin(), series[r].values.end());
  }
  return Tensor::from({rows.size(), 1, L}, std::move(v));
}

std::vector<EpochLog> train_epochs(const Denoiser& denoiser, Adam& optimizer,
                                   const NoiseSchedule& schedule,
                                   std::span<const GriddedSeries> data,
                                   const TrainConfig& config, std::int64_t first_epoch,
                                   const EpochFn& on_epoch) {
  config.validate();
  if (data.empty()) throw DataError("no training series");
  optimizer.set_learning_rate(config.learning_rate);
  const std::size_t n = data.size();
  std::vector<EpochLog> log;
  std::vector<std::size_t> order(n);
  for (std::int64_t epoch = first_epoch + 1; epoch <= config.epochs; ++epoch) {
    auto rng = make_stream(config.seed, StreamTag::kTraining,
                           static_cast<std::uint64_t>(epoch));
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < n; first += config.batch_size) {
      const std::size_t rows = std::min(config.batch_size, n - first);
      const Tensor x0 = stack_series(data, std::span(order).subspan(first, rows));
      optimizer.zero_grad();
      Graph g;
      Tensor loss = training_loss(g, denoiser, x0, schedule, rng);
      const double l = loss.item();
      if (!std::isfinite(l)) {
        throw NumericError("non-finite training loss at optimizer step " +
                           std::to_string(optimizer.step_count() + 1) + " (epoch " +
                           std::to_string(epoch) + ")");
      }
      g.backward(loss);
      optimizer.step();
      total += l;
      ++batches;
    }
    log.push_back({epoch, optimizer.step_count(), total / static_cast<double>(batches)});
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

void write_loss_log(const std::filesystem::path& path, std::span<const EpochLog> log,
                    bool append) {
  std::ofstream out;
  if (append && std::filesystem::exists(path)) {
    out.open(path, std::ios::app);
    if (!out) throw DataError("cannot append to " + path.string());
  } else {
    out = open_for_write(path);
    out << "epoch,step,loss\n";
  }
  for (const auto& e : log) {
    out << e.epoch << ',' << e.step << ',';
    put_double(out, e.mean_loss);
    out << '\n';
  }
}

}  // namespace ndif
