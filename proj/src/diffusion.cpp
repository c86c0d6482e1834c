// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/diffusion.hpp"

#include <cmath>
#include <string>

#include "ndif/ops.hpp"

namespace ndif {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start,
                                    double beta_end) {
  if (steps < 1) {
    throw ConfigError("noise schedule needs at least one step, got " +
                      std::to_string(steps));
  }
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("noise schedule needs 0 < beta_start <= beta_end < 1, got " +
                      std::to_string(beta_start) + ", " +
                      std::to_string(beta_end));
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    betas[t] = steps == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) *
                                             static_cast<double>(t) /
                                             static_cast<double>(steps - 1);
  }
  auto schedule = from_betas(std::move(betas));
  schedule.config_ = {steps, beta_start, beta_end};
  return schedule;
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("noise schedule needs at least one beta");
  NoiseSchedule s;
  s.alphas_.reserve(betas.size());
  s.alpha_bars_.reserve(betas.size());
  double running = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) {
      throw ConfigError("every beta must lie in (0, 1), got " +
                        std::to_string(b));
    }
    const double a = 1.0 - b;
    running *= a;
    s.alphas_.push_back(a);
    s.alpha_bars_.push_back(running);
  }
  s.config_ = {static_cast<int>(betas.size()), betas.front(), betas.back()};
  s.betas_ = std::move(betas);
  return s;
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps()) {
    throw ConfigError("diffusion step " + std::to_string(t) +
                      " outside 1.." + std::to_string(steps()));
  }
  return static_cast<std::size_t>(t - 1);
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  return alpha_bars_[index(t)];
}

double NoiseSchedule::posterior_variance(int t) const {
  return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

Tensor affine(const Tensor& x, double a, const Tensor& y, double b) {
  Tensor out = Tensor::empty(x.shape());
  auto o = out.mutable_data();
  const auto xs = x.data();
  const auto ys = y.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xs[i] + b * ys[i];
  return out;
}

}  // namespace

Tensor forward_step(const Tensor& x_prev, int t, const NoiseSchedule& schedule,
                    const Tensor& noise) {
  require_same_shape(x_prev, noise, "forward_step");
  const double beta = schedule.beta(t);
  return affine(x_prev, std::sqrt(1.0 - beta), noise, std::sqrt(beta));
}

Tensor q_sample(const Tensor& x0, int t, const NoiseSchedule& schedule,
                const Tensor& noise) {
  require_same_shape(x0, noise, "q_sample");
  const double ab = schedule.alpha_bar(t);
  return affine(x0, std::sqrt(ab), noise, std::sqrt(1.0 - ab));
}

Tensor q_sample_batch(const Tensor& x0, std::span<const int> steps,
                      const NoiseSchedule& schedule, const Tensor& noise) {
  require_same_shape(x0, noise, "q_sample_batch");
  const std::size_t batch = x0.dim(0);
  if (steps.size() != batch) {
    throw ShapeError("q_sample_batch: " + std::to_string(steps.size()) +
                     " steps for batch of " + std::to_string(batch));
  }
  const std::size_t row = x0.numel() / batch;
  Tensor out = Tensor::empty(x0.shape());
  auto o = out.mutable_data();
  const auto xs = x0.data();
  const auto ns = noise.data();
  for (std::size_t n = 0; n < batch; ++n) {
    const double ab = schedule.alpha_bar(steps[n]);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    for (std::size_t i = n * row; i < (n + 1) * row; ++i) {
      o[i] = a * xs[i] + b * ns[i];
    }
  }
  return out;
}

Tensor noise_prediction_loss(Graph& g, const Denoiser& denoiser,
                             const Tensor& x0, std::span<const int> steps,
                             const NoiseSchedule& schedule,
                             const Tensor& noise) {
  const Tensor x_t = q_sample_batch(x0, steps, schedule, noise);
  const Tensor eps_hat = denoiser.predict_noise(g, x_t, steps);
  return ops::mse_loss(g, eps_hat, noise);
}

Tensor training_loss(Graph& g, const Denoiser& denoiser, const Tensor& x0,
                     const NoiseSchedule& schedule, std::mt19937_64& rng) {
  const std::size_t batch = x0.dim(0);
  std::uniform_int_distribution<int> pick(1, schedule.steps());
  std::vector<int> steps(batch);
  for (auto& t : steps) t = pick(rng);
  const Tensor noise = Tensor::randn(x0.shape(), rng);
  return noise_prediction_loss(g, denoiser, x0, steps, schedule, noise);
}

Tensor posterior_mean(const Tensor& x_t, int t, const NoiseSchedule& schedule,
                      const Tensor& eps_hat) {
  require_same_shape(x_t, eps_hat, "posterior_mean");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  return affine(x_t, inv_sqrt_alpha, eps_hat, -coef * inv_sqrt_alpha);
}

Tensor p_sample_step(const Denoiser& denoiser, const Tensor& x_t, int t,
                     const NoiseSchedule& schedule, const Tensor& noise,
                     const ReverseOptions& options) {
  require_same_shape(x_t, noise, "p_sample_step");
  const std::vector<int> steps(x_t.dim(0), t);
  Graph g = Graph::inference();
  const Tensor eps_hat = denoiser.predict_noise(g, x_t, steps);
  Tensor mean = posterior_mean(x_t, t, schedule, eps_hat);
  if (t == 1 || options.deterministic) return mean;
  const double sigma = std::sqrt(schedule.posterior_variance(t));
  auto m = mean.mutable_data();
  const auto ns = noise.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] += sigma * ns[i];
  return mean;
}

Tensor sample_unconditional(const Denoiser& denoiser,
                            const NoiseSchedule& schedule, std::size_t length,
                            std::size_t batch, std::mt19937_64& rng,
                            const ReverseOptions& options) {
  denoiser.check_length(length);
  const Shape shape{batch, 1, length};
  Tensor x = Tensor::randn(shape, rng);
  for (int t = schedule.steps(); t >= 1; --t) {
    const Tensor noise = Tensor::randn(shape, rng);
    x = p_sample_step(denoiser, x, t, schedule, noise, options);
  }
  return x;
}

}  // namespace ndif
