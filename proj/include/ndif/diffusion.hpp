// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <span>
#include <vector>

#include "ndif/tensor.hpp"

namespace ndif {

struct ScheduleConfig {
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.25;
};

/// Variance schedule of the forward chain.
///
/// Steps are 1-based: beta(t), alpha(t), alpha_bar(t) for t in 1..T, with
/// alpha_bar(0) == 1 so that noising "to step 0" is the identity.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);
  static NoiseSchedule linear(const ScheduleConfig& cfg) {
    return linear(cfg.steps, cfg.beta_start, cfg.beta_end);
  }
  // Arbitrary betas, each in (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(index(t)); }
  double alpha(int t) const { return alphas_.at(index(t)); }
  double alpha_bar(int t) const;
  // Variance of q(x_{t-1} | x_t, x_0); zero at t = 1.
  double posterior_variance(int t) const;

  std::span<const double> betas() const { return betas_; }
  std::span<const double> alphas() const { return alphas_; }
  std::span<const double> alpha_bars() const { return alpha_bars_; }

  const ScheduleConfig& config() const { return config_; }

 private:
  std::size_t index(int t) const;

  ScheduleConfig config_;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

/// Anything that predicts the injected noise from a noised batch.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  // x_t [B, 1, L], one step index per batch row -> eps_hat [B, 1, L].
  virtual Tensor predict_noise(Graph& g, const Tensor& x_t,
                               std::span<const int> steps) const = 0;
  // Throws ConfigError if the network cannot process series of this length.
  virtual void check_length(std::size_t /*length*/) const {}
};

// One step of the forward chain: sqrt(1 - beta_t) x + sqrt(beta_t) noise.
Tensor forward_step(const Tensor& x_prev, int t, const NoiseSchedule& schedule,
                    const Tensor& noise);

// Closed-form marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise, t in 0..T.
Tensor q_sample(const Tensor& x0, int t, const NoiseSchedule& schedule,
                const Tensor& noise);

// Per-row variant of q_sample for a batch [B, ...] with one step per row.
Tensor q_sample_batch(const Tensor& x0, std::span<const int> steps,
                      const NoiseSchedule& schedule, const Tensor& noise);

// Epsilon-prediction loss for explicit steps and noise.
Tensor noise_prediction_loss(Graph& g, const Denoiser& denoiser,
                             const Tensor& x0, std::span<const int> steps,
                             const NoiseSchedule& schedule,
                             const Tensor& noise);

// Draws t ~ U{1..T} and eps ~ N(0, I) per batch row, then scores the
// denoiser on recovering eps from q_sample(x0, t, eps).
Tensor training_loss(Graph& g, const Denoiser& denoiser, const Tensor& x0,
                     const NoiseSchedule& schedule, std::mt19937_64& rng);

struct ReverseOptions {
  // Drop the sigma_t * noise term at every step.
  bool deterministic = false;
};

// Posterior mean from an epsilon estimate:
// (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t).
Tensor posterior_mean(const Tensor& x_t, int t, const NoiseSchedule& schedule,
                      const Tensor& eps_hat);

// x_{t-1} = mu_theta(x_t, t) + sigma_t noise with sigma_t^2 the posterior
// variance; noise is ignored at t = 1.
Tensor p_sample_step(const Denoiser& denoiser, const Tensor& x_t, int t,
                     const NoiseSchedule& schedule, const Tensor& noise,
                     const ReverseOptions& options = {});

// Ancestral sampling from x_T ~ N(0, I) down to x_0; returns [B, 1, L].
Tensor sample_unconditional(const Denoiser& denoiser,
                            const NoiseSchedule& schedule, std::size_t length,
                            std::size_t batch, std::mt19937_64& rng,
                            const ReverseOptions& options = {});

}  // namespace ndif
