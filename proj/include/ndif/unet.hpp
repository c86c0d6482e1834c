// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ndif/diffusion.hpp"
#include "ndif/tensor.hpp"

namespace ndif {

struct UNetConfig {
  std::size_t base_channels = 16;
  std::vector<std::size_t> channel_mults{1, 2, 4};
  std::size_t res_blocks_per_level = 2;
  std::size_t groups = 8;
  std::size_t time_embed_dim = 128;
  std::size_t input_channels = 1;
  std::size_t grid_length = 168;

  // Throws ConfigError on inconsistent sizes.
  void validate() const;
  std::size_t channels_at(std::size_t level) const {
    return base_channels * channel_mults.at(level);
  }
};

/// Ordered, named collection of learnable tensors.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }

  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;
  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

// Sinusoidal step encoding: [2k] = sin(t w_k), [2k+1] = cos(t w_k),
// w_k = 10000^(-2k/dim).
std::vector<double> time_embedding(int t, std::size_t dim);

/// 1D U-Net noise predictor.
///
/// Encoder levels run residual blocks then a stride-2 convolution; one
/// residual block sits at the bottleneck; decoder levels upsample (nearest +
/// conv), concatenate the matching encoder activation and run residual
/// blocks. Every residual block adds a projection of the step embedding.
class UNet : public Denoiser {
 public:
  // Initialises weights from the seeded stream.
  UNet(UNetConfig config, std::uint64_t seed);
  // Wraps existing parameters (e.g. from a checkpoint). Names and shapes
  // must match what the configuration would create.
  UNet(UNetConfig config, ParamStore params);

  Tensor predict_noise(Graph& g, const Tensor& x_t,
                       std::span<const int> steps) const override;
  void check_length(std::size_t length) const override;

  const UNetConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  Tensor res_block(Graph& g, const std::string& prefix, const Tensor& x,
                   const Tensor& temb_act) const;

  UNetConfig config_;
  ParamStore params_;
};

}  // namespace ndif
