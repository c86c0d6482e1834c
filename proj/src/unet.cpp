// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/unet.hpp"

#include <cmath>

#include "ndif/ops.hpp"
#include "ndif/random.hpp"

namespace ndif {

void UNetConfig::validate() const {
  if (base_channels == 0 || groups == 0 || base_channels % groups != 0) {
    throw ConfigError("base_channels (" + std::to_string(base_channels) +
                      ") must be a positive multiple of groups (" +
                      std::to_string(groups) + ")");
  }
  if (channel_mults.empty()) throw ConfigError("channel_mults is empty");
  for (auto m : channel_mults) {
    if (m == 0) throw ConfigError("channel multipliers must be positive");
  }
  if (res_blocks_per_level == 0) {
    throw ConfigError("res_blocks_per_level must be positive");
  }
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0) {
    throw ConfigError("time_embed_dim must be even and positive");
  }
  if (input_channels != 1) {
    throw ConfigError("only single-channel series are supported");
  }
  const std::size_t factor = std::size_t{1} << (channel_mults.size() - 1);
  if (grid_length == 0 || grid_length % factor != 0) {
    throw ConfigError("grid_length " + std::to_string(grid_length) +
                      " must be divisible by " + std::to_string(factor) +
                      " for " + std::to_string(channel_mults.size()) +
                      " resolution levels");
  }
}

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::logic_error("duplicate parameter " + name);
  index_[name] = names_.size();
  names_.push_back(name);
  value.set_requires_grad(true);
  tensors_.push_back(std::move(value));
  return tensors_.back();
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter " + name);
  return tensors_[it->second];
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter " + name);
  return tensors_[it->second];
}

std::vector<Tensor> ParamStore::tensors() const { return tensors_; }

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& t : tensors_) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::vector<double> time_embedding(int t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw ConfigError("time embedding dimension must be even, got " +
                      std::to_string(dim));
  }
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double freq =
        std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    out[2 * k] = std::sin(t * freq);
    out[2 * k + 1] = std::cos(t * freq);
  }
  return out;
}

namespace {

enum class Init { kFanIn, kZero, kOne };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
  std::size_t fan_in = 1;
};

void add_res_block(std::vector<ParamSpec>& out, const std::string& prefix,
                   std::size_t cin, std::size_t cout, std::size_t temb) {
  out.push_back({prefix + ".norm1.gamma", {cin}, Init::kOne});
  out.push_back({prefix + ".norm1.beta", {cin}, Init::kZero});
  out.push_back({prefix + ".conv1.weight", {cout, cin, 3}, Init::kFanIn, cin * 3});
  out.push_back({prefix + ".conv1.bias", {cout}, Init::kZero});
  out.push_back({prefix + ".time.weight", {cout, temb}, Init::kFanIn, temb});
  out.push_back({prefix + ".time.bias", {cout}, Init::kZero});
  out.push_back({prefix + ".norm2.gamma", {cout}, Init::kOne});
  out.push_back({prefix + ".norm2.beta", {cout}, Init::kZero});
  out.push_back({prefix + ".conv2.weight", {cout, cout, 3}, Init::kFanIn, cout * 3});
  out.push_back({prefix + ".conv2.bias", {cout}, Init::kZero});
  if (cin != cout) {
    out.push_back({prefix + ".skip.weight", {cout, cin, 1}, Init::kFanIn, cin});
    out.push_back({prefix + ".skip.bias", {cout}, Init::kZero});
  }
}

std::string level_block(const char* side, std::size_t level, std::size_t r) {
  return std::string(side) + std::to_string(level) + ".res" + std::to_string(r);
}

std::vector<ParamSpec> layout(const UNetConfig& cfg) {
  cfg.validate();
  const std::size_t temb = cfg.time_embed_dim;
  const std::size_t levels = cfg.channel_mults.size();
  const std::size_t c0 = cfg.channels_at(0);
  std::vector<ParamSpec> out;
  out.push_back({"time.fc1.weight", {temb, temb}, Init::kFanIn, temb});
  out.push_back({"time.fc1.bias", {temb}, Init::kZero});
  out.push_back({"time.fc2.weight", {temb, temb}, Init::kFanIn, temb});
  out.push_back({"time.fc2.bias", {temb}, Init::kZero});
  out.push_back({"in_conv.weight", {c0, cfg.input_channels, 3}, Init::kFanIn,
                 cfg.input_channels * 3});
  out.push_back({"in_conv.bias", {c0}, Init::kZero});

  std::size_t ch = c0;
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t ci = cfg.channels_at(i);
    for (std::size_t r = 0; r < cfg.res_blocks_per_level; ++r) {
      add_res_block(out, level_block("enc", i, r), ch, ci, temb);
      ch = ci;
    }
    if (i + 1 < levels) {
      const std::string p = "enc" + std::to_string(i) + ".down";
      out.push_back({p + ".weight", {ci, ci, 3}, Init::kFanIn, ci * 3});
      out.push_back({p + ".bias", {ci}, Init::kZero});
    }
  }
  add_res_block(out, "mid.res0", ch, ch, temb);
  for (std::size_t i = levels; i-- > 0;) {
    const std::size_t ci = cfg.channels_at(i);
    if (i + 1 < levels) {
      const std::string p = "dec" + std::to_string(i) + ".up";
      out.push_back({p + ".weight", {ci, ch, 3}, Init::kFanIn, ch * 3});
      out.push_back({p + ".bias", {ci}, Init::kZero});
    }
    ch = 2 * ci;  // after concatenating the encoder activation
    for (std::size_t r = 0; r < cfg.res_blocks_per_level; ++r) {
      add_res_block(out, level_block("dec", i, r), ch, ci, temb);
      ch = ci;
    }
  }
  out.push_back({"out_norm.gamma", {c0}, Init::kOne});
  out.push_back({"out_norm.beta", {c0}, Init::kZero});
  out.push_back({"out_conv.weight", {cfg.input_channels, c0, 3}, Init::kZero});
  out.push_back({"out_conv.bias", {cfg.input_channels}, Init::kZero});
  return out;
}

}  // namespace

UNet::UNet(UNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  auto rng = make_stream(seed, StreamTag::kInit);
  for (const auto& spec : layout(config_)) {
    switch (spec.init) {
      case Init::kFanIn:
        params_.add(spec.name,
                    Tensor::randn(spec.shape, rng,
                                  1.0 / std::sqrt(static_cast<double>(spec.fan_in))));
        break;
      case Init::kZero:
        params_.add(spec.name, Tensor::zeros(spec.shape));
        break;
      case Init::kOne:
        params_.add(spec.name, Tensor::full(spec.shape, 1.0));
        break;
    }
  }
}

UNet::UNet(UNetConfig config, ParamStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  const auto specs = layout(config_);
  if (specs.size() != params_.size()) {
    throw ShapeError("parameter set has " + std::to_string(params_.size()) +
                     " tensors, configuration expects " +
                     std::to_string(specs.size()));
  }
  for (const auto& spec : specs) {
    if (!params_.contains(spec.name)) {
      throw ShapeError("missing parameter " + spec.name);
    }
    if (params_.at(spec.name).shape() != spec.shape) {
      throw ShapeError("parameter " + spec.name + " has shape " +
                       shape_str(params_.at(spec.name).shape()) + ", expected " +
                       shape_str(spec.shape));
    }
  }
}

void UNet::check_length(std::size_t length) const {
  if (length != config_.grid_length) {
    throw ConfigError("series length " + std::to_string(length) +
                      " does not match network grid length " +
                      std::to_string(config_.grid_length));
  }
}

Tensor UNet::res_block(Graph& g, const std::string& prefix, const Tensor& x,
                       const Tensor& temb_act) const {
  const auto& p = params_;
  const std::size_t groups = config_.groups;
  Tensor h = ops::group_norm(g, x, groups, p.at(prefix + ".norm1.gamma"),
                             p.at(prefix + ".norm1.beta"));
  h = ops::silu(g, h);
  h = ops::conv1d(g, h, p.at(prefix + ".conv1.weight"),
                  p.at(prefix + ".conv1.bias"), 1, 1);
  const Tensor e = ops::linear(g, temb_act, p.at(prefix + ".time.weight"),
                               p.at(prefix + ".time.bias"));
  h = ops::add_channel_bias(g, h, e);
  h = ops::group_norm(g, h, groups, p.at(prefix + ".norm2.gamma"),
                      p.at(prefix + ".norm2.beta"));
  h = ops::silu(g, h);
  h = ops::conv1d(g, h, p.at(prefix + ".conv2.weight"),
                  p.at(prefix + ".conv2.bias"), 1, 1);
  const Tensor skip =
      p.contains(prefix + ".skip.weight")
          ? ops::conv1d(g, x, p.at(prefix + ".skip.weight"),
                        p.at(prefix + ".skip.bias"))
          : x;
  return ops::add(g, h, skip);
}

Tensor UNet::predict_noise(Graph& g, const Tensor& x_t,
                           std::span<const int> steps) const {
  if (x_t.rank() != 3 || x_t.dim(1) != config_.input_channels) {
    throw ShapeError("unet: expected input [B, 1, L], got " +
                     shape_str(x_t.shape()));
  }
  if (x_t.dim(2) != config_.grid_length) {
    throw ShapeError("unet: series length " + std::to_string(x_t.dim(2)) +
                     " != configured grid length " +
                     std::to_string(config_.grid_length));
  }
  const std::size_t batch = x_t.dim(0);
  if (steps.size() != batch) {
    throw ShapeError("unet: " + std::to_string(steps.size()) +
                     " steps for batch of " + std::to_string(batch));
  }
  const auto& p = params_;
  const std::size_t dim = config_.time_embed_dim;

  std::vector<double> sinusoids;
  sinusoids.reserve(batch * dim);
  for (int t : steps) {
    const auto e = time_embedding(t, dim);
    sinusoids.insert(sinusoids.end(), e.begin(), e.end());
  }
  Tensor temb = Tensor::from({batch, dim}, std::move(sinusoids));
  temb = ops::linear(g, temb, p.at("time.fc1.weight"), p.at("time.fc1.bias"));
  temb = ops::silu(g, temb);
  temb = ops::linear(g, temb, p.at("time.fc2.weight"), p.at("time.fc2.bias"));
  const Tensor temb_act = ops::silu(g, temb);

  const std::size_t levels = config_.channel_mults.size();
  Tensor h = ops::conv1d(g, x_t, p.at("in_conv.weight"), p.at("in_conv.bias"),
                         1, 1);
  std::vector<Tensor> skips;
  for (std::size_t i = 0; i < levels; ++i) {
    for (std::size_t r = 0; r < config_.res_blocks_per_level; ++r) {
      h = res_block(g, level_block("enc", i, r), h, temb_act);
    }
    skips.push_back(h);
    if (i + 1 < levels) {
      const std::string d = "enc" + std::to_string(i) + ".down";
      h = ops::conv1d(g, h, p.at(d + ".weight"), p.at(d + ".bias"), 2, 1);
    }
  }
  h = res_block(g, "mid.res0", h, temb_act);
  for (std::size_t i = levels; i-- > 0;) {
    if (i + 1 < levels) {
      const std::string u = "dec" + std::to_string(i) + ".up";
      h = ops::upsample_nearest2(g, h);
      h = ops::conv1d(g, h, p.at(u + ".weight"), p.at(u + ".bias"), 1, 1);
    }
    if (h.dim(2) != skips[i].dim(2)) {
      throw std::logic_error("unet: skip length mismatch at level " +
                             std::to_string(i));
    }
    h = ops::concat_channels(g, h, skips[i]);
    for (std::size_t r = 0; r < config_.res_blocks_per_level; ++r) {
      h = res_block(g, level_block("dec", i, r), h, temb_act);
    }
  }
  h = ops::group_norm(g, h, config_.groups, p.at("out_norm.gamma"),
                      p.at("out_norm.beta"));
  h = ops::silu(g, h);
  return ops::conv1d(g, h, p.at("out_conv.weight"), p.at("out_conv.bias"), 1, 1);
}

}  // namespace ndif
