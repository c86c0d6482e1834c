// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ndif/tensor.hpp"

namespace ndif::ops {

// 1D cross-correlation.
// input [B, C_in, L], weight [C_out, C_in, K], bias [C_out] -> [B, C_out, L_out]
// with L_out = (L + 2*padding - K) / stride + 1.
Tensor conv1d(Graph& g, const Tensor& input, const Tensor& weight,
              const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 std::size_t stride, std::size_t padding);

// Normalises each (batch, group) slice of [B, C, L] to zero mean and unit
// variance, then applies a per-channel affine map.
Tensor group_norm(Graph& g, const Tensor& input, std::size_t groups,
                  const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// x * sigmoid(x), elementwise.
Tensor silu(Graph& g, const Tensor& input);

// input [B, N], weight [M, N], bias [M] -> [B, M]
Tensor linear(Graph& g, const Tensor& input, const Tensor& weight,
              const Tensor& bias);

// [B, C, L] -> [B, C, 2L], each sample repeated twice.
Tensor upsample_nearest2(Graph& g, const Tensor& input);

// Concatenates [B, C1, L] and [B, C2, L] along channels.
Tensor concat_channels(Graph& g, const Tensor& a, const Tensor& b);

// Elementwise sum of equally shaped tensors.
Tensor add(Graph& g, const Tensor& a, const Tensor& b);

// x [B, C, L] + e [B, C] broadcast over L.
Tensor add_channel_bias(Graph& g, const Tensor& x, const Tensor& e);

// Mean of squared differences; gradient flows to both arguments when tracked.
Tensor mse_loss(Graph& g, const Tensor& pred, const Tensor& target);

// Sum of all elements as a scalar tensor.
Tensor sum(Graph& g, const Tensor& input);

}  // namespace ndif::ops
