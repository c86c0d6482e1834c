// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/ops.hpp"

#include <Eigen/Core>
#include <cmath>

namespace ndif::ops {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* op,
                  const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t in_channels, length, kernel, stride, padding, out_length;
  bool is_pointwise() const {
    return kernel == 1 && stride == 1 && padding == 0;
  }
};

// Column matrix [C_in*K, B*L_out] for a whole batch.
// col[c*K + k, n*L_out + o] = x[n, c, o*stride + k - padding], zero outside.
RowMat batched_im2col(const Tensor& input, const ConvGeometry& geo,
                      std::size_t batch) {
  const std::size_t rows = geo.in_channels * geo.kernel;
  const std::size_t wide = batch * geo.out_length;
  const std::size_t in_stride = geo.in_channels * geo.length;
  RowMat col(rows, wide);
  const double* x = input.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = r / geo.kernel;
    const std::size_t k = r % geo.kernel;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* xc = x + n * in_stride + c * geo.length;
      double* dst = col.data() + r * wide + n * geo.out_length;
      for (std::size_t o = 0; o < geo.out_length; ++o) {
        const std::ptrdiff_t pos =
            static_cast<std::ptrdiff_t>(o * geo.stride + k) -
            static_cast<std::ptrdiff_t>(geo.padding);
        dst[o] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(geo.length))
                     ? xc[pos]
                     : 0.0;
      }
    }
  }
  return col;
}

void batched_col2im_accumulate(const RowMat& dcol, const ConvGeometry& geo,
                               std::size_t batch, std::span<double> dx) {
  const std::size_t rows = geo.in_channels * geo.kernel;
  const std::size_t wide = batch * geo.out_length;
  const std::size_t in_stride = geo.in_channels * geo.length;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = r / geo.kernel;
    const std::size_t k = r % geo.kernel;
    for (std::size_t n = 0; n < batch; ++n) {
      double* dxc = dx.data() + n * in_stride + c * geo.length;
      const double* src = dcol.data() + r * wide + n * geo.out_length;
      for (std::size_t o = 0; o < geo.out_length; ++o) {
        const std::ptrdiff_t pos =
            static_cast<std::ptrdiff_t>(o * geo.stride + k) -
            static_cast<std::ptrdiff_t>(geo.padding);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(geo.length)) {
          dxc[pos] += src[o];
        }
      }
    }
  }
}

}  // namespace

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                  std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("conv1d: stride must be positive");
  if (length + 2 * padding < kernel) {
    throw ShapeError("conv1d: kernel " + std::to_string(kernel) +
                     " longer than padded input " +
                     std::to_string(length + 2 * padding));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

Tensor conv1d(Graph& g, const Tensor& input, const Tensor& weight,
              const Tensor& bias, std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv1d", "input");
  require_rank(weight, 3, "conv1d", "weight");
  require_rank(bias, 1, "conv1d", "bias");
  const std::size_t batch = input.dim(0);
  const std::size_t out_channels = weight.dim(0);
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("conv1d: input has " + std::to_string(input.dim(1)) +
                     " channels but weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != out_channels) {
    throw ShapeError("conv1d: bias length " + std::to_string(bias.dim(0)) +
                     " != out channels " + std::to_string(out_channels));
  }
  const ConvGeometry geo{input.dim(1),
                         input.dim(2),
                         weight.dim(2),
                         stride,
                         padding,
                         conv1d_output_length(input.dim(2), weight.dim(2),
                                              stride, padding)};
  const std::size_t col_rows = geo.in_channels * geo.kernel;

  // All samples share one GEMM: cols is [C_in*K, B*L_out].
  const std::size_t in_stride = geo.in_channels * geo.length;
  const std::size_t out_stride = out_channels * geo.out_length;
  const std::size_t wide = batch * geo.out_length;
  RowMat col = batched_im2col(input, geo, batch);
  RowMat y(out_channels, wide);
  const ConstMap w(weight.data().data(), out_channels, col_rows);
  y.noalias() = w * col;
  Tensor out = Tensor::empty({batch, out_channels, geo.out_length});
  {
    auto o = out.mutable_data();
    const auto bs = bias.data();
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < out_channels; ++c) {
        const double* src = y.data() + c * wide + n * geo.out_length;
        double* dst = o.data() + n * out_stride + c * geo.out_length;
        for (std::size_t i = 0; i < geo.out_length; ++i) dst[i] = src[i] + bs[c];
      }
    }
  }

  if (g.needs_record({&input, &weight, &bias})) {
    g.record({input, weight, bias}, out,
             [input, weight, bias, geo, out_channels, col_rows, batch, in_stride,
              out_stride, wide, col = std::move(col)](Tensor& result) {
               // dY gathered as [C_out, B*L_out]
               RowMat dy(out_channels, wide);
               const auto gs = result.grad();
               for (std::size_t n = 0; n < batch; ++n) {
                 for (std::size_t c = 0; c < out_channels; ++c) {
                   std::copy_n(gs.data() + n * out_stride + c * geo.out_length,
                               geo.out_length,
                               dy.data() + c * wide + n * geo.out_length);
                 }
               }
               if (weight.requires_grad()) {
                 MutMap dw(weight.grad_buffer().data(), out_channels, col_rows);
                 dw.noalias() += dy * col.transpose();
               }
               if (bias.requires_grad()) {
                 auto db = bias.grad_buffer();
                 for (std::size_t c = 0; c < out_channels; ++c) {
                   const double* row = dy.data() + c * wide;
                   double acc = 0.0;
                   for (std::size_t i = 0; i < wide; ++i) acc += row[i];
                   db[c] += acc;
                 }
               }
               if (input.requires_grad()) {
                 const ConstMap w(weight.data().data(), out_channels, col_rows);
                 RowMat dcol(col_rows, wide);
                 dcol.noalias() = w.transpose() * dy;
                 batched_col2im_accumulate(dcol, geo, batch, input.grad_buffer());
               }
             });
  }
  return out;
}

Tensor group_norm(Graph& g, const Tensor& input, std::size_t groups,
                  const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(input, 3, "group_norm", "input");
  const std::size_t batch = input.dim(0);
  const std::size_t channels = input.dim(1);
  const std::size_t length = input.dim(2);
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError("group_norm: " + std::to_string(channels) +
                      " channels not divisible into " + std::to_string(groups) +
                      " groups");
  }
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw ShapeError("group_norm: affine parameters must have shape [" +
                     std::to_string(channels) + "]");
  }
  if (!(eps >= 0.0)) throw ConfigError("group_norm: eps must be >= 0");

  const std::size_t per_group = channels / groups;
  const std::size_t count = per_group * length;
  Tensor out = Tensor::empty(input.shape());
  // Normalised activations and reciprocal std, kept for the reverse pass.
  std::vector<double> xhat(input.numel());
  std::vector<double> rstd(batch * groups);
  const double* x = input.data().data();
  double* y = out.mutable_data().data();
  const auto ga = gamma.data();
  const auto be = beta.data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = (n * channels + gi * per_group) * length;
      const double* xs = x + base;
      double mean = 0.0;
      for (std::size_t i = 0; i < count; ++i) mean += xs[i];
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double d = xs[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(count);
      const double r = 1.0 / std::sqrt(var + eps);
      rstd[n * groups + gi] = r;
      for (std::size_t cc = 0; cc < per_group; ++cc) {
        const std::size_t c = gi * per_group + cc;
        const std::size_t off = base + cc * length;
        for (std::size_t i = 0; i < length; ++i) {
          const double h = (x[off + i] - mean) * r;
          xhat[off + i] = h;
          y[off + i] = ga[c] * h + be[c];
        }
      }
    }
  }

  if (g.needs_record({&input, &gamma, &beta})) {
    g.record({input, gamma, beta}, out,
             [input, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd),
              batch, channels, length, groups, per_group,
              count](Tensor& result) {
               const double* dy = result.grad().data();
               const auto ga = gamma.data();
               auto dg = gamma.requires_grad() ? gamma.grad_buffer()
                                               : std::span<double>{};
               auto db = beta.requires_grad() ? beta.grad_buffer()
                                              : std::span<double>{};
               auto dx = input.requires_grad() ? input.grad_buffer()
                                               : std::span<double>{};
               const double inv_n = 1.0 / static_cast<double>(count);
               for (std::size_t n = 0; n < batch; ++n) {
                 for (std::size_t gi = 0; gi < groups; ++gi) {
                   const std::size_t base =
                       (n * channels + gi * per_group) * length;
                   double sum_d = 0.0, sum_dh = 0.0;
                   for (std::size_t cc = 0; cc < per_group; ++cc) {
                     const std::size_t c = gi * per_group + cc;
                     const std::size_t off = base + cc * length;
                     double sg = 0.0, sb = 0.0;
                     for (std::size_t i = 0; i < length; ++i) {
                       sg += dy[off + i] * xhat[off + i];
                       sb += dy[off + i];
                     }
                     if (!dg.empty()) dg[c] += sg;
                     if (!db.empty()) db[c] += sb;
                     sum_d += ga[c] * sb;
                     sum_dh += ga[c] * sg;
                   }
                   if (dx.empty()) continue;
                   const double r = rstd[n * groups + gi];
                   const double mean_d = inv_n * sum_d;
                   const double mean_dh = inv_n * sum_dh;
                   for (std::size_t cc = 0; cc < per_group; ++cc) {
                     const double gc = ga[gi * per_group + cc];
                     const std::size_t off = base + cc * length;
                     for (std::size_t i = 0; i < length; ++i) {
                       dx[off + i] += r * (gc * dy[off + i] - mean_d -
                                           xhat[off + i] * mean_dh);
                     }
                   }
                 }
               }
             });
  }
  return out;
}

Tensor silu(Graph& g, const Tensor& input) {
  const std::size_t n = input.numel();
  const Eigen::Map<const Eigen::ArrayXd> x(input.data().data(), n);
  // sigmoid(x), reused by the reverse pass. Kept in aligned storage: the
  // vectorised exp differs from the scalar one in the last bit, so the
  // peel split must not depend on where malloc put the buffer.
  Eigen::ArrayXd sig = 1.0 / (1.0 + (-x).exp());
  Tensor out = Tensor::empty(input.shape());
  Eigen::Map<Eigen::ArrayXd>(out.mutable_data().data(), n) = x * sig;
  if (g.needs_record({&input})) {
    g.record({input}, out, [input, sig = std::move(sig), n](Tensor& result) {
      const Eigen::Map<const Eigen::ArrayXd> x(input.data().data(), n);
      const auto& s = sig;
      const Eigen::Map<const Eigen::ArrayXd> dy(result.grad().data(), n);
      Eigen::Map<Eigen::ArrayXd> dx(input.grad_buffer().data(), n);
      dx += dy * s * (1.0 + x * (1.0 - s));
    });
  }
  return out;
}

Tensor linear(Graph& g, const Tensor& input, const Tensor& weight,
              const Tensor& bias) {
  require_rank(input, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  const std::size_t batch = input.dim(0);
  const std::size_t in_features = input.dim(1);
  const std::size_t out_features = weight.dim(0);
  if (weight.dim(1) != in_features) {
    throw ShapeError("linear: input features " + std::to_string(in_features) +
                     " != weight columns " + std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != out_features) {
    throw ShapeError("linear: bias length " + std::to_string(bias.dim(0)) +
                     " != weight rows " + std::to_string(out_features));
  }
  Tensor out = Tensor::empty({batch, out_features});
  const ConstMap x(input.data().data(), batch, in_features);
  const ConstMap w(weight.data().data(), out_features, in_features);
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.data().data(),
                                               out_features);
  MutMap y(out.mutable_data().data(), batch, out_features);
  y.noalias() = x * w.transpose();
  y.rowwise() += b;

  if (g.needs_record({&input, &weight, &bias})) {
    g.record({input, weight, bias}, out,
             [input, weight, bias, batch, in_features,
              out_features](Tensor& result) {
               const ConstMap dy(result.grad().data(), batch, out_features);
               if (input.requires_grad()) {
                 const ConstMap w(weight.data().data(), out_features,
                                  in_features);
                 MutMap dx(input.grad_buffer().data(), batch, in_features);
                 dx.noalias() += dy * w;
               }
               if (weight.requires_grad()) {
                 const ConstMap x(input.data().data(), batch, in_features);
                 MutMap dw(weight.grad_buffer().data(), out_features,
                           in_features);
                 dw.noalias() += dy.transpose() * x;
               }
               if (bias.requires_grad()) {
                 auto db = bias.grad_buffer();
                 for (std::size_t n = 0; n < batch; ++n) {
                   for (std::size_t j = 0; j < out_features; ++j) {
                     db[j] += dy(n, j);
                   }
                 }
               }
             });
  }
  return out;
}

Tensor upsample_nearest2(Graph& g, const Tensor& input) {
  require_rank(input, 3, "upsample_nearest2", "input");
  const std::size_t rows = input.dim(0) * input.dim(1);
  const std::size_t length = input.dim(2);
  Tensor out = Tensor::empty({input.dim(0), input.dim(1), 2 * length});
  const auto x = input.data();
  auto y = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < length; ++i) {
      y[r * 2 * length + 2 * i] = x[r * length + i];
      y[r * 2 * length + 2 * i + 1] = x[r * length + i];
    }
  }
  if (g.needs_record({&input})) {
    g.record({input}, out, [input, rows, length](Tensor& result) {
      const auto dy = result.grad();
      auto dx = input.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < length; ++i) {
          dx[r * length + i] +=
              dy[r * 2 * length + 2 * i] + dy[r * 2 * length + 2 * i + 1];
        }
      }
    });
  }
  return out;
}

Tensor concat_channels(Graph& g, const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels", "first input");
  require_rank(b, 3, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw ShapeError("concat_channels: cannot join " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t a_block = a.dim(1) * a.dim(2);
  const std::size_t b_block = b.dim(1) * b.dim(2);
  Tensor out = Tensor::empty({batch, a.dim(1) + b.dim(1), a.dim(2)});
  auto y = out.mutable_data();
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.data().data() + n * a_block, a_block,
                y.data() + n * (a_block + b_block));
    std::copy_n(b.data().data() + n * b_block, b_block,
                y.data() + n * (a_block + b_block) + a_block);
  }
  if (g.needs_record({&a, &b})) {
    g.record({a, b}, out,
             [a, b, batch, a_block, b_block](Tensor& result) {
               const auto dy = result.grad();
               for (std::size_t n = 0; n < batch; ++n) {
                 const double* src = dy.data() + n * (a_block + b_block);
                 if (a.requires_grad()) {
                   double* da = a.grad_buffer().data() + n * a_block;
                   for (std::size_t i = 0; i < a_block; ++i) da[i] += src[i];
                 }
                 if (b.requires_grad()) {
                   double* db = b.grad_buffer().data() + n * b_block;
                   for (std::size_t i = 0; i < b_block; ++i) {
                     db[i] += src[a_block + i];
                   }
                 }
               }
             });
  }
  return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const std::size_t n = a.numel();
  Tensor out = Tensor::empty(a.shape());
  Eigen::Map<Eigen::ArrayXd>(out.mutable_data().data(), n) =
      Eigen::Map<const Eigen::ArrayXd>(a.data().data(), n) +
      Eigen::Map<const Eigen::ArrayXd>(b.data().data(), n);
  if (g.needs_record({&a, &b})) {
    g.record({a, b}, out, [a, b, n](Tensor& result) {
      const Eigen::Map<const Eigen::ArrayXd> dy(result.grad().data(), n);
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        Eigen::Map<Eigen::ArrayXd>(t->grad_buffer().data(), n) += dy;
      }
    });
  }
  return out;
}

Tensor add_channel_bias(Graph& g, const Tensor& x, const Tensor& e) {
  require_rank(x, 3, "add_channel_bias", "input");
  require_rank(e, 2, "add_channel_bias", "bias");
  if (e.dim(0) != x.dim(0) || e.dim(1) != x.dim(1)) {
    throw ShapeError("add_channel_bias: bias " + shape_str(e.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0) * x.dim(1);
  const std::size_t length = x.dim(2);
  Tensor out = Tensor::empty(x.shape());
  auto y = out.mutable_data();
  const auto xs = x.data();
  const auto es = e.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < length; ++i) {
      y[r * length + i] = xs[r * length + i] + es[r];
    }
  }
  if (g.needs_record({&x, &e})) {
    g.record({x, e}, out, [x, e, rows, length](Tensor& result) {
      const auto dy = result.grad();
      if (x.requires_grad()) {
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
      if (e.requires_grad()) {
        auto de = e.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          double s = 0.0;
          for (std::size_t i = 0; i < length; ++i) s += dy[r * length + i];
          de[r] += s;
        }
      }
    });
  }
  return out;
}

Tensor mse_loss(Graph& g, const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  if (pred.numel() == 0) throw ShapeError("mse_loss: empty tensors");
  const auto ps = pred.data();
  const auto ts = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double d = ps[i] - ts[i];
    acc += d * d;
  }
  const double n = static_cast<double>(pred.numel());
  Tensor out = Tensor::full({1}, acc / n);
  if (g.needs_record({&pred, &target})) {
    g.record({pred, target}, out, [pred, target, n](Tensor& result) {
      const double scale = 2.0 * result.grad()[0] / n;
      const auto ps = pred.data();
      const auto ts = target.data();
      if (pred.requires_grad()) {
        auto dp = pred.grad_buffer();
        for (std::size_t i = 0; i < dp.size(); ++i) {
          dp[i] += scale * (ps[i] - ts[i]);
        }
      }
      if (target.requires_grad()) {
        auto dt = target.grad_buffer();
        for (std::size_t i = 0; i < dt.size(); ++i) {
          dt[i] -= scale * (ps[i] - ts[i]);
        }
      }
    });
  }
  return out;
}

Tensor sum(Graph& g, const Tensor& input) {
  double acc = 0.0;
  for (double v : input.data()) acc += v;
  Tensor out = Tensor::full({1}, acc);
  if (g.needs_record({&input})) {
    g.record({input}, out, [input](Tensor& result) {
      const double d = result.grad()[0];
      for (auto& v : input.grad_buffer()) v += d;
    });
  }
  return out;
}

}  // namespace ndif::ops
