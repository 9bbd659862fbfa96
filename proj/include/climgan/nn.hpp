// SPDX-License-Identifier: Apache-2.0
//
// Layers for the generator and discriminator: dense, 3d conv and transposed
// conv, 2d conv, 2x2 max pooling, batch normalization and activations.
//
// Spatio-temporal tensors are laid out (batch, channel, time, height, width);
// planar ones (batch, channel, height, width).

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "climgan/tensor.hpp"

namespace climgan {

enum class Mode { train, eval };

using Triple = std::array<std::size_t, 3>;

inline constexpr double kInitStddev = 0.02;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

//------------------------------------------------------------------------------
// Activations
//------------------------------------------------------------------------------

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    return map_unary(
        x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; }, "relu");
}

template <class T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T alpha = static_cast<T>(kLeakySlope)) {
    return map_unary(
        x, [alpha](T v) { return v > T{0} ? v : alpha * v; }, [alpha](T v, T) { return v > T{0} ? T{1} : alpha; },
        "leaky_relu");
}

/// Logistic function, clamped so that saturated values stay strictly inside
/// (0, 1) in finite precision.
template <class T>
T logistic(T v) {
    constexpr T lo = std::numeric_limits<T>::min();
    constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / T{2};
    const T s = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
    return std::clamp(s, lo, hi);
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    return map_unary(x, [](T v) { return logistic(v); }, [](T, T s) { return s * (T{1} - s); }, "sigmoid");
}

/// log(1 + e^x), evaluated without overflow.
template <class T>
BasicTensor<T> softplus(const BasicTensor<T>& x) {
    return map_unary(
        x, [](T v) { return std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v))); },
        [](T v, T) { return logistic(v); }, "softplus");
}

//------------------------------------------------------------------------------
// Convolution kernels
//------------------------------------------------------------------------------

/// Geometry of a 3d cross-correlation. Input (N, Cin, in), weight
/// (Cout, Cin, kernel), output (N, Cout, out).
struct ConvGeometry {
    std::size_t batch = 1, in_channels = 1, out_channels = 1;
    Triple in{1, 1, 1}, out{1, 1, 1}, kernel{1, 1, 1}, stride{1, 1, 1}, pad{0, 0, 0};

    std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
    std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
    std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
};

/// Output extent of a strided cross-correlation; throws when the kernel does
/// not fit inside the padded input.
inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ShapeError("convolution stride must be positive");
    if (kernel > in + 2 * pad)
        throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                         std::to_string(in + 2 * pad));
    return (in + 2 * pad - kernel) / stride + 1;
}

/// Output extent of a transposed convolution: (in - 1) * stride - 2 * pad + kernel.
inline std::size_t conv_transpose_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                             std::size_t pad) {
    const long long e = static_cast<long long>(in - 1) * static_cast<long long>(stride) -
                        2 * static_cast<long long>(pad) + static_cast<long long>(kernel);
    if (stride == 0 || e <= 0)
        throw ShapeError("transposed convolution output extent " + std::to_string(e) + " is not positive");
    return static_cast<std::size_t>(e);
}

namespace detail {

/// Output positions o with 0 <= o*stride - pad + k < in, as [lo, hi).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k,
                                                       std::size_t stride, std::size_t pad) {
    const long long s = static_cast<long long>(stride);
    const long long shift = static_cast<long long>(k) - static_cast<long long>(pad);
    long long lo = 0;
    if (shift < 0) lo = (-shift + s - 1) / s;
    long long hi = (static_cast<long long>(in) - 1 - shift);
    hi = hi < 0 ? 0 : hi / s + 1;
    hi = std::min<long long>(hi, static_cast<long long>(out));
    if (lo >= hi) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

/// Unfolds one sample's input into a (Cin * kernel volume, out volume)
/// row-major matrix. `col` must arrive zeroed; padding taps are left alone.
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
    const std::size_t iv = g.in_volume(), ov = g.out_volume();
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
        for (std::size_t kt = 0; kt < g.kernel[0]; ++kt)
            for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
                for (std::size_t kw = 0; kw < g.kernel[2]; ++kw, ++row) {
                    const T* xc = x + ci * iv;
                    T* c = col + row * ov;
                    const auto [t0, t1] = valid_range(g.out[0], g.in[0], kt, g.stride[0], g.pad[0]);
                    const auto [h0, h1] = valid_range(g.out[1], g.in[1], kh, g.stride[1], g.pad[1]);
                    const auto [w0, w1] = valid_range(g.out[2], g.in[2], kw, g.stride[2], g.pad[2]);
                    for (std::size_t ot = t0; ot < t1; ++ot) {
                        const std::size_t it = ot * g.stride[0] + kt - g.pad[0];
                        for (std::size_t oh = h0; oh < h1; ++oh) {
                            const std::size_t ih = oh * g.stride[1] + kh - g.pad[1];
                            const T* src = xc + (it * g.in[1] + ih) * g.in[2];
                            T* dst = c + (ot * g.out[1] + oh) * g.out[2];
                            for (std::size_t ow = w0; ow < w1; ++ow) dst[ow] = src[ow * g.stride[2] + kw - g.pad[2]];
                        }
                    }
                }
}

/// Adjoint of im2col: scatter-adds the column matrix back into x.
template <class T>
void col2im(const ConvGeometry& g, const T* col, T* x) {
    const std::size_t iv = g.in_volume(), ov = g.out_volume();
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
        for (std::size_t kt = 0; kt < g.kernel[0]; ++kt)
            for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
                for (std::size_t kw = 0; kw < g.kernel[2]; ++kw, ++row) {
                    T* xc = x + ci * iv;
                    const T* c = col + row * ov;
                    const auto [t0, t1] = valid_range(g.out[0], g.in[0], kt, g.stride[0], g.pad[0]);
                    const auto [h0, h1] = valid_range(g.out[1], g.in[1], kh, g.stride[1], g.pad[1]);
                    const auto [w0, w1] = valid_range(g.out[2], g.in[2], kw, g.stride[2], g.pad[2]);
                    for (std::size_t ot = t0; ot < t1; ++ot) {
                        const std::size_t it = ot * g.stride[0] + kt - g.pad[0];
                        for (std::size_t oh = h0; oh < h1; ++oh) {
                            const std::size_t ih = oh * g.stride[1] + kh - g.pad[1];
                            T* dst = xc + (it * g.in[1] + ih) * g.in[2];
                            const T* src = c + (ot * g.out[1] + oh) * g.out[2];
                            for (std::size_t ow = w0; ow < w1; ++ow) dst[ow * g.stride[2] + kw - g.pad[2]] += src[ow];
                        }
                    }
                }
}

/// Per-thread im2col scratch, one per geometry. im2col never writes the
/// padding taps, so a buffer reused for the same geometry stays zero there
/// and needs no clearing between calls.
template <class T>
std::vector<T>& column_buffer(const ConvGeometry& g) {
    using Key = std::array<std::size_t, 17>;
    thread_local std::map<Key, std::vector<T>> cache;
    const Key key{g.in_channels, g.out_channels, g.in[0], g.in[1], g.in[2], g.out[0], g.out[1], g.out[2],
                  g.kernel[0], g.kernel[1], g.kernel[2], g.stride[0], g.stride[1], g.stride[2], g.pad[0],
                  g.pad[1], g.pad[2]};
    if (cache.size() > 64 && !cache.count(key)) cache.clear();
    auto& buf = cache[key];
    if (buf.empty()) buf.assign(g.in_channels * g.kernel_volume() * g.out_volume(), T{});
    return buf;
}

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// out += conv(in, w). `out` laid out (N, Cout, out), pre-initialized.
template <class T>
void conv_forward(const ConvGeometry& g, const T* in, const T* w, T* out) {
    const std::size_t rows = g.in_channels * g.kernel_volume(), ov = g.out_volume();
    const ConstMatrixMap<T> wm(w, g.out_channels, rows);
    parallel_for(g.batch, [&](std::size_t n) {
        std::vector<T>& col = column_buffer<T>(g);
        im2col(g, in + n * g.in_channels * g.in_volume(), col.data());
        MatrixMap<T>(out + n * g.out_channels * ov, g.out_channels, ov).noalias() +=
            wm * ConstMatrixMap<T>(col.data(), rows, ov);
    });
}

/// gin += adjoint of conv applied to gout (the input-gradient map).
template <class T>
void conv_backward_input(const ConvGeometry& g, const T* gout, const T* w, T* gin) {
    const std::size_t rows = g.in_channels * g.kernel_volume(), ov = g.out_volume();
    const ConstMatrixMap<T> wm(w, g.out_channels, rows);
    parallel_for(g.batch, [&](std::size_t n) {
        RowMatrix<T> col = wm.transpose() * ConstMatrixMap<T>(gout + n * g.out_channels * ov, g.out_channels, ov);
        col2im(g, col.data(), gin + n * g.in_channels * g.in_volume());
    });
}

/// gw += d<gout, conv(in, w)>/dw. Per-sample partials are summed in sample
/// order so the result does not depend on the thread count.
template <class T>
void conv_backward_weight(const ConvGeometry& g, const T* gout, const T* in, T* gw) {
    const std::size_t rows = g.in_channels * g.kernel_volume(), ov = g.out_volume();
    std::vector<RowMatrix<T>> partial(g.batch);
    parallel_for(g.batch, [&](std::size_t n) {
        std::vector<T>& col = column_buffer<T>(g);
        im2col(g, in + n * g.in_channels * g.in_volume(), col.data());
        partial[n] = ConstMatrixMap<T>(gout + n * g.out_channels * ov, g.out_channels, ov) *
                     ConstMatrixMap<T>(col.data(), rows, ov).transpose();
    });
    MatrixMap<T> gwm(gw, g.out_channels, rows);
    for (const auto& p : partial) gwm += p;
}

template <class T>
void add_channel_bias(std::vector<T>& out, const std::vector<T>& bias, std::size_t batch, std::size_t channels,
                      std::size_t volume) {
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            T* p = out.data() + (n * channels + c) * volume;
            for (std::size_t i = 0; i < volume; ++i) p[i] += bias[c];
        }
}

template <class T>
void accumulate_bias_grad(const std::vector<T>& gout, std::vector<T>& gb, std::size_t batch, std::size_t channels,
                          std::size_t volume) {
    for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (std::size_t n = 0; n < batch; ++n) {
            const T* p = gout.data() + (n * channels + c) * volume;
            for (std::size_t i = 0; i < volume; ++i) acc += p[i];
        }
        gb[c] += static_cast<T>(acc);
    }
}

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + s.str());
}

}  // namespace detail

//------------------------------------------------------------------------------
// Convolution ops
//------------------------------------------------------------------------------

/// 3d cross-correlation. x (N, Cin, T, H, W), weight (Cout, Cin, kT, kH, kW),
/// bias (Cout) or undefined.
template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Triple stride, Triple pad) {
    detail::require_rank(x.shape(), 5, "conv3d input");
    detail::require_rank(weight.shape(), 5, "conv3d weight");
    if (weight.dim(1) != x.dim(1))
        throw ShapeError("conv3d: weight " + weight.shape().str() + " expects " + std::to_string(weight.dim(1)) +
                         " input channels, input is " + x.shape().str());
    ConvGeometry g;
    g.batch = x.dim(0);
    g.in_channels = x.dim(1);
    g.out_channels = weight.dim(0);
    g.stride = stride;
    g.pad = pad;
    for (std::size_t a = 0; a < 3; ++a) {
        g.in[a] = x.dim(2 + a);
        g.kernel[a] = weight.dim(2 + a);
        g.out[a] = conv_out_extent(g.in[a], g.kernel[a], stride[a], pad[a]);
    }
    const bool has_bias = bias.defined();
    if (has_bias && bias.numel() != g.out_channels) throw ShapeError("conv3d: bias has wrong length");
    std::vector<T> out(g.batch * g.out_channels * g.out_volume(), T{});
    if (has_bias) detail::add_channel_bias(out, bias.values(), g.batch, g.out_channels, g.out_volume());
    detail::conv_forward(g, x.values().data(), weight.values().data(), out.data());
    std::vector<BasicTensor<T>> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return BasicTensor<T>::record(
        Shape{g.batch, g.out_channels, g.out[0], g.out[1], g.out[2]}, std::move(out), inputs, "conv3d",
        [g, has_bias](detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            if (px.requires_grad) detail::conv_backward_input(g, self.grad.data(), pw.data.data(), px.grad_buffer().data());
            if (pw.requires_grad) detail::conv_backward_weight(g, self.grad.data(), px.data.data(), pw.grad_buffer().data());
            if (has_bias && self.parents[2]->requires_grad)
                detail::accumulate_bias_grad(self.grad, self.parents[2]->grad_buffer(), g.batch, g.out_channels,
                                             g.out_volume());
        });
}

/// Transposed 3d convolution, the adjoint of conv3d with the same weights.
/// x (N, Cin, T, H, W), weight (Cin, Cout, kT, kH, kW), bias (Cout).
template <class T>
BasicTensor<T> conv_transpose3d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                                Triple stride, Triple pad) {
    detail::require_rank(x.shape(), 5, "conv_transpose3d input");
    detail::require_rank(weight.shape(), 5, "conv_transpose3d weight");
    if (weight.dim(0) != x.dim(1))
        throw ShapeError("conv_transpose3d: weight " + weight.shape().str() + " expects " +
                         std::to_string(weight.dim(0)) + " input channels, input is " + x.shape().str());
    // Geometry of the forward conv whose adjoint this is: its input is our
    // output and its output is our input.
    ConvGeometry g;
    g.batch = x.dim(0);
    g.out_channels = x.dim(1);
    g.in_channels = weight.dim(1);
    g.stride = stride;
    g.pad = pad;
    for (std::size_t a = 0; a < 3; ++a) {
        g.out[a] = x.dim(2 + a);
        g.kernel[a] = weight.dim(2 + a);
        g.in[a] = conv_transpose_out_extent(g.out[a], g.kernel[a], stride[a], pad[a]);
    }
    const bool has_bias = bias.defined();
    if (has_bias && bias.numel() != g.in_channels) throw ShapeError("conv_transpose3d: bias has wrong length");
    std::vector<T> out(g.batch * g.in_channels * g.in_volume(), T{});
    if (has_bias) detail::add_channel_bias(out, bias.values(), g.batch, g.in_channels, g.in_volume());
    detail::conv_backward_input(g, x.values().data(), weight.values().data(), out.data());
    std::vector<BasicTensor<T>> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return BasicTensor<T>::record(
        Shape{g.batch, g.in_channels, g.in[0], g.in[1], g.in[2]}, std::move(out), inputs, "conv_transpose3d",
        [g, has_bias](detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            if (px.requires_grad) detail::conv_forward(g, self.grad.data(), pw.data.data(), px.grad_buffer().data());
            if (pw.requires_grad) detail::conv_backward_weight(g, px.data.data(), self.grad.data(), pw.grad_buffer().data());
            if (has_bias && self.parents[2]->requires_grad)
                detail::accumulate_bias_grad(self.grad, self.parents[2]->grad_buffer(), g.batch, g.in_channels,
                                             g.in_volume());
        });
}

/// 2d cross-correlation. x (N, Cin, H, W), weight (Cout, Cin, kH, kW).
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      std::array<std::size_t, 2> stride, std::array<std::size_t, 2> pad) {
    detail::require_rank(x.shape(), 4, "conv2d input");
    detail::require_rank(weight.shape(), 4, "conv2d weight");
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    auto x5 = reshape(x, Shape{xs[0], xs[1], 1, xs[2], xs[3]});
    auto w5 = reshape(weight, Shape{ws[0], ws[1], 1, ws[2], ws[3]});
    auto y = conv3d(x5, w5, bias, {1, stride[0], stride[1]}, {0, pad[0], pad[1]});
    return reshape(y, Shape{y.dim(0), y.dim(1), y.dim(3), y.dim(4)});
}

/// 2x2 max pooling with stride 2 over the trailing two axes of (N, C, H, W).
/// Ties resolve to the first element in row-major window order.
template <class T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x) {
    detail::require_rank(x.shape(), 4, "maxpool2d input");
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("maxpool2d: spatial extents of " + x.shape().str() + " must be even");
    const std::size_t oh = h / 2, ow = w / 2;
    const auto& xv = x.values();
    std::vector<T> out(planes * oh * ow);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                std::size_t best = (p * h + 2 * i) * w + 2 * j;
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj) {
                        const std::size_t idx = (p * h + 2 * i + di) * w + 2 * j + dj;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                const std::size_t o = (p * oh + i) * ow + j;
                out[o] = xv[best];
                argmax[o] = best;
            }
    return BasicTensor<T>::record(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, "maxpool2d",
                                  [argmax = std::move(argmax)](detail::Node<T>& self) {
                                      auto& gx = self.parents[0]->grad_buffer();
                                      for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
                                  });
}

//------------------------------------------------------------------------------
// Batch normalization
//------------------------------------------------------------------------------

/// Per-channel normalization over every axis except axis 1. In train mode the
/// biased batch statistics normalize and also update the running estimates.
template <class T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& scale, const BasicTensor<T>& shift,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var, Mode mode,
                          double momentum = kBatchNormMomentum, double epsilon = kBatchNormEpsilon) {
    if (x.shape().rank() < 2) throw ShapeError("batch_norm: input " + x.shape().str() + " has no channel axis");
    const std::size_t batch = x.dim(0), channels = x.dim(1);
    if (scale.numel() != channels || shift.numel() != channels || running_mean.numel() != channels ||
        running_var.numel() != channels)
        throw ShapeError("batch_norm: parameter length does not match channels of " + x.shape().str());
    if (mode == Mode::train && batch < 2)
        throw std::invalid_argument("batch_norm: train mode needs a batch of at least 2, got 1");
    const std::size_t volume = x.numel() / (batch * channels);
    const double count = static_cast<double>(batch * volume);
    const auto& xv = x.values();

    std::vector<T> inv_std(channels), centre(channels);
    if (mode == Mode::train) {
        auto rm = running_mean.mutable_data();
        auto rv = running_var.mutable_data();
        for (std::size_t c = 0; c < channels; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < batch; ++n) {
                const T* p = xv.data() + (n * channels + c) * volume;
                for (std::size_t i = 0; i < volume; ++i) s += p[i];
            }
            const double mu = s / count;
            double ss = 0.0;
            for (std::size_t n = 0; n < batch; ++n) {
                const T* p = xv.data() + (n * channels + c) * volume;
                for (std::size_t i = 0; i < volume; ++i) ss += (p[i] - mu) * (p[i] - mu);
            }
            const double var = ss / count;
            centre[c] = static_cast<T>(mu);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + epsilon));
            rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * mu);
            rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * var);
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            centre[c] = running_mean.values()[c];
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.values()[c]) + epsilon));
        }
    }

    const auto& g = scale.values();
    const auto& b = shift.values();
    std::vector<T> normalized(xv.size()), out(xv.size());
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * volume;
            for (std::size_t i = 0; i < volume; ++i) {
                const T xh = (xv[base + i] - centre[c]) * inv_std[c];
                normalized[base + i] = xh;
                out[base + i] = g[c] * xh + b[c];
            }
        }

    const bool batch_stats = mode == Mode::train;
    return BasicTensor<T>::record(
        x.shape(), std::move(out), {x, scale, shift}, "batch_norm",
        [normalized = std::move(normalized), inv_std, batch, channels, volume, count,
         batch_stats](detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            const auto& gv = pg.data;
            for (std::size_t c = 0; c < channels; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t n = 0; n < batch; ++n) {
                    const std::size_t base = (n * channels + c) * volume;
                    for (std::size_t i = 0; i < volume; ++i) {
                        sum_g += self.grad[base + i];
                        sum_gx += static_cast<double>(self.grad[base + i]) * normalized[base + i];
                    }
                }
                if (pg.requires_grad) pg.grad_buffer()[c] += static_cast<T>(sum_gx);
                if (pb.requires_grad) pb.grad_buffer()[c] += static_cast<T>(sum_g);
                if (!px.requires_grad) continue;
                auto& gx = px.grad_buffer();
                const double k = static_cast<double>(gv[c]) * inv_std[c];
                for (std::size_t n = 0; n < batch; ++n) {
                    const std::size_t base = (n * channels + c) * volume;
                    for (std::size_t i = 0; i < volume; ++i) {
                        const double dy = self.grad[base + i];
                        if (batch_stats)
                            gx[base + i] += static_cast<T>(
                                k * (dy - sum_g / count - normalized[base + i] * sum_gx / count));
                        else
                            gx[base + i] += static_cast<T>(k * dy);
                    }
                }
            }
        });
}

//------------------------------------------------------------------------------
// Layers
//------------------------------------------------------------------------------

template <class T>
using NamedTensors = std::vector<std::pair<std::string, BasicTensor<T>>>;

template <class T>
BasicTensor<T> gaussian_parameter(const Shape& shape, Rng& rng, double stddev = kInitStddev) {
    return BasicTensor<T>::randn(shape, rng, stddev, true);
}

/// y = x W + b with x (N, in), W (in, out).
template <class T>
class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng)
        : weight_(gaussian_parameter<T>(Shape{in, out}, rng)), bias_(BasicTensor<T>::zeros(Shape{out}, true)) {}

    BasicTensor<T> forward(const BasicTensor<T>& x) const { return matmul(x, weight_) + bias_; }

    void collect(const std::string& prefix, NamedTensors<T>& params) const {
        params.emplace_back(prefix + ".weight", weight_);
        params.emplace_back(prefix + ".bias", bias_);
    }

    BasicTensor<T>& weight() { return weight_; }
    BasicTensor<T>& bias() { return bias_; }

private:
    BasicTensor<T> weight_, bias_;
};

template <class T>
class Conv3d {
public:
    Conv3d() = default;
    Conv3d(std::size_t in, std::size_t out, Triple kernel, Triple stride, Triple pad, Rng& rng)
        : weight_(gaussian_parameter<T>(Shape{out, in, kernel[0], kernel[1], kernel[2]}, rng)),
          bias_(BasicTensor<T>::zeros(Shape{out}, true)),
          stride_(stride),
          pad_(pad) {}

    BasicTensor<T> forward(const BasicTensor<T>& x) const { return conv3d(x, weight_, bias_, stride_, pad_); }

    void collect(const std::string& prefix, NamedTensors<T>& params) const {
        params.emplace_back(prefix + ".weight", weight_);
        params.emplace_back(prefix + ".bias", bias_);
    }

    BasicTensor<T>& weight() { return weight_; }

private:
    BasicTensor<T> weight_, bias_;
    Triple stride_{1, 1, 1}, pad_{0, 0, 0};
};

template <class T>
class ConvTranspose3d {
public:
    ConvTranspose3d() = default;
    ConvTranspose3d(std::size_t in, std::size_t out, Triple kernel, Triple stride, Triple pad, Rng& rng)
        : weight_(gaussian_parameter<T>(Shape{in, out, kernel[0], kernel[1], kernel[2]}, rng)),
          bias_(BasicTensor<T>::zeros(Shape{out}, true)),
          stride_(stride),
          pad_(pad) {}

    BasicTensor<T> forward(const BasicTensor<T>& x) const {
        return conv_transpose3d(x, weight_, bias_, stride_, pad_);
    }

    void collect(const std::string& prefix, NamedTensors<T>& params) const {
        params.emplace_back(prefix + ".weight", weight_);
        params.emplace_back(prefix + ".bias", bias_);
    }

    BasicTensor<T>& weight() { return weight_; }

private:
    BasicTensor<T> weight_, bias_;
    Triple stride_{1, 1, 1}, pad_{0, 0, 0};
};

template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t pad, Rng& rng)
        : weight_(gaussian_parameter<T>(Shape{out, in, kernel, kernel}, rng)),
          bias_(BasicTensor<T>::zeros(Shape{out}, true)),
          pad_(pad) {}

    BasicTensor<T> forward(const BasicTensor<T>& x) const { return conv2d(x, weight_, bias_, {1, 1}, {pad_, pad_}); }

    void collect(const std::string& prefix, NamedTensors<T>& params) const {
        params.emplace_back(prefix + ".weight", weight_);
        params.emplace_back(prefix + ".bias", bias_);
    }

    BasicTensor<T>& weight() { return weight_; }

private:
    BasicTensor<T> weight_, bias_;
    std::size_t pad_ = 0;
};

template <class T>
class BatchNorm {
public:
    BatchNorm() = default;
    explicit BatchNorm(std::size_t channels)
        : scale_(BasicTensor<T>::full(Shape{channels}, T{1}, true)),
          shift_(BasicTensor<T>::zeros(Shape{channels}, true)),
          running_mean_(BasicTensor<T>::zeros(Shape{channels})),
          running_var_(BasicTensor<T>::full(Shape{channels}, T{1})) {}

    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) {
        return batch_norm(x, scale_, shift_, running_mean_, running_var_, mode);
    }

    void collect(const std::string& prefix, NamedTensors<T>& params) const {
        params.emplace_back(prefix + ".scale", scale_);
        params.emplace_back(prefix + ".shift", shift_);
    }
    void collect_buffers(const std::string& prefix, NamedTensors<T>& buffers) const {
        buffers.emplace_back(prefix + ".running_mean", running_mean_);
        buffers.emplace_back(prefix + ".running_var", running_var_);
    }

private:
    BasicTensor<T> scale_, shift_, running_mean_, running_var_;
};

}  // namespace climgan
