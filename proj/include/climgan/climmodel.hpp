// SPDX-License-Identifier: Apache-2.0
//
// Conditional generator and discriminator over month-long gridded forecasts.
//
// The generator projects noise through two dense layers, reshapes it into a
// coarse spatio-temporal seed and upsamples it with transposed 3d convs. The
// conditioning maps (c1: month means of pr and tas; c2: the K preceding days of
// every variable) are pooled into a pyramid whose stage i, replicated along
// time, is appended to the channels entering up-conv i. The discriminator sees
// the forecast with both contexts appended along channels.

#pragma once

#include <string>
#include <vector>

#include "climgan/model_spec.hpp"
#include "climgan/nn.hpp"

namespace climgan {

/// Batched conditioning maps: c1 (N, 2, H, W), c2 (N, K*V, H, W), normalized.
/// c1 channels are (pr, tas); c2 is day-major (day -K .. -1), then variable.
template <class T>
struct BasicContext {
    BasicTensor<T> c1;
    BasicTensor<T> c2;

    std::size_t batch() const { return c1.dim(0); }
};

using ConditioningContext = BasicContext<float>;

template <class T>
void check_context(const BasicContext<T>& ctx, const ModelSpec& spec) {
    const Shape& s1 = ctx.c1.shape();
    const Shape& s2 = ctx.c2.shape();
    if (s1.rank() != 4 || s1[1] != 2 || s1[2] != spec.height || s1[3] != spec.width)
        throw ShapeError("c1 must be (N, 2, " + std::to_string(spec.height) + ", " + std::to_string(spec.width) +
                         "), got " + s1.str());
    if (s2.rank() != 4 || s2[0] != s1[0] || s2[1] != spec.context_days * spec.variables || s2[2] != spec.height ||
        s2[3] != spec.width)
        throw ShapeError("c2 must be (N, " + std::to_string(spec.context_days * spec.variables) + ", " +
                         std::to_string(spec.height) + ", " + std::to_string(spec.width) + "), got " + s2.str());
}

namespace detail {
/// (N, C, H, W) -> (N, C, t, H, W) by replication along time.
template <class T>
BasicTensor<T> replicate_in_time(const BasicTensor<T>& x, std::size_t t) {
    const Shape& s = x.shape();
    auto x5 = reshape(x, Shape{s[0], s[1], 1, s[2], s[3]});
    return broadcast_to(x5, Shape{s[0], s[1], t, s[2], s[3]});
}
}  // namespace detail

//------------------------------------------------------------------------------
// Symbolic shape propagation
//------------------------------------------------------------------------------

struct LayerShape {
    std::string name;
    std::vector<std::size_t> shape;  // per sample, without the batch axis
};

/// Per-sample shapes through the generator, computed from the spec alone.
inline std::vector<LayerShape> trace_generator(const ModelSpec& spec) {
    spec.validate();
    std::vector<LayerShape> out;
    out.push_back({"noise", {spec.noise_dim}});
    out.push_back({"fc1", {spec.fc_hidden}});
    out.push_back({"fc2", {spec.seed_size()}});
    out.push_back({"seed", {spec.seed_shape[0], spec.seed_shape[1], spec.seed_shape[2], spec.seed_shape[3]}});
    const std::size_t layers = spec.generator_layers();
    for (std::size_t i = 0; i < layers; ++i) {
        const std::size_t scale = std::size_t{1} << (layers - i);
        out.push_back({"context" + std::to_string(i + 1), {spec.ctx_channels, spec.height / scale, spec.width / scale}});
    }
    std::size_t channels = spec.seed_shape[0];
    for (std::size_t i = 0; i < layers; ++i) {
        const Triple in = spec.generator_layer_input(i);
        out.push_back({"upconv" + std::to_string(i + 1) + ".input", {channels + spec.ctx_channels, in[0], in[1], in[2]}});
        const Triple next = spec.generator_layer_input(i + 1);
        channels = spec.gen_channels[i];
        out.push_back({"upconv" + std::to_string(i + 1), {channels, next[0], next[1], next[2]}});
    }
    return out;
}

inline std::vector<LayerShape> trace_discriminator(const ModelSpec& spec) {
    spec.validate();
    std::vector<LayerShape> out;
    out.push_back({"input", {spec.discriminator_input_channels(), spec.days, spec.height, spec.width}});
    for (std::size_t i = 0; i < spec.disc_channels.size(); ++i) {
        const Triple e = spec.discriminator_layer_output(i);
        out.push_back({"conv" + std::to_string(i + 1), {spec.disc_channels[i], e[0], e[1], e[2]}});
    }
    out.push_back({"flatten", {spec.discriminator_flat_size()}});
    out.push_back({"fc1", {spec.disc_fc_hidden}});
    out.push_back({"fc2", {1}});
    return out;
}

//------------------------------------------------------------------------------
// Generator
//------------------------------------------------------------------------------

template <class T>
class BasicGenerator {
public:
    BasicGenerator(const ModelSpec& spec, Rng& rng) : spec_(spec) {
        spec_.validate();
        fc1_ = Linear<T>(spec_.noise_dim, spec_.fc_hidden, rng);
        fc2_ = Linear<T>(spec_.fc_hidden, spec_.seed_size(), rng);
        const std::size_t layers = spec_.generator_layers();
        std::size_t ctx_in = spec_.context_input_channels();
        for (std::size_t i = 0; i < layers; ++i) {
            pyramid_.emplace_back(ctx_in, spec_.ctx_channels, spec_.ctx_kernel, spec_.ctx_kernel / 2, rng);
            ctx_in = spec_.ctx_channels;
        }
        std::size_t channels = spec_.seed_shape[0];
        for (std::size_t i = 0; i < layers; ++i) {
            upconv_.emplace_back(channels + spec_.ctx_channels, spec_.gen_channels[i], spec_.gen_kernels[i],
                                 spec_.gen_strides[i], spec_.pad3(), rng);
            if (i + 1 < layers) norms_.emplace_back(spec_.gen_channels[i]);
            channels = spec_.gen_channels[i];
        }
    }

    const ModelSpec& spec() const { return spec_; }

    /// Context stages ordered coarsest first; stage i matches the spatial
    /// extents entering up-conv i.
    std::vector<BasicTensor<T>> context_pyramid(const BasicContext<T>& ctx) const {
        check_context(ctx, spec_);
        std::vector<BasicTensor<T>> fine_to_coarse;
        BasicTensor<T> h = concat<T>({ctx.c1, ctx.c2}, 1);
        for (const auto& conv : pyramid_) {
            h = maxpool2d(relu(conv.forward(h)));
            fine_to_coarse.push_back(h);
        }
        return {fine_to_coarse.rbegin(), fine_to_coarse.rend()};
    }

    /// z (N, z_dim) -> forecast (N, V, T, H, W).
    BasicTensor<T> forward(const BasicTensor<T>& z, const BasicContext<T>& ctx, Mode mode) {
        if (z.shape().rank() != 2 || z.dim(1) != spec_.noise_dim)
            throw ShapeError("generator noise must be (N, " + std::to_string(spec_.noise_dim) + "), got " +
                             z.shape().str());
        if (ctx.batch() != z.dim(0)) throw ShapeError("generator: noise and context batch sizes differ");
        const std::size_t n = z.dim(0);
        const auto stages = context_pyramid(ctx);
        auto h = fc2_.forward(relu(fc1_.forward(z)));
        h = reshape(h, Shape{n, spec_.seed_shape[0], spec_.seed_shape[1], spec_.seed_shape[2], spec_.seed_shape[3]});
        const std::size_t layers = upconv_.size();
        for (std::size_t i = 0; i < layers; ++i) {
            h = concat<T>({h, detail::replicate_in_time(stages[i], h.dim(2))}, 1);
            h = upconv_[i].forward(h);
            if (i + 1 < layers) h = relu(norms_[i].forward(h, mode));
        }
        return output_activation(h);
    }

    NamedTensors<T> parameters() const {
        NamedTensors<T> p;
        fc1_.collect("gen.fc1", p);
        fc2_.collect("gen.fc2", p);
        for (std::size_t i = 0; i < pyramid_.size(); ++i) pyramid_[i].collect("gen.ctx" + std::to_string(i + 1), p);
        for (std::size_t i = 0; i < upconv_.size(); ++i) {
            upconv_[i].collect("gen.upconv" + std::to_string(i + 1), p);
            if (i < norms_.size()) norms_[i].collect("gen.bn" + std::to_string(i + 1), p);
        }
        return p;
    }

    NamedTensors<T> buffers() const {
        NamedTensors<T> b;
        for (std::size_t i = 0; i < norms_.size(); ++i) norms_[i].collect_buffers("gen.bn" + std::to_string(i + 1), b);
        return b;
    }

private:
    /// Temperatures unconstrained, humidity through a sigmoid, precipitation
    /// through a ReLU.
    static BasicTensor<T> output_activation(const BasicTensor<T>& y) {
        auto temperature = slice(y, 1, kTasmin, 3);
        auto humidity = sigmoid(slice(y, 1, kHurmin, 3));
        auto precipitation = relu(slice(y, 1, kPr, 1));
        return concat<T>({temperature, humidity, precipitation}, 1);
    }

    ModelSpec spec_;
    Linear<T> fc1_, fc2_;
    std::vector<Conv2d<T>> pyramid_;
    std::vector<ConvTranspose3d<T>> upconv_;
    std::vector<BatchNorm<T>> norms_;
};

//------------------------------------------------------------------------------
// Discriminator
//------------------------------------------------------------------------------

template <class T>
class BasicDiscriminator {
public:
    BasicDiscriminator(const ModelSpec& spec, Rng& rng) : spec_(spec) {
        spec_.validate();
        std::size_t channels = spec_.discriminator_input_channels();
        for (std::size_t i = 0; i < spec_.disc_channels.size(); ++i) {
            convs_.emplace_back(channels, spec_.disc_channels[i], spec_.disc_kernels[i], spec_.disc_strides[i],
                                spec_.pad3(), rng);
            // The first conv layer has no batch norm.
            if (i > 0) norms_.emplace_back(spec_.disc_channels[i]);
            channels = spec_.disc_channels[i];
        }
        fc1_ = Linear<T>(spec_.discriminator_flat_size(), spec_.disc_fc_hidden, rng);
        fc_norm_ = BatchNorm<T>(spec_.disc_fc_hidden);
        fc2_ = Linear<T>(spec_.disc_fc_hidden, 1, rng);
    }

    const ModelSpec& spec() const { return spec_; }

    /// Pre-sigmoid scores (N, 1) for forecasts y (N, V, T, H, W).
    BasicTensor<T> logits(const BasicTensor<T>& y, const BasicContext<T>& ctx, Mode mode) {
        const Shape& s = y.shape();
        if (s.rank() != 5 || s[1] != spec_.variables || s[2] != spec_.days || s[3] != spec_.height ||
            s[4] != spec_.width)
            throw ShapeError("discriminator input must be (N, " + std::to_string(spec_.variables) + ", " +
                             std::to_string(spec_.days) + ", " + std::to_string(spec_.height) + ", " +
                             std::to_string(spec_.width) + "), got " + s.str());
        check_context(ctx, spec_);
        if (ctx.batch() != s[0]) throw ShapeError("discriminator: sample and context batch sizes differ");
        auto h = concat<T>({y, detail::replicate_in_time(ctx.c1, spec_.days), detail::replicate_in_time(ctx.c2, spec_.days)},
                           1);
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            h = convs_[i].forward(h);
            if (i > 0) h = norms_[i - 1].forward(h, mode);
            h = leaky_relu(h);
        }
        h = reshape(h, Shape{s[0], spec_.discriminator_flat_size()});
        h = leaky_relu(fc_norm_.forward(fc1_.forward(h), mode));
        return fc2_.forward(h);
    }

    /// Probability (N, 1) that each forecast is real.
    BasicTensor<T> forward(const BasicTensor<T>& y, const BasicContext<T>& ctx, Mode mode) {
        return sigmoid(logits(y, ctx, mode));
    }

    NamedTensors<T> parameters() const {
        NamedTensors<T> p;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            convs_[i].collect("disc.conv" + std::to_string(i + 1), p);
            if (i > 0) norms_[i - 1].collect("disc.bn" + std::to_string(i + 1), p);
        }
        fc1_.collect("disc.fc1", p);
        fc_norm_.collect("disc.fc_bn", p);
        fc2_.collect("disc.fc2", p);
        return p;
    }

    NamedTensors<T> buffers() const {
        NamedTensors<T> b;
        for (std::size_t i = 0; i < norms_.size(); ++i) norms_[i].collect_buffers("disc.bn" + std::to_string(i + 2), b);
        fc_norm_.collect_buffers("disc.fc_bn", b);
        return b;
    }

    Linear<T>& final_layer() { return fc2_; }

private:
    ModelSpec spec_;
    std::vector<Conv3d<T>> convs_;
    std::vector<BatchNorm<T>> norms_;
    Linear<T> fc1_, fc2_;
    BatchNorm<T> fc_norm_;
};

using Generator = BasicGenerator<float>;
using Discriminator = BasicDiscriminator<float>;

}  // namespace climgan
