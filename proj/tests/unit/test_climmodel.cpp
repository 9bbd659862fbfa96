// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "climgan/climmodel.hpp"
#include "../support/gradcheck.hpp"

using namespace climgan;
using climgan::testing::check_gradients;
using climgan::testing::weighted_sum;

namespace {

template <class T>
BasicContext<T> random_context(const ModelSpec& s, std::size_t n, Rng& rng) {
    return {BasicTensor<T>::randn(Shape{n, 2, s.height, s.width}, rng),
            BasicTensor<T>::randn(Shape{n, s.context_days * s.variables, s.height, s.width}, rng)};
}

std::vector<std::size_t> dims_of(const LayerShape& l) { return l.shape; }

const LayerShape& find(const std::vector<LayerShape>& trace, const std::string& name) {
    for (const auto& l : trace)
        if (l.name == name) return l;
    throw std::runtime_error("no layer " + name);
}

/// Tiny spec for double-precision gradient checks.
ModelSpec tiny_spec() {
    ModelSpec s = ModelSpec::desk();
    s.days = 4;
    s.height = 4;
    s.width = 8;
    s.context_days = 2;
    s.noise_dim = 6;
    s.fc_hidden = 8;
    s.seed_shape = {4, 1, 1, 2};
    s.gen_channels = {4, 7};
    s.gen_strides = {{2, 2, 2}, {2, 2, 2}};
    s.gen_kernels = {{4, 4, 4}, {4, 4, 4}};
    s.ctx_channels = 2;
    s.disc_channels = {3, 4};
    s.disc_strides = {{2, 2, 2}, {2, 2, 2}};
    s.disc_kernels = {{4, 4, 4}, {4, 4, 4}};
    s.disc_fc_hidden = 5;
    return s;
}

}  // namespace

TEST(ModelSpec, PaperAndDeskSpecsValidate) {
    EXPECT_NO_THROW(ModelSpec::paper().validate());
    EXPECT_NO_THROW(ModelSpec::desk().validate());
    EXPECT_EQ(ModelSpec::paper().seed_size(), 4096u);
    EXPECT_EQ(ModelSpec::paper().discriminator_input_channels(), 44u);
}

TEST(ModelSpec, InconsistentSpecRejectedAtConstruction) {
    Rng rng(1);
    ModelSpec s = ModelSpec::desk();
    s.gen_strides[0] = {1, 2, 2};  // T would land on 4, not 8
    s.gen_kernels[0] = {3, 4, 4};
    EXPECT_THROW(s.validate(), std::invalid_argument);
    EXPECT_THROW(Generator(s, rng), std::invalid_argument);

    ModelSpec wrong_out = ModelSpec::desk();
    wrong_out.gen_channels.back() = 6;
    EXPECT_THROW(wrong_out.validate(), std::invalid_argument);

    ModelSpec indivisible = ModelSpec::desk();
    indivisible.height = 18;
    EXPECT_THROW(indivisible.validate(), std::invalid_argument);
}

TEST(ModelSpec, JsonRoundTripAndUnknownKeys) {
    const ModelSpec s = ModelSpec::desk();
    json j = s;
    EXPECT_EQ(j.get<ModelSpec>(), s);
    j["bogus"] = 1;
    EXPECT_THROW(j.get<ModelSpec>(), FormatError);
}

TEST(Trace, PaperScaleShapes) {
    const auto g = trace_generator(ModelSpec::paper());
    EXPECT_EQ(find(g, "noise").shape, (std::vector<std::size_t>{100}));
    EXPECT_EQ(find(g, "fc2").shape, (std::vector<std::size_t>{4096}));
    EXPECT_EQ(g.back().shape, (std::vector<std::size_t>{7, 32, 128, 256}));
    const std::vector<std::vector<std::size_t>> stages{{2, 4}, {4, 8}, {8, 16}, {16, 32}, {32, 64}, {64, 128}};
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto d = find(g, "context" + std::to_string(i + 1)).shape;
        EXPECT_EQ((std::vector<std::size_t>{d[1], d[2]}), stages[i]);
        const auto in = find(g, "upconv" + std::to_string(i + 1) + ".input").shape;
        EXPECT_EQ((std::vector<std::size_t>{in[2], in[3]}), stages[i]);
    }
    const auto d = trace_discriminator(ModelSpec::paper());
    EXPECT_EQ(d.front().shape[0], 44u);
    EXPECT_EQ(d.back().shape, (std::vector<std::size_t>{1}));
}

TEST(Generator, DeskForwardShapeAndPyramid) {
    Rng rng(2);
    const ModelSpec s = ModelSpec::desk();
    Generator g(s, rng);
    const auto ctx = random_context<float>(s, 2, rng);
    const auto stages = g.context_pyramid(ctx);
    const std::vector<std::pair<std::size_t, std::size_t>> expected{{1, 2}, {2, 4}, {4, 8}, {8, 16}};
    ASSERT_EQ(stages.size(), expected.size());
    for (std::size_t i = 0; i < stages.size(); ++i) {
        EXPECT_EQ(stages[i].shape(), (Shape{2, s.ctx_channels, expected[i].first, expected[i].second}));
    }
    auto y = g.forward(Tensor::randn(Shape{2, s.noise_dim}, rng), ctx, Mode::train);
    EXPECT_EQ(y.shape(), (Shape{2, 7, 8, 16, 32}));
}

TEST(Generator, ZeroContextZeroPyramidGivesZeroStages) {
    Rng rng(3);
    const ModelSpec s = ModelSpec::desk();
    Generator g(s, rng);
    for (auto& [name, p] : g.parameters())
        if (name.rfind("gen.ctx", 0) == 0) {
            for (auto& v : p.mutable_data()) v = 0.f;
        }
    BasicContext<float> ctx{Tensor::zeros(Shape{1, 2, s.height, s.width}),
                            Tensor::zeros(Shape{1, s.context_days * 7, s.height, s.width})};
    for (const auto& stage : g.context_pyramid(ctx))
        for (float v : stage.data()) EXPECT_EQ(v, 0.f);
}

TEST(Generator, OutputRangeHoldsForArbitraryWeights) {
    Rng rng(4);
    const ModelSpec s = ModelSpec::desk();
    for (int draw = 0; draw < 10; ++draw) {
        Generator g(s, rng);
        const float scale = 1.f + 50.f * static_cast<float>(draw);
        for (auto& [name, p] : g.parameters())
            for (auto& v : p.mutable_data()) v = static_cast<float>(rng.normal()) * scale * 0.02f;
        auto y = g.forward(Tensor::randn(Shape{2, s.noise_dim}, rng, 3.0), random_context<float>(s, 2, rng),
                           draw % 2 ? Mode::train : Mode::eval);
        const std::size_t plane = s.days * s.height * s.width;
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t v = 0; v < 7; ++v)
                for (std::size_t i = 0; i < plane; ++i) {
                    const float x = y.data()[(n * 7 + v) * plane + i];
                    ASSERT_TRUE(std::isfinite(x));
                    if (v == kPr) {
                        ASSERT_GE(x, 0.f);
                    }
                    if (v >= kHurmin && v <= kHurmax) {
                        ASSERT_GT(x, 0.f);
                        ASSERT_LT(x, 1.f);
                    }
                }
    }
}

TEST(Generator, EvalModeIsBitDeterministic) {
    const ModelSpec s = ModelSpec::desk();
    auto run = [&] {
        Rng rng(5);
        Generator g(s, rng);
        auto z = Tensor::randn(Shape{1, s.noise_dim}, rng);
        auto ctx = random_context<float>(s, 1, rng);
        return g.forward(z, ctx, Mode::eval).values();
    };
    EXPECT_EQ(run(), run());
}

TEST(Generator, BadNoiseShapeThrows) {
    Rng rng(6);
    Generator g(ModelSpec::desk(), rng);
    EXPECT_THROW(g.forward(Tensor::zeros(Shape{2, 3}), random_context<float>(ModelSpec::desk(), 2, rng), Mode::train),
                 ShapeError);
}

TEST(Discriminator, OutputInUnitIntervalAndZeroFinalLayerGivesHalf) {
    Rng rng(7);
    const ModelSpec s = ModelSpec::desk();
    Discriminator d(s, rng);
    auto y = Tensor::randn(Shape{3, 7, s.days, s.height, s.width}, rng);
    auto ctx = random_context<float>(s, 3, rng);
    auto p = d.forward(y, ctx, Mode::train);
    ASSERT_EQ(p.shape(), (Shape{3, 1}));
    for (float v : p.data()) {
        EXPECT_GT(v, 0.f);
        EXPECT_LT(v, 1.f);
    }
    for (auto& v : d.final_layer().weight().mutable_data()) v = 0.f;
    const auto half = d.forward(y, ctx, Mode::train);
    for (float v : half.data()) EXPECT_EQ(v, 0.5f);
}

TEST(Discriminator, RejectsMismatchedInput) {
    Rng rng(8);
    const ModelSpec s = ModelSpec::desk();
    Discriminator d(s, rng);
    auto ctx = random_context<float>(s, 2, rng);
    EXPECT_THROW(d.forward(Tensor::zeros(Shape{2, 7, s.days, s.height, s.width + 2}), ctx, Mode::train), ShapeError);
    EXPECT_THROW(d.forward(Tensor::zeros(Shape{3, 7, s.days, s.height, s.width}), ctx, Mode::train), ShapeError);
}

TEST(Models, GradientsReachNoiseThroughBothNetworks) {
    Rng rng(9);
    const ModelSpec s = ModelSpec::desk();
    Generator g(s, rng);
    Discriminator d(s, rng);
    auto z = Tensor::randn(Shape{2, s.noise_dim}, rng, 1.0, true);
    auto ctx = random_context<float>(s, 2, rng);
    sum(d.forward(g.forward(z, ctx, Mode::train), ctx, Mode::train)).backward();
    ASSERT_TRUE(z.has_grad());
    double norm = 0;
    for (float v : z.grad()) {
        ASSERT_TRUE(std::isfinite(v));
        norm += std::abs(v);
    }
    EXPECT_GT(norm, 0.0);
}

TEST(Models, RandomSmallSpecsProduceDeclaredShape) {
    Rng rng(10);
    for (int trial = 0; trial < 25; ++trial) {
        ModelSpec s = ModelSpec::desk();
        const std::size_t layers = 1 + rng.uniform_index(3);
        s.seed_shape = {1 + rng.uniform_index(3), 1 + rng.uniform_index(2), 1 + rng.uniform_index(2), 1 + rng.uniform_index(2)};
        s.gen_channels.clear();
        s.gen_strides.clear();
        s.gen_kernels.clear();
        std::size_t t = s.seed_shape[1];
        for (std::size_t i = 0; i < layers; ++i) {
            const std::size_t st = 1 + rng.uniform_index(2);
            s.gen_strides.push_back({st, 2, 2});
            s.gen_kernels.push_back({st + 2, 4, 4});
            s.gen_channels.push_back(i + 1 == layers ? 7 : 1 + rng.uniform_index(4));
            t *= st;
        }
        s.days = t;
        s.height = s.seed_shape[2] << layers;
        s.width = s.seed_shape[3] << layers;
        s.context_days = 1 + rng.uniform_index(std::min<std::size_t>(t, 2));
        s.noise_dim = 3;
        s.fc_hidden = 5;
        s.ctx_channels = 1 + rng.uniform_index(2);
        s.disc_channels = {2, 3};
        s.disc_strides.clear();
        s.disc_kernels.clear();
        Triple e{s.days, s.height, s.width};
        for (int i = 0; i < 2; ++i) {
            Triple st{}, k{};
            for (int a = 0; a < 3; ++a) {
                st[a] = e[a] >= 2 ? 2 : 1;
                k[a] = st[a] + 2;
                e[a] = conv_out_extent(e[a], k[a], st[a], 1);
            }
            s.disc_strides.push_back(st);
            s.disc_kernels.push_back(k);
        }
        s.disc_fc_hidden = 4;
        ASSERT_NO_THROW(s.validate()) << json(s).dump();
        BasicGenerator<float> g(s, rng);
        auto y = g.forward(Tensor::randn(Shape{2, 3}, rng), random_context<float>(s, 2, rng), Mode::train);
        EXPECT_EQ(y.shape(), (Shape{2, 7, s.days, s.height, s.width}));
        EXPECT_EQ(dims_of(trace_generator(s).back()), (std::vector<std::size_t>{7, s.days, s.height, s.width}));
        BasicDiscriminator<float> d(s, rng);
        EXPECT_EQ(d.forward(y, random_context<float>(s, 2, rng), Mode::train).shape(), (Shape{2, 1}));
    }
}

TEST(Models, TinySpecGradCheck) {
    Rng rng(11);
    const ModelSpec s = tiny_spec();
    BasicGenerator<double> g(s, rng);
    BasicDiscriminator<double> d(s, rng);
    auto z = BasicTensor<double>::randn(Shape{2, s.noise_dim}, rng, 1.0, true);
    auto ctx = random_context<double>(s, 2, rng);
    auto r = BasicTensor<double>::randn(Shape{2, 7, s.days, s.height, s.width}, rng);
    auto gen_inputs = g.parameters();
    gen_inputs.emplace_back("z", z);
    auto res = check_gradients<double>(gen_inputs, [&] { return weighted_sum(g.forward(z, ctx, Mode::train), r); },
                                       {.step = 1e-6, .max_entries = 16});
    EXPECT_TRUE(res.ok()) << res.worst_entry;

    auto y = BasicTensor<double>::randn(Shape{2, 7, s.days, s.height, s.width}, rng, 1.0, true);
    auto disc_inputs = d.parameters();
    disc_inputs.emplace_back("y", y);
    auto res_d = check_gradients<double>(disc_inputs, [&] { return sum(d.logits(y, ctx, Mode::train)); },
                                         {.step = 1e-6, .max_entries = 16});
    EXPECT_TRUE(res_d.ok()) << res_d.worst_entry;
}
