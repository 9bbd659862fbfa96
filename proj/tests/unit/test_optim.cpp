// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "climgan/optim.hpp"

using namespace climgan;

namespace {

template <class T>
void set_grad(BasicTensor<T>& p, T g) {
    auto buf = p.mutable_grad();
    for (auto& x : buf) x = g;
}

}  // namespace

TEST(Adam, ZeroGradientIsFixedPoint) {
    NamedTensors<double> params{{"w", BasicTensor<double>(Shape{3}, {1.0, -2.0, 0.5}, true)}};
    AdamState<double> state({}, params);
    for (int t = 0; t < 5; ++t) {
        set_grad(params[0].second, 0.0);
        adam_step(params, state);
    }
    const auto w = params[0].second.data();
    EXPECT_EQ(w[0], 1.0);
    EXPECT_EQ(w[1], -2.0);
    EXPECT_EQ(w[2], 0.5);
    EXPECT_EQ(state.step_count, 5u);
}

// m = 0.25, v = 0.00025; bias-corrected m_hat = 0.5, v_hat = 0.25, so the
// step is 0.0002 * 0.5 / (0.5 + 1e-8).
TEST(Adam, SingleStepMatchesHandComputation) {
    const double expected = 1.0 - 0.0002 * 0.5 / (0.5 + 1e-8);
    EXPECT_NEAR(expected, 0.99980, 1e-7);

    NamedTensors<double> pd{{"theta", BasicTensor<double>(Shape{1}, {1.0}, true)}};
    AdamState<double> sd({0.0002, 0.5, 0.999, 1e-8}, pd);
    set_grad(pd[0].second, 0.5);
    adam_step(pd, sd);
    EXPECT_NEAR(pd[0].second.item(), expected, 1e-7);

    NamedTensors<float> pf{{"theta", Tensor(Shape{1}, {1.f}, true)}};
    AdamState<float> sf({0.0002, 0.5, 0.999, 1e-8}, pf);
    set_grad(pf[0].second, 0.5f);
    adam_step(pf, sf);
    EXPECT_NEAR(pf[0].second.item(), expected, 1e-7);
    EXPECT_FLOAT_EQ(sf.first_moment[0][0], 0.25f);
    EXPECT_FLOAT_EQ(sf.second_moment[0][0], 0.00025f);
}

// With a constant gradient both bias-corrected moments are exact, so each
// displacement is lr * |g| / (|g| + eps).
TEST(Adam, ConstantGradientDisplacementApproachesLearningRate) {
    NamedTensors<double> params{{"w", BasicTensor<double>(Shape{2}, {0.0, 0.0}, true)}};
    AdamState<double> state({0.0002, 0.5, 0.999, 1e-12}, params);
    double previous[2] = {0.0, 0.0};
    for (int t = 1; t <= 50; ++t) {
        auto g = params[0].second.mutable_grad();
        g[0] = 0.3;
        g[1] = -4.0;
        adam_step(params, state);
        const auto w = params[0].second.data();
        if (t == 2 || t == 50) {
            EXPECT_NEAR(previous[0] - w[0], 0.0002, 0.0002 * 0.01);
            EXPECT_NEAR(w[1] - previous[1], 0.0002, 0.0002 * 0.01);
        }
        previous[0] = w[0];
        previous[1] = w[1];
    }
}

TEST(Adam, MissingGradientNamesParameter) {
    NamedTensors<float> params{{"gen.fc1.weight", Tensor(Shape{2}, {1.f, 2.f}, true)}};
    AdamState<float> state({}, params);
    try {
        adam_step(params, state);
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("gen.fc1.weight"), std::string::npos);
    }
    EXPECT_EQ(state.step_count, 0u);
}

TEST(Adam, MomentsStartAtZeroWithParameterShapes) {
    NamedTensors<float> params{{"a", Tensor::zeros(Shape{2, 3}, true)}, {"b", Tensor::zeros(Shape{4}, true)}};
    AdamState<float> state({}, params);
    ASSERT_EQ(state.first_moment.size(), 2u);
    EXPECT_EQ(state.first_moment[0].size(), 6u);
    EXPECT_EQ(state.second_moment[1].size(), 4u);
    for (float m : state.first_moment[0]) EXPECT_EQ(m, 0.f);
}
