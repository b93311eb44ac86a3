#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rfrl/rng.hpp"
#include "rfrl/errors.hpp"
#include "rfrl/optim.hpp"

using namespace rfrl;

TEST(Adam, ZeroGradientLeavesParamsAndCountsTheStep) {
    Tensor<float> p({3}, {1.0f, -2.0f, 0.5f});
    const Tensor<float> before = p;
    std::map<std::string, Tensor<float>*> params{{"p", &p}};
    auto st = AdamState<float>::from_config({});
    adam_step(params, {{"p", Tensor<float>({3})}}, st);
    EXPECT_TRUE(p.identical(before));
    EXPECT_EQ(st.step, 1u);
    adam_step(params, {}, st);
    EXPECT_TRUE(p.identical(before));
    EXPECT_EQ(st.step, 2u);
}

// t = 1: m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
TEST(Adam, FirstStepHandValue) {
    Tensor<double> p({1}, 1.0);
    std::map<std::string, Tensor<double>*> params{{"p", &p}};
    auto st = AdamState<double>::from_config({.lr = 0.1});
    adam_step(params, {{"p", Tensor<double>({1}, 1.0)}}, st);
    EXPECT_NEAR(p[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p[0], 0.9, 1e-8);
}

TEST(Adam, IdenticalParamsGetIdenticalUpdates) {
    Tensor<float> a({4}, {0.1f, 0.2f, 0.3f, 0.4f}), b = a;
    std::map<std::string, Tensor<float>*> params{{"a", &a}, {"b", &b}};
    const Tensor<float> g({4}, {1.0f, -0.5f, 0.25f, 3.0f});
    auto st = AdamState<float>::from_config({.lr = 0.01});
    for (int i = 0; i < 5; ++i) adam_step(params, {{"a", g}, {"b", g}}, st);
    EXPECT_TRUE(a.identical(b));
}

TEST(Adam, NonFiniteGradientAbortsWithoutTouchingState) {
    Tensor<float> a({2}, 1.0f), b({2}, 1.0f);
    std::map<std::string, Tensor<float>*> params{{"a", &a}, {"b", &b}};
    auto st = AdamState<float>::from_config({});
    adam_step(params, {{"a", Tensor<float>({2}, 1.0f)}, {"b", Tensor<float>({2}, 1.0f)}}, st);
    const auto snapshot = st;
    const Tensor<float> a0 = a, b0 = b;
    Tensor<float> bad({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
    EXPECT_THROW(adam_step(params, {{"a", Tensor<float>({2}, 1.0f)}, {"b", bad}}, st), NumericsError);
    EXPECT_EQ(st.step, snapshot.step);
    EXPECT_TRUE(st.m.at("a").identical(snapshot.m.at("a")));
    EXPECT_TRUE(a.identical(a0));
    EXPECT_TRUE(b.identical(b0));
}

TEST(Adam, ShapeMismatchIsRejected) {
    Tensor<float> a({2}, 1.0f);
    std::map<std::string, Tensor<float>*> params{{"a", &a}};
    auto st = AdamState<float>::from_config({});
    EXPECT_THROW(adam_step(params, {{"a", Tensor<float>({3})}}, st), ShapeError);
}

TEST(Adam, ConvergesOnParabola) {
    Tensor<double> p({1}, 1.0);
    std::map<std::string, Tensor<double>*> params{{"p", &p}};
    auto st = AdamState<double>::from_config({.lr = 0.1});
    for (int i = 0; i < 500; ++i) adam_step(params, {{"p", Tensor<double>({1}, 2.0 * p[0])}}, st);
    EXPECT_LT(std::abs(p[0]), 1e-2);
}

TEST(Plateau, ImprovementKeepsTheRate) {
    PlateauState s;
    double lr = 1e-4;
    std::tie(lr, s) = plateau_update(s, 1.0, lr);
    std::tie(lr, s) = plateau_update(s, 0.9, lr);
    EXPECT_EQ(lr, 1e-4);
    EXPECT_EQ(s.epochs_since_improve, 0);
    EXPECT_EQ(s.best_val_loss, 0.9);
}

TEST(Plateau, SixStaleEpochsCutTheRateTenfold) {
    PlateauState s;
    double lr = 1e-4;
    std::tie(lr, s) = plateau_update(s, 0.5, lr);
    for (int i = 1; i <= 6; ++i) {
        EXPECT_EQ(lr, 1e-4) << "before stale epoch " << i;
        std::tie(lr, s) = plateau_update(s, 0.5, lr);  // equal is not an improvement
    }
    EXPECT_DOUBLE_EQ(lr, 1e-5);
    EXPECT_EQ(s.epochs_since_improve, 0);
}

TEST(Plateau, FloorsAtMinLrAndNeverIncreases) {
    PlateauState s;
    double lr = 1e-4, prev = lr;
    for (int epoch = 0; epoch < 200; ++epoch) {
        std::tie(lr, s) = plateau_update(s, epoch % 17 == 0 ? 1.0 / (epoch + 1) : 5.0, lr);
        EXPECT_LE(lr, prev);
        EXPECT_GE(lr, s.config.min_lr);
        prev = lr;
    }
    EXPECT_EQ(lr, 1e-7);
    std::tie(lr, s) = plateau_update(s, 10.0, lr);
    EXPECT_EQ(lr, 1e-7);
}
