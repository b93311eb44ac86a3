#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "rfrl/errors.hpp"
#include "rfrl/losses.hpp"
#include "rfrl/ops.hpp"
#include "rfrl/rng.hpp"

using namespace rfrl;

TEST(CrossEntropy, UniformThreeClassIsLogThree) {
    Tape<double> tape;
    auto p = tape.leaf(Tensor<double>({4, 3}, 1.0 / 3.0));
    Tensor<double> y({4, 3});
    for (std::size_t b = 0; b < 4; ++b) y[b * 3 + b % 3] = 1.0;
    const double v = losses::cross_entropy(p, tape.constant(y)).value().item();
    EXPECT_NEAR(v, std::log(3.0), 1e-12);
}

TEST(CrossEntropy, PerfectPredictionIsZeroAndClampBoundsTheLoss) {
    Tape<double> tape;
    auto y = tape.constant(Tensor<double>({1, 2}, {1.0, 0.0}));
    EXPECT_EQ(losses::cross_entropy(tape.leaf(Tensor<double>({1, 2}, {1.0, 0.0})), y).value().item(), 0.0);
    const double worst = losses::cross_entropy(tape.leaf(Tensor<double>({1, 2}, {0.0, 1.0})), y).value().item();
    EXPECT_NEAR(worst, -std::log(1e-7), 1e-9);
}

TEST(CrossEntropy, ContractViolations) {
    Tape<double> tape;
    auto p = tape.leaf(Tensor<double>({1, 3}, {0.2, 0.2, 0.2}));
    auto y = tape.constant(Tensor<double>({1, 3}, {1, 0, 0}));
    EXPECT_THROW(losses::cross_entropy(p, y), ContractError);
    auto q = tape.leaf(Tensor<double>({1, 3}, {0.2, 0.3, 0.5}));
    auto not_one_hot = tape.constant(Tensor<double>({1, 3}, {0.5, 0.5, 0}));
    EXPECT_THROW(losses::cross_entropy(q, not_one_hot), ContractError);
}

TEST(Mse, ValueAndZeroGradientAtMinimum) {
    Tape<double> tape;
    auto a = tape.leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}), true);
    auto b = tape.constant(Tensor<double>({2, 2}, {1, 0, 3, 2}));
    EXPECT_DOUBLE_EQ(losses::mse(a, b).value().item(), 2.0);
    auto g = tape.backward(losses::mse(a, tape.constant(a.value())));
    for (double v : g.at(a).data()) EXPECT_EQ(v, 0.0);
}

TEST(Frs, SelfPairedFeaturesGiveZero) {
    for (FrsNorm norm : {FrsNorm::squared_mean, FrsNorm::abs_mean, FrsNorm::rms}) {
        Tape<double> tape;
        Rng rng(1);
        std::vector<Var<double>> enc;
        for (std::size_t s : {8u, 4u, 2u}) {
            Tensor<double> t({2, 3, s, s});
            for (auto& v : t.data()) v = rng.normal();
            enc.push_back(tape.leaf(t, true));
        }
        std::vector<Var<double>> dec(enc.rbegin(), enc.rend());
        EXPECT_EQ(losses::frs_loss<double>(enc, dec, norm).value().item(), 0.0) << to_string(norm);
    }
}

TEST(Frs, HandComputedTwoStageValue) {
    Tape<double> tape;
    std::vector<Var<double>> enc{tape.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4})),
                                 tape.leaf(Tensor<double>({1, 2, 1, 1}, {0, 0}))};
    std::vector<Var<double>> dec{tape.leaf(Tensor<double>({1, 2, 1, 1}, {3, 4})),
                                 tape.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 6}))};
    // pair 0: diff (0,0,0,-2) -> mean sq 1, mean abs 0.5, rms 1
    // pair 1: diff (-3,-4)    -> mean sq 12.5, mean abs 3.5, rms sqrt(12.5)
    EXPECT_DOUBLE_EQ(losses::frs_loss<double>(enc, dec, FrsNorm::squared_mean).value().item(), (1.0 + 12.5) / 2);
    EXPECT_DOUBLE_EQ(losses::frs_loss<double>(enc, dec, FrsNorm::abs_mean).value().item(), (0.5 + 3.5) / 2);
    EXPECT_DOUBLE_EQ(losses::frs_loss<double>(enc, dec, FrsNorm::rms).value().item(), (1.0 + std::sqrt(12.5)) / 2);
}

TEST(Frs, MismatchedPairNamesTheStage) {
    Tape<double> tape;
    std::vector<Var<double>> enc{tape.leaf(Tensor<double>({1, 1, 2, 2})), tape.leaf(Tensor<double>({1, 2, 1, 1}))};
    std::vector<Var<double>> dec{tape.leaf(Tensor<double>({1, 3, 1, 1})), tape.leaf(Tensor<double>({1, 1, 2, 2}))};
    try {
        losses::frs_loss<double>(enc, dec);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("pair 1"), std::string::npos) << e.what();
    }
}

TEST(TotalLoss, IsTheExactUnweightedSum) {
    ModelConfig cfg;
    cfg.height = cfg.width = 16;
    const auto model = build_model<double>(cfg, 3);
    Rng rng(8);
    Tensor<double> x({2, 1, 16, 16});
    for (auto& v : x.data()) v = rng.uniform();
    Tensor<double> y({2, 3});
    y[0] = 1;
    y[5] = 1;
    for (int mask = 0; mask < 8; ++mask) {
        const LossSwitches sw{bool(mask & 1), bool(mask & 2), bool(mask & 4)};
        Tape<double> tape;
        const auto taps = forward(model, tape, x);
        const auto rep = total_loss(taps, tape.constant(y), sw);
        EXPECT_EQ(rep.total_value, rep.l_sup + rep.l_un + rep.l_frs);
        EXPECT_EQ(rep.total.value().item(), rep.total_value);
        if (!sw.supervised) EXPECT_EQ(rep.l_sup, 0.0);
        if (!sw.unsupervised) EXPECT_EQ(rep.l_un, 0.0);
        if (!sw.frs) EXPECT_EQ(rep.l_frs, 0.0);
    }
}

TEST(TotalLoss, DisabledHeadsGiveZeroGradientToTheirParameters) {
    ModelConfig cfg;
    cfg.height = cfg.width = 16;
    const auto model = build_model<double>(cfg, 3);
    Tensor<double> x({1, 1, 16, 16}, 0.5);
    Tensor<double> y({1, 3});
    y[1] = 1;
    Tape<double> tape;
    const auto taps = forward(model, tape, x);
    const auto rep = total_loss(taps, tape.constant(y), LossSwitches{true, false, false});
    const auto g = tape.backward(rep.total);
    for (const auto& [name, var] : taps.params) {
        const auto group = RfrlModel<double>::group_of(name);
        if (group == "dec" || group == "attn" || group == "recon") {
            for (double v : g.at(var).data()) ASSERT_EQ(v, 0.0) << name;
        }
    }
}

TEST(Frs, SwappingEncoderAndDecoderSidesKeepsTheValue) {
    Tape<double> tape;
    Rng rng(21);
    std::vector<Var<double>> enc, dec;
    for (std::size_t s : {8u, 4u, 2u}) {
        Tensor<double> a({2, 3, s, s}), b({2, 3, s, s});
        for (auto& v : a.data()) v = rng.normal();
        for (auto& v : b.data()) v = rng.normal();
        enc.push_back(tape.leaf(a));
        dec.insert(dec.begin(), tape.leaf(b));
    }
    std::vector<Var<double>> enc_sw(dec.rbegin(), dec.rend()), dec_sw(enc.rbegin(), enc.rend());
    for (FrsNorm norm : {FrsNorm::squared_mean, FrsNorm::abs_mean, FrsNorm::rms}) {
        EXPECT_EQ(losses::frs_loss<double>(enc, dec, norm).value().item(),
                  losses::frs_loss<double>(enc_sw, dec_sw, norm).value().item())
            << to_string(norm);
    }
}

TEST(TotalLoss, AllLossesReachEveryParameterGroup) {
    ModelConfig cfg;
    cfg.height = cfg.width = 16;
    const auto model = build_model<double>(cfg, 4);
    Rng rng(13);
    Tensor<double> x({2, 1, 16, 16});
    for (auto& v : x.data()) v = rng.uniform();
    Tensor<double> y({2, 3});
    y[0] = 1;
    y[4] = 1;
    Tape<double> tape;
    const auto taps = forward(model, tape, x);
    const auto rep = total_loss(taps, tape.constant(y), LossSwitches{true, true, true});
    const auto g = tape.backward(rep.total);
    std::map<std::string, double> norm;
    for (const auto& [name, var] : taps.params) {
        for (double v : g.at(var).data()) norm[RfrlModel<double>::group_of(name)] += v * v;
    }
    for (const char* group : {"stem", "enc", "attn", "dec", "recon", "cls"}) {
        EXPECT_GT(norm[group], 0.0) << group;
    }
}
