#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "rfrl/rng.hpp"
#include "rfrl/errors.hpp"
#include "rfrl/gradcheck.hpp"
#include "rfrl/losses.hpp"
#include "rfrl/ops.hpp"

using namespace rfrl;

TEST(Tensor, ShapeAndSizeAgree) {
    Tensor<float> t({2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.rank(), 3u);
    EXPECT_EQ(t.dim(2), 4u);
    EXPECT_THROW(Tensor<float>(Shape{2, 3}, std::vector<float>(5)), ShapeError);
    EXPECT_THROW(Tensor<float>(Shape{2, 0}), ShapeError);
    EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
}

TEST(Tensor, FileRoundTripBitExact) {
    for (int dt = 0; dt < 2; ++dt) {
        std::stringstream ss;
        Tensor<double> d({2, 3}, {1.0, -2.5, 3.25, 1e-300, -0.0, 7.0 / 3.0});
        if (dt == 0) {
            Tensor<float> f = d.cast<float>();
            write_tensor(ss, f);
            EXPECT_TRUE(read_tensor<float>(ss).identical(f));
        } else {
            write_tensor(ss, d);
            EXPECT_TRUE(read_tensor<double>(ss).identical(d));
        }
    }
}

TEST(Tensor, FileLayoutMatchesFormat) {
    std::stringstream ss;
    write_tensor(ss, Tensor<float>({2}, {1.0f, 2.0f}));
    const std::string bytes = ss.str();
    // magic + rank + 1 extent + dtype + 2 * f32
    ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 1u + 8u);
    EXPECT_EQ(bytes.substr(0, 4), "RFT1");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 2);
    EXPECT_EQ(bytes[12], 0);
}

TEST(Tensor, CorruptFilesRaiseFormatError) {
    std::stringstream bad_magic("RFT2\x01\x00\x00\x00");
    EXPECT_THROW(read_tensor<float>(bad_magic), FormatError);
    std::stringstream ss;
    write_tensor(ss, Tensor<float>({4}, 1.0f));
    std::string truncated = ss.str();
    truncated.resize(truncated.size() - 3);
    std::stringstream ts(truncated);
    EXPECT_THROW(read_tensor<float>(ts), FormatError);
}

TEST(Ops, EwiseExamples) {
    Tape<double> tape;
    auto a = tape.leaf(Tensor<double>({2}, {1, 2}));
    auto b = tape.leaf(Tensor<double>({2}, {3, 4}));
    EXPECT_EQ(ops::add(a, b).value().vec(), (std::vector<double>{4, 6}));
    EXPECT_EQ(ops::sub(a, a).value().vec(), (std::vector<double>{0, 0}));
    auto c = tape.leaf(Tensor<double>({2}, {2, 3}));
    auto d = tape.leaf(Tensor<double>({2}, {4, 5}));
    EXPECT_EQ(ops::mul(c, d).value().vec(), (std::vector<double>{8, 15}));
    auto e = tape.leaf(Tensor<double>({3}, 1.0));
    EXPECT_THROW(ops::add(a, e), ShapeError);
}

TEST(Ops, MatmulExamples) {
    Tape<double> tape;
    auto eye = tape.leaf(Tensor<double>({2, 2}, {1, 0, 0, 1}));
    auto m = tape.leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}));
    EXPECT_EQ(ops::matmul(eye, m).value().vec(), m.value().vec());
    auto r = tape.leaf(Tensor<double>({1, 2}, {1, 2}));
    auto col = tape.leaf(Tensor<double>({2, 1}, {3, 4}));
    EXPECT_EQ(ops::matmul(r, col).value().item(), 11.0);
    auto z = tape.leaf(Tensor<double>({3, 2}, 0.0));
    for (double v : ops::matmul(z, m).value().data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(ops::matmul(m, z), ShapeError);
}

TEST(Tape, BackwardExamples) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}), true);
    auto g = tape.backward(ops::sum(x));
    for (double v : g.at(x).data()) EXPECT_EQ(v, 1.0);

    Tape<double> t2;
    auto y = t2.leaf(Tensor<double>({3}, {1, 2, 3}), true);
    auto gy = t2.backward(ops::sum(ops::mul(y, y)));
    EXPECT_EQ(gy.at(y).vec(), (std::vector<double>{2, 4, 6}));

    Tape<double> t3;
    auto p = t3.leaf(Tensor<double>({3}, {0.5, 0.25, 1.0}), true);
    auto gp = t3.backward(losses::mse(p, t3.constant(p.value())));
    for (double v : gp.at(p).data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, NonScalarLossIsAContractError) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({2}, 1.0), true);
    EXPECT_THROW(tape.backward(ops::relu(x)), ContractError);
}

TEST(Tape, DetachedValuesAreAbsent) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({2}, 1.0), true);
    auto c = tape.constant(Tensor<double>({2}, 3.0));
    auto g = tape.backward(ops::sum(ops::mul(x, c)));
    EXPECT_TRUE(g.contains(x));
    EXPECT_FALSE(g.contains(c));
    EXPECT_THROW(g.at(c), ContractError);
}

TEST(Tape, MultipleUsesAccumulate) {
    const Tensor<double> v({3}, {1.0, -2.0, 0.5});
    auto grad_of = [&](int which) {
        Tape<double> tape;
        auto x = tape.leaf(v, true);
        Var<double> a = ops::sum(x);
        Var<double> b = ops::sum(ops::mul(x, x));
        Var<double> loss = which == 0 ? a : which == 1 ? b : ops::add(a, b);
        return tape.backward(loss).at(x);
    };
    const auto ga = grad_of(0), gb = grad_of(1), gab = grad_of(2);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(gab[i], ga[i] + gb[i]);
}

TEST(Tape, RecordingNonFiniteValuesThrows) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({2}, {-1.0, 4.0}), true);
    EXPECT_THROW(ops::sqrt(x), NumericsError);
    auto big = tape.leaf(Tensor<double>({1}, std::numeric_limits<double>::max()), true);
    EXPECT_THROW(ops::add(big, big), NumericsError);
}

TEST(Tape, ReplayIsBitIdentical) {
    auto run = [] {
        Rng rng(99);
        Tensor<double> a({4, 5}), b({5, 3});
        for (auto& v : a.data()) v = rng.normal();
        for (auto& v : b.data()) v = rng.normal();
        Tape<double> tape;
        auto va = tape.leaf(a, true), vb = tape.leaf(b, true);
        auto g = tape.backward(ops::sum(ops::softmax(ops::matmul(va, vb))));
        return std::make_pair(g.at(va), g.at(vb));
    };
    auto [a1, b1] = run();
    auto [a2, b2] = run();
    EXPECT_TRUE(a1.identical(a2));
    EXPECT_TRUE(b1.identical(b2));
}

TEST(FiniteDiff, Examples) {
    const std::function<double(const Tensor<double>&)> sum = [](const Tensor<double>& t) {
        double s = 0;
        for (double v : t.data()) s += v;
        return s;
    };
    Tensor<double> x({2, 3}, {0.3, -1.0, 2.0, 5.0, 0.0, 1.5});
    const auto gs = finite_diff_grad(sum, x, 1e-5);
    for (double v : gs.data()) EXPECT_NEAR(v, 1.0, 1e-8);

    const std::function<double(const Tensor<double>&)> sq = [](const Tensor<double>& t) {
        double s = 0;
        for (double v : t.data()) s += v * v;
        return s;
    };
    auto g = finite_diff_grad(sq, Tensor<double>({2}, {1.0, 2.0}), 1e-5);
    EXPECT_NEAR(g[0], 2.0, 1e-8);
    EXPECT_NEAR(g[1], 4.0, 1e-8);

    const std::function<double(const Tensor<double>&)> constant = [](const Tensor<double>&) { return 3.0; };
    const auto gc = finite_diff_grad(constant, x, 1e-5);
    for (double v : gc.data()) EXPECT_EQ(v, 0.0);

    const std::function<double(const Tensor<double>&)> blowup = [](const Tensor<double>& t) {
        return t[0] > 1.0 ? std::numeric_limits<double>::infinity() : t[0];
    };
    EXPECT_THROW(finite_diff_grad(blowup, Tensor<double>({1}, 1.0), 1e-3), NumericsError);
    EXPECT_THROW(finite_diff_grad(sum, x, 0.0), ContractError);
}

TEST(Ops, SoftmaxRowsSumToOneAndResistOverflow) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({2, 3}, {1000, 1001, 1002, -5, 0, 5}));
    const auto p = ops::softmax(x).value();
    for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(p[3 * r] + p[3 * r + 1] + p[3 * r + 2], 1.0, 1e-12);
    EXPECT_NEAR(p[2], 1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0)), 1e-12);
}

TEST(Ops, ClampedLogHasZeroGradientOutsideTheClamp) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({3}, {1e-12, 0.5, 2.0}), true);
    auto y = ops::clamped_log(x, 1e-7, 1.0);
    EXPECT_DOUBLE_EQ(y.value()[0], std::log(1e-7));
    EXPECT_DOUBLE_EQ(y.value()[2], 0.0);
    auto g = tape.backward(ops::sum(y)).at(x);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_DOUBLE_EQ(g[1], 2.0);
    EXPECT_EQ(g[2], 0.0);
}
