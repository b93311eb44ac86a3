#include <gtest/gtest.h>

#include <set>

#include "rfrl/rng.hpp"
#include "rfrl/errors.hpp"
#include "rfrl/gradcheck.hpp"
#include "rfrl/kernels.hpp"
#include "rfrl/ops.hpp"

using namespace rfrl;

namespace {

// conv2d whose input gradient is off by one percent.
Var<double> corrupted_conv(const Var<double>& x, const Var<double>& w) {
    Tensor<double> y = kernels::conv2d_forward<double>(x.value(), w.value(), {}, 1, 1);
    const Tensor<double> xv = x.value(), wv = w.value();
    return x.tape().record("conv2d_corrupt", {x, w}, std::move(y),
                           [xv, wv](const Tensor<double>& g, const std::vector<bool>&) {
                               Tensor<double> gx = kernels::conv2d_backward_input(g, wv, xv.shape(), 1, 1);
                               for (auto& v : gx.data()) v *= 1.01;
                               return std::vector<Tensor<double>>{gx, kernels::conv2d_backward_weight(g, xv, 3, 1, 1)};
                           });
}

GradcheckCase corrupted_case() {
    return {"conv2d_corrupt",
            [](Rng& r) {
                Tensor<double> x({1, 2, 5, 5}), w({2, 2, 3, 3});
                for (auto& v : x.data()) v = r.uniform(-1, 1);
                for (auto& v : w.data()) v = r.uniform(-1, 1);
                return std::vector<Tensor<double>>{x, w};
            },
            [](Tape<double>& tape, const std::vector<Tensor<double>>& in) {
                auto x = tape.leaf(in[0], true), w = tape.leaf(in[1], true);
                return std::make_pair(random_projection(corrupted_conv(x, w), 1), std::vector<Var<double>>{x, w});
            }};
}

}  // namespace

TEST(Gradcheck, CorruptedBackwardIsReported) {
    GradcheckOptions opts;
    opts.seeds = 3;
    const auto r = run_gradcheck_case(corrupted_case(), opts);
    EXPECT_FALSE(r.passed);
    EXPECT_GT(r.max_rel_err, 1e-3);
}

TEST(Gradcheck, DefaultSuiteNamesEveryOpOnce) {
    const auto cases = default_gradcheck_cases();
    std::set<std::string> names;
    for (const auto& c : cases) EXPECT_TRUE(names.insert(c.op).second) << c.op;
    for (const char* op : {"add", "sub", "mul", "matmul", "relu", "sigmoid", "softmax", "conv2d", "conv2d_transpose",
                           "global_avg_pool", "dense", "cross_entropy", "mse", "frs_loss[squared]", "rfrl_model"}) {
        EXPECT_TRUE(names.count(op)) << op;
    }
}

TEST(Gradcheck, SuitePassesOnAFewSeeds) {
    GradcheckOptions opts;
    opts.seeds = 3;
    for (const auto& r : run_gradcheck(default_gradcheck_cases(), opts)) {
        EXPECT_TRUE(r.passed) << r.op << " max rel err " << r.max_rel_err << " " << r.error;
    }
}

TEST(Gradcheck, RelativeErrorFloor) {
    EXPECT_DOUBLE_EQ(relative_error(1.0, 1.1), (1.1 - 1.0) / 1.1);
    EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-3);
}
