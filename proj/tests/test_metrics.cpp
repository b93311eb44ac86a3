#include <gtest/gtest.h>

#include <sstream>

#include "rfrl/errors.hpp"
#include "rfrl/metrics.hpp"
#include "rfrl/rng.hpp"

using namespace rfrl;

TEST(Confusion, Examples) {
    const auto cm = confusion({0, 1}, {1, 1}, 2);
    EXPECT_EQ(cm.counts, (std::vector<std::uint64_t>{0, 0, 1, 1}));
    const auto empty = confusion({}, {}, 3);
    EXPECT_EQ(empty.total(), 0u);
    EXPECT_EQ(empty.counts.size(), 9u);
    const auto diag = confusion({0, 1, 2, 2}, {0, 1, 2, 2}, 3);
    EXPECT_EQ(diag.at(2, 2), 2u);
    EXPECT_EQ(diag.total(), 4u);
    EXPECT_THROW(confusion({3}, {0}, 3), ContractError);
    EXPECT_THROW(confusion({0, 1}, {0}, 3), ContractError);
}

TEST(Metrics, BinaryHandExample) {
    ConfusionMatrix cm{2, {40, 10, 5, 45}};
    const auto m = metrics(cm);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.85);
    EXPECT_DOUBLE_EQ(m.sensitivity, 0.85);
    EXPECT_DOUBLE_EQ(m.specificity, 0.85);
}

TEST(Metrics, PerfectAndDegenerate) {
    const auto perfect = metrics(confusion({0, 1, 2, 0}, {0, 1, 2, 0}, 3));
    EXPECT_EQ(perfect.accuracy, 1.0);
    EXPECT_EQ(perfect.sensitivity, 1.0);
    EXPECT_EQ(perfect.specificity, 1.0);
    const auto one_class = metrics(confusion({0, 0, 0, 0}, {0, 1, 0, 1}, 2));
    EXPECT_DOUBLE_EQ(one_class.sensitivity, 0.5);
    EXPECT_THROW(metrics(confusion({}, {}, 2)), ContractError);
}

TEST(Metrics, AbsentClassIsSkippedWithAWarning) {
    const auto m = metrics(confusion({0, 1, 1}, {0, 1, 1}, 3));
    EXPECT_EQ(m.sensitivity, 1.0);
    EXPECT_FALSE(m.warnings.empty());
}

TEST(Metrics, BoundedAndPermutationInvariant) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng.bounded(4), n = 1 + rng.bounded(60);
        std::vector<std::size_t> preds(n), labels(n), perm(c);
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = rng.bounded(c);
            labels[i] = rng.bounded(c);
        }
        for (std::size_t k = 0; k < c; ++k) perm[k] = k;
        rng.shuffle(perm);
        std::vector<std::size_t> pp(n), pl(n);
        for (std::size_t i = 0; i < n; ++i) {
            pp[i] = perm[preds[i]];
            pl[i] = perm[labels[i]];
        }
        const auto a = metrics(confusion(preds, labels, c)), b = metrics(confusion(pp, pl, c));
        for (double v : {a.accuracy, a.sensitivity, a.specificity}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_NEAR(a.accuracy, b.accuracy, 1e-12);
        EXPECT_NEAR(a.sensitivity, b.sensitivity, 1e-12);
        EXPECT_NEAR(a.specificity, b.specificity, 1e-12);
    }
}

TEST(Metrics, CsvRow) {
    std::ostringstream os;
    write_metrics_row(os, "run1", "ood", Metrics{0.5, 0.25, 0.75, {}});
    EXPECT_EQ(os.str(), "run1,ood,0.500000,0.250000,0.750000\n");
    EXPECT_STREQ(kMetricsCsvHeader, "run_id,split,accuracy,sensitivity,specificity");
}

TEST(Metrics, MeansAreRoundedOnce) {
    const Metrics m = metrics(ConfusionMatrix{2, {40, 10, 5, 45}});
    EXPECT_EQ(m.accuracy, 0.85);
    EXPECT_EQ(m.sensitivity, 0.85);
    EXPECT_EQ(m.specificity, 0.85);

    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        ConfusionMatrix cm{3, std::vector<std::uint64_t>(9)};
        for (auto& c : cm.counts) c = 1 + rng.bounded(1000);
        const Metrics got = metrics(cm);
        long double sens = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            std::uint64_t row = 0;
            for (std::size_t j = 0; j < 3; ++j) row += cm.at(c, j);
            sens += static_cast<long double>(cm.at(c, c)) / row;
        }
        EXPECT_NEAR(got.sensitivity, static_cast<double>(sens / 3), 1e-15);
    }
}
