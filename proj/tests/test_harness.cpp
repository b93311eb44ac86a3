#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rfrl/rng.hpp"
#include "rfrl/errors.hpp"
#include "rfrl/harness.hpp"

using namespace rfrl;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
    return parse_config(R"(
seed = 3
model.image_size = 16
model.n_stages = 2
model.stem_channels = 4
model.stage_channels = 6,8
train.epochs = 2
train.batch_size = 4
optim.lr = 1e-3
data.train = 12
data.val = 6
data.test = 6
data.ood = 6
)");
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("rfrl_harness_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Config, DefaultsMatchTheDeskSetup) {
    const ExperimentConfig c;
    EXPECT_EQ(c.adam.lr, 1e-4);
    EXPECT_EQ(c.batch_size, 4u);
    EXPECT_EQ(c.epochs, 50u);
    EXPECT_EQ(c.plateau.patience, 6);
    EXPECT_EQ(c.plateau.factor, 0.1);
    EXPECT_EQ(c.data.n_train, 300u);
    EXPECT_EQ(c.model.n_stages, 3u);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesCommentsAndRoundTrips) {
    const auto c = parse_config("# comment\nseed = 17   # trailing\nloss.frs = off\noptim.lr=0.00025\n");
    EXPECT_EQ(c.seed, 17u);
    EXPECT_FALSE(c.model.loss_switches.frs);
    EXPECT_EQ(c.adam.lr, 0.00025);
    const auto again = parse_config(config_to_text(c));
    EXPECT_EQ(config_to_text(again), config_to_text(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_config("model.depth = 3\n"), ConfigError);
    EXPECT_THROW(parse_config("seed = -1\n"), ConfigError);
    EXPECT_THROW(parse_config("optim.lr = fast\n"), ConfigError);
    EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ConfigError);
    EXPECT_THROW(parse_config("just words\n"), ConfigError);
    EXPECT_THROW(parse_config("model.image_size = 36\n"), ConfigError);
    EXPECT_THROW(parse_config("loss.supervised = false\nloss.unsupervised = false\nloss.frs = false\n"), ConfigError);
    EXPECT_THROW(parse_config("data.train = 301\n"), ConfigError);
}

TEST(Config, ErrorsNameTheLine) {
    try {
        parse_config("seed = 1\n\nbogus = 2\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(Data, BuildDataHonoursCountsAndSeed) {
    const auto cfg = tiny_config();
    const auto d = build_data(cfg);
    EXPECT_EQ(d.train.size(), 12u);
    EXPECT_EQ(d.val.size(), 6u);
    EXPECT_EQ(d.test.size(), 6u);
    EXPECT_EQ(d.ood.size(), 6u);
    EXPECT_EQ(d.train.samples[0].image.shape(), (Shape{1, 16, 16}));
    const auto again = build_data(cfg);
    EXPECT_TRUE(again.test.samples[3].image.identical(d.test.samples[3].image));
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto cfg = tiny_config();
    const auto data = build_data(cfg);
    const auto out = train_run(cfg, data);
    std::stringstream ss;
    write_checkpoint(ss, out.checkpoint);
    const Checkpoint back = read_checkpoint(ss);

    std::vector<Tensor<float>> a, b;
    out.checkpoint.model.visit([&](const std::string&, const Tensor<float>& t) { a.push_back(t); });
    back.model.visit([&](const std::string&, const Tensor<float>& t) { b.push_back(t); });
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].identical(b[i]));

    ASSERT_TRUE(back.adam && back.plateau);
    const auto& sa = *out.checkpoint.adam;
    EXPECT_EQ(back.adam->step, sa.step);
    EXPECT_EQ(back.adam->lr, sa.lr);
    ASSERT_EQ(back.adam->m.size(), sa.m.size());
    for (const auto& [name, t] : sa.m) EXPECT_TRUE(back.adam->m.at(name).identical(t)) << name;
    for (const auto& [name, t] : sa.v) EXPECT_TRUE(back.adam->v.at(name).identical(t)) << name;
    EXPECT_EQ(back.plateau->best_val_loss, out.checkpoint.plateau->best_val_loss);
    EXPECT_EQ(back.plateau->epochs_since_improve, out.checkpoint.plateau->epochs_since_improve);
    EXPECT_EQ(config_to_text(back.config), config_to_text(cfg));

    const auto e1 = evaluate(out.checkpoint.model, data.test, cfg.model.loss_switches, cfg.frs_norm);
    const auto e2 = evaluate(back.model, data.test, cfg.model.loss_switches, cfg.frs_norm);
    EXPECT_EQ(e1.predictions, e2.predictions);
    EXPECT_EQ(e1.losses.total, e2.losses.total);
}

TEST(Checkpoint, CorruptFilesRaiseFormatError) {
    const auto cfg = tiny_config();
    Checkpoint c;
    c.config = cfg;
    c.model = build_model<float>(cfg.model, 1);
    std::stringstream ss;
    write_checkpoint(ss, c);
    const std::string bytes = ss.str();

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    std::stringstream s1(bad_magic);
    EXPECT_THROW(read_checkpoint(s1), FormatError);

    std::stringstream s2(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(read_checkpoint(s2), FormatError);

    std::stringstream s3(bytes + "junk");
    EXPECT_THROW(read_checkpoint(s3), FormatError);

    EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), FormatError);
}

TEST(Train, SameSeedSameArtifacts) {
    const auto cfg = tiny_config();
    const auto data = build_data(cfg);
    const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
    train_run(cfg, data, {.out_dir = a.string()});
    train_run(cfg, data, {.out_dir = b.string()});
    EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
    EXPECT_EQ(slurp(a / "run.csv"), slurp(b / "run.csv"));
    EXPECT_EQ(slurp(a / "model.ckpt"), slurp(b / "model.ckpt"));
    EXPECT_EQ(slurp(a / "metrics.csv").substr(0, 45), "run_id,split,accuracy,sensitivity,specificity");
}

TEST(Train, RecordsEveryEpochAndRateNeverRises) {
    auto cfg = tiny_config();
    cfg.epochs = 4;
    cfg.plateau.patience = 1;
    const auto out = train_run(cfg, build_data(cfg));
    ASSERT_EQ(out.record.epochs.size(), 4u);
    for (std::size_t i = 1; i < 4; ++i) EXPECT_LE(out.record.epochs[i].lr, out.record.epochs[i - 1].lr);
    EXPECT_GE(out.record.best_epoch, 1u);
    EXPECT_TRUE(out.record.epochs[out.record.best_epoch - 1].best);
}

TEST(Train, SupervisedOnlyLeavesDecoderUntouched) {
    auto cfg = tiny_config();
    cfg.model.loss_switches = {true, false, false};
    const auto out = train_run(cfg, build_data(cfg));
    for (const auto& e : out.record.epochs) {
        EXPECT_EQ(e.train.l_un, 0.0);
        EXPECT_EQ(e.train.l_frs, 0.0);
        EXPECT_EQ(e.val.l_un, 0.0);
        EXPECT_EQ(e.val.l_frs, 0.0);
    }
    const auto init = build_model<float>(cfg.model, cfg.seed);
    std::map<std::string, Tensor<float>> before;
    init.visit([&](const std::string& n, const Tensor<float>& t) { before.emplace(n, t); });
    bool encoder_moved = false;
    out.best_model.visit([&](const std::string& n, const Tensor<float>& t) {
        const auto g = RfrlModel<float>::group_of(n);
        if (g == "dec" || g == "attn" || g == "recon") {
            EXPECT_TRUE(t.identical(before.at(n))) << n;
        } else if (!t.identical(before.at(n))) {
            encoder_moved = true;
        }
    });
    EXPECT_TRUE(encoder_moved);
}

TEST(Ablation, ShapeAndSharedInitialisation) {
    auto cfg = tiny_config();
    cfg.epochs = 1;
    const auto res = run_ablation(cfg, {1, 2}, "");
    EXPECT_EQ(res.rows.size(), 3u * 2u * 2u);
    for (const auto& r : res.rows) {
        if (r.variant == "baseline") EXPECT_EQ(r.delta.accuracy, 0.0);
    }
    auto a = cfg, c = cfg;
    a.model.loss_switches = ablation_variants()[0].switches;
    c.model.loss_switches = ablation_variants()[2].switches;
    const auto ma = build_model<float>(a.model, 5), mc = build_model<float>(c.model, 5);
    std::vector<Tensor<float>> ta, tc;
    ma.visit([&](const std::string& n, const Tensor<float>& t) {
        if (RfrlModel<float>::group_of(n) == "enc" || n.starts_with("stem")) ta.push_back(t);
    });
    mc.visit([&](const std::string& n, const Tensor<float>& t) {
        if (RfrlModel<float>::group_of(n) == "enc" || n.starts_with("stem")) tc.push_back(t);
    });
    for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_TRUE(ta[i].identical(tc[i]));
    std::ostringstream os;
    write_ablation_csv(os, res);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), kAblationCsvHeader);
}

TEST(KFold, ReportsEveryFold) {
    auto cfg = tiny_config();
    cfg.epochs = 1;
    cfg.data.split = "kfold";
    cfg.data.kfold = 3;
    const auto outs = train_kfold(cfg, build_data(cfg), {});
    EXPECT_EQ(outs.size(), 3u);
}

TEST(Median, OddAndEven) {
    EXPECT_EQ(median({3, 1, 2}), 2.0);
    EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
    EXPECT_THROW(median({}), ContractError);
}
