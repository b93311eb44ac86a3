#include <gtest/gtest.h>

#include <set>

#include "rfrl/errors.hpp"
#include "rfrl/losses.hpp"
#include "rfrl/model.hpp"
#include "rfrl/rng.hpp"

using namespace rfrl;

namespace {

Tensor<float> image_batch(std::size_t b, const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> x({b, cfg.in_channels, cfg.height, cfg.width});
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
    return x;
}

}  // namespace

TEST(Model, WiringShapesForThreeStages) {
    ModelConfig cfg;
    cfg.stage_channels = {16, 32, 64};
    const auto model = build_model<float>(cfg, 7);
    Tape<float> tape;
    const auto taps = forward(model, tape, image_batch(2, cfg, 1));
    ASSERT_EQ(taps.enc_feats.size(), 4u);
    ASSERT_EQ(taps.dec_feats.size(), 4u);
    const std::vector<Shape> enc{{2, 8, 32, 32}, {2, 16, 16, 16}, {2, 32, 8, 8}, {2, 64, 4, 4}};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(taps.enc_feats[i].shape(), enc[i]);
        EXPECT_EQ(taps.dec_feats[3 - i].shape(), enc[i]) << "pair " << i;
    }
    EXPECT_EQ(taps.recon.shape(), (Shape{2, 1, 32, 32}));
    EXPECT_EQ(taps.logits.shape(), (Shape{2, 3}));
    for (float v : taps.recon.value().data()) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
    }
}

TEST(Model, WiringHoldsForOtherDepths) {
    for (std::size_t n : {2u, 4u}) {
        ModelConfig cfg;
        cfg.n_stages = n;
        cfg.stage_channels.assign(n, 4);
        cfg.stem_channels = 3;
        cfg.in_channels = 2;
        const auto model = build_model<double>(cfg, 3);
        Tape<double> tape;
        const auto taps = forward(model, tape, image_batch(1, cfg, 2).cast<double>());
        for (std::size_t i = 0; i <= n; ++i) EXPECT_EQ(taps.enc_feats[i].shape(), taps.dec_feats[n - i].shape());
        EXPECT_EQ(taps.recon.shape(), (Shape{1, 2, 32, 32}));
    }
}

TEST(Model, ParameterNamesAreUniqueAndGrouped) {
    const auto model = build_model<float>(ModelConfig{}, 1);
    std::set<std::string> names, groups;
    model.visit([&](const std::string& name, const Tensor<float>&) {
        EXPECT_TRUE(names.insert(name).second) << name;
        groups.insert(RfrlModel<float>::group_of(name));
    });
    EXPECT_TRUE(names.count("enc.2.conv1.weight"));
    EXPECT_TRUE(names.count("dec.0.weight"));
    EXPECT_EQ(groups, (std::set<std::string>{"stem", "enc", "attn", "dec", "recon", "cls"}));
}

TEST(Model, InitIsDeterministicAndSeedSensitive) {
    const auto a = build_model<float>(ModelConfig{}, 11), b = build_model<float>(ModelConfig{}, 11);
    const auto c = build_model<float>(ModelConfig{}, 12);
    bool same = true, differs = false;
    std::vector<const Tensor<float>*> pa, pb, pc;
    a.visit([&](const std::string&, const Tensor<float>& t) { pa.push_back(&t); });
    b.visit([&](const std::string&, const Tensor<float>& t) { pb.push_back(&t); });
    c.visit([&](const std::string&, const Tensor<float>& t) { pc.push_back(&t); });
    for (std::size_t i = 0; i < pa.size(); ++i) {
        same = same && pa[i]->identical(*pb[i]);
        differs = differs || !pa[i]->identical(*pc[i]);
    }
    EXPECT_TRUE(same);
    EXPECT_TRUE(differs);
}

TEST(Model, InitIgnoresLossSwitches) {
    ModelConfig base, sup_only;
    sup_only.loss_switches = {true, false, false};
    const auto a = build_model<float>(base, 5), b = build_model<float>(sup_only, 5);
    std::vector<Tensor<float>> ta, tb;
    a.visit([&](const std::string&, const Tensor<float>& t) { ta.push_back(t); });
    b.visit([&](const std::string&, const Tensor<float>& t) { tb.push_back(t); });
    for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_TRUE(ta[i].identical(tb[i]));
}

TEST(Model, InvalidConfigurations) {
    ModelConfig cfg;
    cfg.height = cfg.width = 36;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = ModelConfig{};
    cfg.n_stages = 1;
    cfg.stage_channels = {16};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = ModelConfig{};
    cfg.stage_channels = {16, 32};
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Model, ForwardRejectsBadInputs) {
    const ModelConfig cfg;
    const auto model = build_model<float>(cfg, 1);
    Tape<float> tape;
    EXPECT_THROW(forward(model, tape, Tensor<float>({1, 1, 16, 16}, 0.5f)), ShapeError);
    EXPECT_THROW(forward(model, tape, Tensor<float>({1, 1, 32, 32}, 1.5f)), ContractError);
}

TEST(Model, SkippingTheDecoderLeavesClassifierOutputsUnchanged) {
    const ModelConfig cfg;
    const auto model = build_model<float>(cfg, 9);
    const auto x = image_batch(3, cfg, 4);
    Tape<float> t1, t2;
    const auto full = forward(model, t1, x);
    const auto lite = forward(model, t2, x, ForwardOptions{.track_param_grads = true, .with_decoder = false});
    EXPECT_TRUE(full.logits.value().identical(lite.logits.value()));
    EXPECT_FALSE(lite.recon.valid());
    EXPECT_TRUE(lite.dec_feats.empty());
}

TEST(Model, CastRoundTripPreservesFloatParameters) {
    const auto m = build_model<float>(ModelConfig{}, 3);
    const auto back = m.cast<double>().cast<float>();
    std::vector<Tensor<float>> a, b;
    m.visit([&](const std::string&, const Tensor<float>& t) { a.push_back(t); });
    back.visit([&](const std::string&, const Tensor<float>& t) { b.push_back(t); });
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].identical(b[i]));
}
