#include "rfrl/model.hpp"

#include <cmath>

#include "rfrl/ops.hpp"
#include "rfrl/rng.hpp"

namespace rfrl {

void ModelConfig::validate() const {
    if (in_channels == 0) throw ConfigError("model.in_channels must be >= 1");
    if (n_stages < 2) throw ConfigError("model.n_stages must be >= 2, got " + std::to_string(n_stages));
    if (n_stages > 16) throw ConfigError("model.n_stages too large");
    if (stem_channels == 0) throw ConfigError("model.stem_channels must be >= 1");
    if (stage_channels.size() != n_stages) {
        throw ConfigError("model.stage_channels has " + std::to_string(stage_channels.size()) + " entries, expected " +
                          std::to_string(n_stages));
    }
    for (auto c : stage_channels) {
        if (c == 0) throw ConfigError("model.stage_channels entries must be >= 1");
    }
    if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
    const std::size_t factor = std::size_t{1} << n_stages;
    if (height == 0 || width == 0 || height % factor != 0 || width % factor != 0) {
        throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by 2^" +
                          std::to_string(n_stages) + " = " + std::to_string(factor));
    }
    // Every stride-1 3x3 conv needs H, W >= 3 at its resolution.
    if (height / (factor / 2) < 3 || width / (factor / 2) < 3) {
        throw ConfigError("input too small for " + std::to_string(n_stages) + " stages");
    }
}

template <typename T>
void RfrlModel<T>::visit(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    auto conv = [&](const std::string& prefix, Conv2dParams<T>& p) {
        fn(prefix + ".weight", p.weight);
        fn(prefix + ".bias", p.bias);
    };
    conv("stem", stem);
    for (std::size_t i = 0; i < enc.size(); ++i) {
        const std::string prefix = "enc." + std::to_string(i + 1);
        conv(prefix + ".conv1", enc[i].conv1);
        conv(prefix + ".conv2", enc[i].conv2);
    }
    for (std::size_t j = 0; j < attn.size(); ++j) conv("attn." + std::to_string(j), attn[j]);
    for (std::size_t j = 0; j < dec.size(); ++j) {
        fn("dec." + std::to_string(j) + ".weight", dec[j].weight);
        fn("dec." + std::to_string(j) + ".bias", dec[j].bias);
    }
    conv("recon", recon);
    fn("cls.weight", cls.weight);
    fn("cls.bias", cls.bias);
}

template <typename T>
void RfrlModel<T>::visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
    const_cast<RfrlModel*>(this)->visit(
        [&](const std::string& name, Tensor<T>& t) { fn(name, static_cast<const Tensor<T>&>(t)); });
}

template <typename T>
std::string RfrlModel<T>::group_of(const std::string& name) {
    return name.substr(0, name.find('.'));
}

template <typename T>
std::size_t RfrlModel<T>::count_params() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
    return n;
}

template <typename T>
template <typename U>
RfrlModel<U> RfrlModel<T>::cast() const {
    auto conv = [](const Conv2dParams<T>& p) {
        return Conv2dParams<U>{p.weight.template cast<U>(), p.bias.template cast<U>(), p.stride};
    };
    RfrlModel<U> out;
    out.config = config;
    out.stem = conv(stem);
    for (const auto& b : enc) out.enc.push_back({conv(b.conv1), conv(b.conv2)});
    for (const auto& a : attn) out.attn.push_back(conv(a));
    for (const auto& d : dec) out.dec.push_back({d.weight.template cast<U>(), d.bias.template cast<U>()});
    out.recon = conv(recon);
    out.cls = {cls.weight.template cast<U>(), cls.bias.template cast<U>()};
    return out;
}

namespace {

template <typename T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
Conv2dParams<T> make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t stride, Rng& rng) {
    return {he_uniform<T>({out_ch, in_ch, k, k}, in_ch * k * k, rng), Tensor<T>({out_ch}), stride};
}

template <typename T>
ConvT2dParams<T> make_convt(std::size_t in_ch, std::size_t out_ch, Rng& rng) {
    return {he_uniform<T>({in_ch, out_ch, 3, 3}, in_ch * 9, rng), Tensor<T>({out_ch})};
}

}  // namespace

template <typename T>
RfrlModel<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t n = cfg.n_stages;
    Rng rng = Rng::derive(seed, /*stream=*/0x1417);
    RfrlModel<T> m;
    m.config = cfg;
    m.stem = make_conv<T>(cfg.in_channels, cfg.stem_channels, 3, 1, rng);
    for (std::size_t i = 1; i <= n; ++i) {
        const std::size_t in = cfg.enc_channels(i - 1), out = cfg.enc_channels(i);
        EncoderBlock<T> block;
        block.conv1 = make_conv<T>(in, out, 3, 1, rng);
        block.conv2 = make_conv<T>(out, out, 3, 2, rng);
        m.enc.push_back(std::move(block));
    }
    for (std::size_t j = 0; j <= n; ++j) {
        const std::size_t ch = cfg.enc_channels(n - j);
        m.attn.push_back(make_conv<T>(ch, ch, 1, 1, rng));
    }
    for (std::size_t j = 0; j < n; ++j) {
        m.dec.push_back(make_convt<T>(cfg.enc_channels(n - j), cfg.enc_channels(n - 1 - j), rng));
    }
    m.recon = make_conv<T>(cfg.stem_channels, cfg.in_channels, 1, 1, rng);
    m.cls = {he_uniform<T>({cfg.enc_channels(n), cfg.num_classes}, cfg.enc_channels(n), rng),
             Tensor<T>({cfg.num_classes})};
    return m;
}

template <typename T>
ForwardTaps<T> forward(const RfrlModel<T>& model, Tape<T>& tape, const Tensor<T>& x, ForwardOptions opts) {
    const ModelConfig& cfg = model.config;
    const std::size_t n = cfg.n_stages;
    if (x.rank() != 4 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.height || x.dim(3) != cfg.width) {
        throw ShapeError("forward: input " + shape_str(x.shape()) + " does not match model input [B, " +
                         std::to_string(cfg.in_channels) + ", " + std::to_string(cfg.height) + ", " +
                         std::to_string(cfg.width) + "]");
    }
    for (T v : x.data()) {
        if (!(v >= T(0) && v <= T(1))) throw ContractError("forward: input values must lie in [0, 1]");
    }

    ForwardTaps<T> taps;
    const bool track = opts.track_param_grads;
    auto param = [&](const std::string& name, const Tensor<T>& t) {
        Var<T> v = tape.leaf(t, track);
        taps.params.emplace_back(name, v);
        return v;
    };
    auto conv = [&](const std::string& name, const Conv2dParams<T>& p, const Var<T>& in) {
        Var<T> w = param(name + ".weight", p.weight);
        Var<T> b = param(name + ".bias", p.bias);
        return layers::conv2d(in, w, b, p.stride);
    };
    auto staged = [](std::string what, std::size_t stage, auto&& fn) {
        try {
            return fn();
        } catch (const ShapeError& e) {
            throw ShapeError(what + " stage " + std::to_string(stage) + ": " + e.what());
        }
    };

    taps.input = tape.constant(x);

    // Encoder.
    taps.enc_feats.push_back(staged("encoder", 0, [&] { return ops::relu(conv("stem", model.stem, taps.input)); }));
    for (std::size_t i = 1; i <= n; ++i) {
        taps.enc_feats.push_back(staged("encoder", i, [&] {
            const std::string prefix = "enc." + std::to_string(i);
            const EncoderBlock<T>& blk = model.enc.at(i - 1);
            Var<T> h = ops::relu(conv(prefix + ".conv1", blk.conv1, taps.enc_feats.back()));
            return ops::relu(conv(prefix + ".conv2", blk.conv2, h));
        }));
    }

    // Classifier head reads only E_n.
    {
        Var<T> pooled = layers::global_avg_pool(taps.enc_feats[n]);
        Var<T> w = param("cls.weight", model.cls.weight);
        Var<T> b = param("cls.bias", model.cls.bias);
        taps.logits = layers::dense(pooled, w, b);
        taps.probs = ops::softmax(taps.logits);
    }

    if (!opts.with_decoder) return taps;

    // Decoder with attention skips.
    Var<T> s = staged("decoder", 0, [&] { return conv("attn.0", model.attn.at(0), taps.enc_feats[n]); });
    taps.dec_feats.push_back(s);
    for (std::size_t j = 0; j < n; ++j) {
        s = staged("decoder", j + 1, [&] {
            const std::string dj = "dec." + std::to_string(j);
            Var<T> w = param(dj + ".weight", model.dec.at(j).weight);
            Var<T> b = param(dj + ".bias", model.dec.at(j).bias);
            Var<T> u = layers::conv2d_transpose(s, w, b);
            taps.dec_feats.push_back(u);
            Var<T> skip = conv("attn." + std::to_string(j + 1), model.attn.at(j + 1), taps.enc_feats[n - 1 - j]);
            return ops::add(skip, u);
        });
    }
    taps.recon = staged("reconstruction", n, [&] { return ops::sigmoid(conv("recon", model.recon, s)); });
    return taps;
}

template struct RfrlModel<float>;
template struct RfrlModel<double>;
template RfrlModel<double> RfrlModel<float>::cast<double>() const;
template RfrlModel<float> RfrlModel<double>::cast<float>() const;
template RfrlModel<float> RfrlModel<float>::cast<float>() const;
template RfrlModel<double> RfrlModel<double>::cast<double>() const;
template RfrlModel<float> build_model<float>(const ModelConfig&, std::uint64_t);
template RfrlModel<double> build_model<double>(const ModelConfig&, std::uint64_t);
template ForwardTaps<float> forward<float>(const RfrlModel<float>&, Tape<float>&, const Tensor<float>&, ForwardOptions);
template ForwardTaps<double> forward<double>(const RfrlModel<double>&, Tape<double>&, const Tensor<double>&,
                                             ForwardOptions);

}  // namespace rfrl
