#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rfrl/layers.hpp"

namespace rfrl {

struct LossSwitches {
    bool supervised = true;
    bool unsupervised = true;
    bool frs = true;

    bool any() const { return supervised || unsupervised || frs; }
    /// The decoder only matters when a head consumes it.
    bool needs_decoder() const { return unsupervised || frs; }
};

struct ModelConfig {
    std::size_t in_channels = 1;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t n_stages = 3;
    std::size_t stem_channels = 8;
    std::vector<std::size_t> stage_channels{24, 48, 96};
    std::size_t num_classes = 3;
    LossSwitches loss_switches;

    /// Channel count of encoder feature E_i (E_0 is the stem output).
    std::size_t enc_channels(std::size_t i) const { return i == 0 ? stem_channels : stage_channels.at(i - 1); }

    /// Throws ConfigError on violated invariants.
    void validate() const;
};

template <typename T>
struct EncoderBlock {
    Conv2dParams<T> conv1;  // 3x3, stride 1
    Conv2dParams<T> conv2;  // 3x3, stride 2
};

/// Encoder-decoder classifier with attention skips.
///
/// With n stages the encoder yields E_0 (stem, full resolution) and
/// E_1..E_n (each halving H and W). The decoder starts from
/// s_0 = A_0(E_n) and for j = 0..n-1 computes u_j = D_j(s_j) and
/// s_{j+1} = A_{j+1}(E_{n-1-j}) + u_j. The reconstruction head is a 1x1
/// conv + sigmoid on s_n. The classifier reads only E_n.
template <typename T>
struct RfrlModel {
    ModelConfig config;
    Conv2dParams<T> stem;
    std::vector<EncoderBlock<T>> enc;    // enc[i-1] produces E_i
    std::vector<Conv2dParams<T>> attn;   // attn[j] projects E_{n-j}; 1x1, depth preserving
    std::vector<ConvT2dParams<T>> dec;   // dec[j] maps depth(E_{n-j}) -> depth(E_{n-1-j})
    Conv2dParams<T> recon;               // 1x1, stem depth -> image channels
    DenseParams<T> cls;

    /// Calls fn(name, tensor) for every learnable tensor in canonical order.
    void visit(const std::function<void(const std::string&, Tensor<T>&)>& fn);
    void visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;

    /// Names of the parameter groups a tensor belongs to ("stem", "enc", ...).
    static std::string group_of(const std::string& name);

    std::size_t count_params() const;

    template <typename U>
    RfrlModel<U> cast() const;
};

/// Deterministic He-uniform (fan-in) initialization with zero biases.
template <typename T>
RfrlModel<T> build_model(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardOptions {
    /// Register parameters as requires-grad leaves.
    bool track_param_grads = true;
    /// Skip the decoder and reconstruction head entirely.
    bool with_decoder = true;
};

/// Everything a loss head or an explainer needs from one forward pass.
template <typename T>
struct ForwardTaps {
    Var<T> input;
    std::vector<Var<T>> enc_feats;  // E_0..E_n
    /// Decoder features paired with the encoder for the similarity head, each
    /// taken before the skip-sum that follows it: dec_feats[0] = s_0 and
    /// dec_feats[k] = u_{k-1}, so dec_feats[n-i] has the shape of E_i.
    std::vector<Var<T>> dec_feats;
    Var<T> logits;
    Var<T> probs;
    Var<T> recon;  // unbound when the decoder is skipped
    std::vector<std::pair<std::string, Var<T>>> params;
};

template <typename T>
ForwardTaps<T> forward(const RfrlModel<T>& model, Tape<T>& tape, const Tensor<T>& x, ForwardOptions opts = {});

extern template struct RfrlModel<float>;
extern template struct RfrlModel<double>;

}  // namespace rfrl
