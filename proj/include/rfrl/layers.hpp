#pragma once

#include <cstddef>

#include "rfrl/tape.hpp"

namespace rfrl {

/// Square odd kernel, "same"-style zero padding of k/2 on every side.
template <typename T>
struct Conv2dParams {
    Tensor<T> weight;  // [out_ch, in_ch, k, k]
    Tensor<T> bias;    // [out_ch]
    std::size_t stride = 1;

    std::size_t out_ch() const { return weight.dim(0); }
    std::size_t in_ch() const { return weight.dim(1); }
    std::size_t kernel() const { return weight.dim(2); }
    std::size_t param_count() const { return weight.size() + bias.size(); }
    void validate() const;
};

/// 3x3, stride-2 transposed convolution that exactly doubles H and W.
template <typename T>
struct ConvT2dParams {
    Tensor<T> weight;  // [in_ch, out_ch, 3, 3]
    Tensor<T> bias;    // [out_ch]

    std::size_t in_ch() const { return weight.dim(0); }
    std::size_t out_ch() const { return weight.dim(1); }
    std::size_t param_count() const { return weight.size() + bias.size(); }
    void validate() const;
};

template <typename T>
struct DenseParams {
    Tensor<T> weight;  // [in_features, out_features]
    Tensor<T> bias;    // [out_features]

    std::size_t param_count() const { return weight.size() + bias.size(); }
};

namespace layers {

/// Cross-correlation (no kernel flip) with zero padding k/2. Output extent
/// is ceil(H/stride) x ceil(W/stride).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride);

/// Adjoint of the stride-2, pad-1, 3x3 conv2d mapping 2H x 2W -> H x W, plus
/// bias. Output is [B, out_ch, 2H, 2W].
template <typename T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// [B, C, H, W] -> [B, C]
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// x[B, f] . w[f, c] + b[c]
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

}  // namespace layers
}  // namespace rfrl
