#pragma once

#include <span>
#include <string>

#include "rfrl/model.hpp"

namespace rfrl {

/// Per-pair distance used by the feature representation similarity head.
enum class FrsNorm {
    squared_mean,  // mean of squared differences (default)
    abs_mean,      // mean of absolute differences
    rms,           // sqrt of the mean squared difference
};

FrsNorm parse_frs_norm(const std::string& s);
std::string to_string(FrsNorm norm);

namespace losses {

inline constexpr double kProbEpsilon = 1e-7;

/// Mean over the batch of -sum_i y_i log(clamp(p_i, eps, 1)).
/// `labels` must be one-hot and each row of `probs` must sum to 1 (1e-5).
template <typename T>
Var<T> cross_entropy(const Var<T>& probs, const Var<T>& labels, double eps = kProbEpsilon);

/// Mean squared error over every element, batch included.
template <typename T>
Var<T> mse(const Var<T>& x, const Var<T>& x_rec);

/// (1/N) sum_i d(enc[i], dec[N-1-i]) over the N = n+1 stage pairs.
template <typename T>
Var<T> frs_loss(std::span<const Var<T>> enc_feats, std::span<const Var<T>> dec_feats,
                FrsNorm norm = FrsNorm::squared_mean);

}  // namespace losses

template <typename T>
struct LossReport {
    Var<T> total;  // differentiable sum of the enabled heads
    double l_sup = 0.0;
    double l_un = 0.0;
    double l_frs = 0.0;
    double total_value = 0.0;
};

/// Unit-weighted sum of the enabled heads; disabled heads contribute exactly 0.
template <typename T>
LossReport<T> total_loss(const ForwardTaps<T>& taps, const Var<T>& labels, const LossSwitches& switches,
                         FrsNorm norm = FrsNorm::squared_mean);

}  // namespace rfrl
