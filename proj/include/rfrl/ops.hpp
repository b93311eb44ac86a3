#pragma once

#include <span>
#include <vector>

#include "rfrl/tape.hpp"

// Differentiable primitives over tape values. Binary ops require exactly
// equal shapes; there is no implicit broadcasting.
namespace rfrl::ops {

enum class EwiseKind { add, sub, mul };

template <typename T>
Var<T> ewise(EwiseKind kind, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) { return ewise(EwiseKind::add, a, b); }
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) { return ewise(EwiseKind::sub, a, b); }
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) { return ewise(EwiseKind::mul, a, b); }

/// Sum of equally shaped values.
template <typename T>
Var<T> add_n(std::span<const Var<T>> xs);

/// x * factor with a compile-time-free scalar.
template <typename T>
Var<T> scale(const Var<T>& x, double factor);

/// [m x k] . [k x n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// Row-wise softmax of a [B x c] tensor, max-subtracted.
template <typename T>
Var<T> softmax(const Var<T>& x);

/// log(clamp(x, lo, hi)); the gradient is zero where the clamp is active.
template <typename T>
Var<T> clamped_log(const Var<T>& x, double lo, double hi);

/// |x|, with subgradient 0 at 0.
template <typename T>
Var<T> abs(const Var<T>& x);

/// sqrt(x) for x >= 0; the gradient at exactly 0 is taken as 0.
template <typename T>
Var<T> sqrt(const Var<T>& x);

}  // namespace rfrl::ops
