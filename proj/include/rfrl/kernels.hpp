#pragma once

#include <cstddef>
#include <span>

#include "rfrl/tensor.hpp"

// Raw numeric kernels without tape bookkeeping. The differentiable layers
// in layers.hpp are thin wrappers over these.
namespace rfrl::kernels {

/// C[m x n] (+)= op(A)[m x k] * op(B)[k x n], all row-major. op(A) = A^T
/// when trans_a (A then stored k x m); likewise for B.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
          std::span<const T> b, std::span<T> c, bool accumulate);

/// Geometry of a square-kernel, symmetrically zero-padded 2-D correlation.
struct ConvGeometry {
    std::size_t batch, in_ch, in_h, in_w;
    std::size_t out_ch, kernel, stride, pad;

    std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// y[B,O,Ho,Wo] = correlate(x[B,C,H,W], w[O,C,k,k]) + bias[O]. `bias` may be empty.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias, std::size_t stride,
                         std::size_t pad);

/// Adjoint of conv2d_forward w.r.t. x (bias excluded); `in_shape` is x's shape.
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, const Shape& in_shape, std::size_t stride,
                                std::size_t pad);

/// dLoss/dw for conv2d_forward given the output gradient and the input.
template <typename T>
Tensor<T> conv2d_backward_weight(const Tensor<T>& gy, const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                                 std::size_t pad);

/// Sum of gy[B,O,H,W] over all but the channel axis.
template <typename T>
Tensor<T> channel_sum(const Tensor<T>& gy);

}  // namespace rfrl::kernels
