#include "rfrl/kernels.hpp"

#include <algorithm>

#include <Eigen/Core>

namespace rfrl::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

ConvGeometry geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad) {
    if (x.size() != 4 || w.size() != 4 || w[2] != w[3]) {
        throw ShapeError("conv2d expects x[B,C,H,W] and w[O,C,k,k], got " + shape_str(x) + " and " + shape_str(w));
    }
    if (x[1] != w[1]) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(x[1]) + ", kernel expects " +
                         std::to_string(w[1]));
    }
    if (stride == 0) throw ShapeError("conv2d stride must be positive");
    if (x[2] + 2 * pad < w[2] || x[3] + 2 * pad < w[3]) {
        throw ShapeError("conv2d kernel larger than padded input " + shape_str(x));
    }
    return ConvGeometry{x[0], x[1], x[2], x[3], w[0], w[2], stride, pad};
}

// col[(c*k + ky)*k + kx, off + oy*Wo + ox] = x[c, oy*s + ky - p, ox*s + kx - p], rows ld apart.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col, std::size_t ld, std::size_t off) {
    const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel, s = g.stride;
    const auto ih = static_cast<std::ptrdiff_t>(g.in_h), iw = static_cast<std::ptrdiff_t>(g.in_w);
    const auto pad = static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        const T* plane = x + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* row = col + ((c * k + ky) * k + kx) * ld + off;
                // Valid output columns: 0 <= ox*s + kx - pad < iw.
                const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const auto S = static_cast<std::ptrdiff_t>(s);
                const auto lo = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
                    static_cast<std::ptrdiff_t>(ow), dx >= 0 ? 0 : (-dx + S - 1) / S));
                const auto hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                    iw - dx <= 0 ? 0 : (iw - dx + S - 1) / S, static_cast<std::ptrdiff_t>(lo),
                    static_cast<std::ptrdiff_t>(ow)));
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * s + ky) - pad;
                    T* dst = row + oy * ow;
                    if (iy < 0 || iy >= ih) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = plane + iy * iw + dx;
                    std::fill(dst, dst + lo, T(0));
                    if (s == 1) {
                        std::copy(src + lo, src + hi, dst + lo);
                    } else {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * s];
                    }
                    std::fill(dst + hi, dst + ow, T(0));
                }
            }
        }
    }
}

// Scatter-add inverse of im2col.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x, std::size_t ld, std::size_t off) {
    const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel, s = g.stride;
    const auto ih = static_cast<std::ptrdiff_t>(g.in_h), iw = static_cast<std::ptrdiff_t>(g.in_w);
    const auto pad = static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        T* plane = x + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = col + ((c * k + ky) * k + kx) * ld + off;
                const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const auto S = static_cast<std::ptrdiff_t>(s);
                const auto lo = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
                    static_cast<std::ptrdiff_t>(ow), dx >= 0 ? 0 : (-dx + S - 1) / S));
                const auto hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                    iw - dx <= 0 ? 0 : (iw - dx + S - 1) / S, static_cast<std::ptrdiff_t>(lo),
                    static_cast<std::ptrdiff_t>(ow)));
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * s + ky) - pad;
                    if (iy < 0 || iy >= ih) continue;
                    const T* src = row + oy * ow;
                    T* dst = plane + iy * iw + dx;
                    for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * s] += src[ox];
                }
            }
        }
    }
}

// [B, C, hw] -> [C, B*hw]
template <typename T>
std::vector<T> to_channel_major(const Tensor<T>& t, std::size_t batch, std::size_t ch, std::size_t hw) {
    std::vector<T> out(t.size());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
            const T* src = t.data().data() + (b * ch + c) * hw;
            std::copy(src, src + hw, out.data() + c * batch * hw + b * hw);
        }
    }
    return out;
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
          std::span<const T> b, std::span<T> c, bool accumulate) {
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    MutMap<T> C(c.data(), M, N);
    auto run = [&](const auto& A, const auto& B) {
        if (accumulate) {
            C.noalias() += A * B;
        } else {
            C.noalias() = A * B;
        }
    };
    if (!trans_a && !trans_b) {
        run(ConstMap<T>(a.data(), M, K), ConstMap<T>(b.data(), K, N));
    } else if (trans_a && !trans_b) {
        run(ConstMap<T>(a.data(), K, M).transpose(), ConstMap<T>(b.data(), K, N));
    } else if (!trans_a && trans_b) {
        run(ConstMap<T>(a.data(), M, K), ConstMap<T>(b.data(), N, K).transpose());
    } else {
        run(ConstMap<T>(a.data(), K, M).transpose(), ConstMap<T>(b.data(), N, K).transpose());
    }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias, std::size_t stride,
                         std::size_t pad) {
    const ConvGeometry g = geometry(x.shape(), w.shape(), stride, pad);
    if (!bias.empty() && bias.size() != g.out_ch) throw ShapeError("conv2d bias length mismatch");
    const std::size_t oh = g.out_h(), ow = g.out_w();
    const std::size_t patch = g.in_ch * g.kernel * g.kernel;
    const std::size_t hw = oh * ow, ld = g.batch * hw;
    std::vector<T> col(patch * ld), out(g.out_ch * ld);
    for (std::size_t b = 0; b < g.batch; ++b) {
        im2col(x.data().data() + b * g.in_ch * g.in_h * g.in_w, g, col.data(), ld, b * hw);
    }
    gemm<T>(false, false, g.out_ch, ld, patch, w.data(), col, out, false);
    Tensor<T> y({g.batch, g.out_ch, oh, ow});
    for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t o = 0; o < g.out_ch; ++o) {
            const T bo = bias.empty() ? T(0) : bias[o];
            const T* src = out.data() + o * ld + b * hw;
            T* dst = y.data().data() + (b * g.out_ch + o) * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bo;
        }
    }
    return y;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, const Shape& in_shape, std::size_t stride,
                                std::size_t pad) {
    const ConvGeometry g = geometry(in_shape, w.shape(), stride, pad);
    const std::size_t oh = g.out_h(), ow = g.out_w();
    if (gy.shape() != Shape{g.batch, g.out_ch, oh, ow}) {
        throw ShapeError("conv2d backward: output gradient " + shape_str(gy.shape()) + " inconsistent with input " +
                         shape_str(in_shape));
    }
    const std::size_t patch = g.in_ch * g.kernel * g.kernel;
    const std::size_t hw = oh * ow, ld = g.batch * hw;
    std::vector<T> gyt = to_channel_major(gy, g.batch, g.out_ch, hw);
    std::vector<T> col(patch * ld);
    // col = W^T . gy
    gemm<T>(true, false, patch, ld, g.out_ch, w.data(), gyt, col, false);
    Tensor<T> gx(in_shape);
    for (std::size_t b = 0; b < g.batch; ++b) {
        col2im(col.data(), g, gx.data().data() + b * g.in_ch * g.in_h * g.in_w, ld, b * hw);
    }
    return gx;
}

template <typename T>
Tensor<T> conv2d_backward_weight(const Tensor<T>& gy, const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                                 std::size_t pad) {
    if (gy.rank() != 4 || x.rank() != 4) throw ShapeError("conv2d backward: operands must be rank 4");
    const Shape w_shape{gy.dim(1), x.dim(1), kernel, kernel};
    const ConvGeometry g = geometry(x.shape(), w_shape, stride, pad);
    const std::size_t oh = g.out_h(), ow = g.out_w();
    if (gy.shape() != Shape{g.batch, g.out_ch, oh, ow}) {
        throw ShapeError("conv2d backward: output gradient " + shape_str(gy.shape()) + " inconsistent with input " +
                         shape_str(x.shape()));
    }
    const std::size_t patch = g.in_ch * g.kernel * g.kernel;
    const std::size_t hw = oh * ow, ld = g.batch * hw;
    std::vector<T> col(patch * ld);
    for (std::size_t b = 0; b < g.batch; ++b) {
        im2col(x.data().data() + b * g.in_ch * g.in_h * g.in_w, g, col.data(), ld, b * hw);
    }
    std::vector<T> gyt = to_channel_major(gy, g.batch, g.out_ch, hw);
    Tensor<T> gw(w_shape);
    // gw = gy . col^T
    gemm<T>(false, true, g.out_ch, patch, ld, gyt, col, gw.data(), false);
    return gw;
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& gy) {
    if (gy.rank() != 4) throw ShapeError("channel_sum expects rank 4, got " + shape_str(gy.shape()));
    const std::size_t batch = gy.dim(0), ch = gy.dim(1), plane = gy.dim(2) * gy.dim(3);
    Tensor<T> out({ch});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
            const T* p = gy.data().data() + (b * ch + c) * plane;
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out[c] += acc;
        }
    }
    return out;
}

#define RFRL_INSTANTIATE(T)                                                                                        \
    template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>, \
                          std::span<T>, bool);                                                                     \
    template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, std::size_t,        \
                                         std::size_t);                                                             \
    template Tensor<T> conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&, const Shape&, std::size_t,       \
                                                std::size_t);                                                      \
    template Tensor<T> conv2d_backward_weight<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t,       \
                                                 std::size_t);                                                     \
    template Tensor<T> channel_sum<T>(const Tensor<T>&);
RFRL_INSTANTIATE(float)
RFRL_INSTANTIATE(double)
#undef RFRL_INSTANTIATE

}  // namespace rfrl::kernels
