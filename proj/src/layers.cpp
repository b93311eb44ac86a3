#include "rfrl/layers.hpp"

#include "rfrl/kernels.hpp"

namespace rfrl {

template <typename T>
void Conv2dParams<T>::validate() const {
    if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
        throw ShapeError("conv2d weight must be [out, in, k, k], got " + shape_str(weight.shape()));
    }
    if (kernel() % 2 == 0) throw ShapeError("conv2d kernel must be odd, got " + std::to_string(kernel()));
    if (bias.shape() != Shape{out_ch()}) throw ShapeError("conv2d bias must be [" + std::to_string(out_ch()) + "]");
    if (stride == 0) throw ShapeError("conv2d stride must be positive");
}

template <typename T>
void ConvT2dParams<T>::validate() const {
    if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
        throw ShapeError("transposed conv weight must be [in, out, 3, 3], got " + shape_str(weight.shape()));
    }
    if (bias.shape() != Shape{out_ch()}) {
        throw ShapeError("transposed conv bias must be [" + std::to_string(out_ch()) + "]");
    }
}

template struct Conv2dParams<float>;
template struct Conv2dParams<double>;
template struct ConvT2dParams<float>;
template struct ConvT2dParams<double>;

namespace layers {

namespace {

template <typename T>
void add_channel_bias(Tensor<T>& y, const Tensor<T>& bias) {
    const std::size_t batch = y.dim(0), ch = y.dim(1), plane = y.dim(2) * y.dim(3);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
            T* p = y.data().data() + (b * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += bias[c];
        }
    }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = weight.value();
    Conv2dParams<T>{wv, bias.value(), stride}.validate();
    if (xv.rank() != 4) throw ShapeError("conv2d input must be [B, C, H, W], got " + shape_str(xv.shape()));
    if (xv.dim(1) != wv.dim(1)) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(xv.dim(1)) + " channels, weight expects " +
                         std::to_string(wv.dim(1)));
    }
    const std::size_t k = wv.dim(2);
    if (xv.dim(2) < k || xv.dim(3) < k) {
        throw ShapeError("conv2d input " + shape_str(xv.shape()) + " smaller than kernel " + std::to_string(k));
    }
    const std::size_t pad = k / 2;
    Tensor<T> y = kernels::conv2d_forward(xv, wv, bias.value().data(), stride, pad);
    return x.tape().record("conv2d", {x, weight, bias}, std::move(y),
                           [xv, wv, stride, pad, k](const Tensor<T>& g, const std::vector<bool>& need) {
                               std::vector<Tensor<T>> out(3);
                               if (need[0]) out[0] = kernels::conv2d_backward_input(g, wv, xv.shape(), stride, pad);
                               if (need[1]) out[1] = kernels::conv2d_backward_weight(g, xv, k, stride, pad);
                               if (need[2]) out[2] = kernels::channel_sum(g);
                               return out;
                           });
}

template <typename T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = weight.value();
    ConvT2dParams<T>{wv, bias.value()}.validate();
    if (xv.rank() != 4) throw ShapeError("transposed conv input must be [B, C, H, W], got " + shape_str(xv.shape()));
    if (xv.dim(1) != wv.dim(0)) {
        throw ShapeError("transposed conv channel mismatch: input has " + std::to_string(xv.dim(1)) +
                         " channels, weight expects " + std::to_string(wv.dim(0)));
    }
    constexpr std::size_t stride = 2, pad = 1, k = 3;
    const Shape out_shape{xv.dim(0), wv.dim(1), 2 * xv.dim(2), 2 * xv.dim(3)};
    // The forward pass of a transposed conv is the input-adjoint of the
    // matching strided conv whose weight is read as [O=in_ch, C=out_ch, k, k].
    Tensor<T> y = kernels::conv2d_backward_input(xv, wv, out_shape, stride, pad);
    add_channel_bias(y, bias.value());
    return x.tape().record("conv2d_transpose", {x, weight, bias}, std::move(y),
                           [xv, wv](const Tensor<T>& g, const std::vector<bool>& need) {
                               std::vector<Tensor<T>> out(3);
                               if (need[0]) out[0] = kernels::conv2d_forward(g, wv, std::span<const T>{}, stride, pad);
                               if (need[1]) out[1] = kernels::conv2d_backward_weight(xv, g, k, stride, pad);
                               if (need[2]) out[2] = kernels::channel_sum(g);
                               return out;
                           });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.rank() != 4) throw ShapeError("global_avg_pool expects [B, C, H, W], got " + shape_str(xv.shape()));
    const std::size_t batch = xv.dim(0), ch = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor<T> y({batch, ch});
    for (std::size_t i = 0; i < batch * ch; ++i) {
        const T* p = xv.data().data() + i * plane;
        double acc = 0.0;
        for (std::size_t j = 0; j < plane; ++j) acc += p[j];
        y[i] = static_cast<T>(acc / static_cast<double>(plane));
    }
    const Shape in_shape = xv.shape();
    return x.tape().record("global_avg_pool", {x}, std::move(y),
                           [in_shape, plane](const Tensor<T>& g, const std::vector<bool>&) {
                               Tensor<T> gx(in_shape);
                               const T inv = T(1) / static_cast<T>(plane);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   T* p = gx.data().data() + i * plane;
                                   for (std::size_t j = 0; j < plane; ++j) p[j] = g[i] * inv;
                               }
                               return std::vector<Tensor<T>>{std::move(gx)};
                           });
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = weight.value();
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0)) {
        throw ShapeError("dense: input " + shape_str(xv.shape()) + " incompatible with weight " + shape_str(wv.shape()));
    }
    if (bias.shape() != Shape{wv.dim(1)}) {
        throw ShapeError("dense: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(wv.dim(1)) +
                         " outputs");
    }
    const std::size_t batch = xv.dim(0), f = xv.dim(1), c = wv.dim(1);
    Tensor<T> y({batch, c});
    kernels::gemm<T>(false, false, batch, c, f, xv.data(), wv.data(), y.data(), false);
    const Tensor<T>& bv = bias.value();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < c; ++j) y[b * c + j] += bv[j];
    }
    return x.tape().record("dense", {x, weight, bias}, std::move(y),
                           [xv, wv, batch, f, c](const Tensor<T>& g, const std::vector<bool>& need) {
                               std::vector<Tensor<T>> out(3);
                               if (need[0]) {
                                   out[0] = Tensor<T>(xv.shape());
                                   kernels::gemm<T>(false, true, batch, f, c, g.data(), wv.data(), out[0].data(), false);
                               }
                               if (need[1]) {
                                   out[1] = Tensor<T>(wv.shape());
                                   kernels::gemm<T>(true, false, f, c, batch, xv.data(), g.data(), out[1].data(), false);
                               }
                               if (need[2]) {
                                   out[2] = Tensor<T>({c});
                                   for (std::size_t b = 0; b < batch; ++b) {
                                       for (std::size_t j = 0; j < c; ++j) out[2][j] += g[b * c + j];
                                   }
                               }
                               return out;
                           });
}

#define RFRL_INSTANTIATE(T)                                                                       \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t);          \
    template Var<T> conv2d_transpose<T>(const Var<T>&, const Var<T>&, const Var<T>&);             \
    template Var<T> global_avg_pool<T>(const Var<T>&);                                            \
    template Var<T> dense<T>(const Var<T>&, const Var<T>&, const Var<T>&);
RFRL_INSTANTIATE(float)
RFRL_INSTANTIATE(double)
#undef RFRL_INSTANTIATE

}  // namespace layers
}  // namespace rfrl
