#include "rfrl/ops.hpp"

#include <algorithm>
#include <cmath>

#include "rfrl/kernels.hpp"

namespace rfrl::ops {

namespace {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

// Elementwise map with derivative expressed in terms of input and output.
template <typename T, typename F, typename DF>
Var<T> unary(const char* name, const Var<T>& x, F f, DF df) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.shape());
    auto o = out.data();
    auto in = xv.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
    return x.tape().record(name, {x}, std::move(out),
                           [xv, df](const Tensor<T>& g, const std::vector<bool>&) {
                               Tensor<T> gx(xv.shape());
                               auto gd = gx.data();
                               auto gi = g.data();
                               auto in = xv.data();
                               for (std::size_t i = 0; i < gd.size(); ++i) gd[i] = gi[i] * df(in[i]);
                               return std::vector<Tensor<T>>{std::move(gx)};
                           });
}

}  // namespace

template <typename T>
Var<T> ewise(EwiseKind kind, const Var<T>& a, const Var<T>& b) {
    require_same_shape("ewise", a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    Tensor<T> out(av.shape());
    auto o = out.data();
    auto x = av.data();
    auto y = bv.data();
    switch (kind) {
        case EwiseKind::add:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
            return a.tape().record("add", {a, b}, std::move(out),
                                   [](const Tensor<T>& g, const std::vector<bool>&) {
                                       return std::vector<Tensor<T>>{g, g};
                                   });
        case EwiseKind::sub:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
            return a.tape().record("sub", {a, b}, std::move(out),
                                   [](const Tensor<T>& g, const std::vector<bool>& need) {
                                       Tensor<T> gb = Tensor<T>::zeros_like(g);
                                       if (need[1]) {
                                           for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
                                       }
                                       return std::vector<Tensor<T>>{g, std::move(gb)};
                                   });
        case EwiseKind::mul:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
            return a.tape().record("mul", {a, b}, std::move(out),
                                   [av, bv](const Tensor<T>& g, const std::vector<bool>& need) {
                                       Tensor<T> ga = Tensor<T>::zeros_like(g);
                                       Tensor<T> gb = Tensor<T>::zeros_like(g);
                                       for (std::size_t i = 0; i < g.size(); ++i) {
                                           if (need[0]) ga[i] = g[i] * bv[i];
                                           if (need[1]) gb[i] = g[i] * av[i];
                                       }
                                       return std::vector<Tensor<T>>{std::move(ga), std::move(gb)};
                                   });
    }
    throw ContractError("unknown ewise kind");
}

template <typename T>
Var<T> add_n(std::span<const Var<T>> xs) {
    if (xs.empty()) throw ContractError("add_n of zero operands");
    Tensor<T> out = xs[0].value();
    for (std::size_t k = 1; k < xs.size(); ++k) {
        require_same_shape("add_n", xs[0], xs[k]);
        auto o = out.data();
        auto v = xs[k].value().data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += v[i];
    }
    const std::size_t n = xs.size();
    return xs[0].tape().record("add_n", std::vector<Var<T>>(xs.begin(), xs.end()), std::move(out),
                               [n](const Tensor<T>& g, const std::vector<bool>&) {
                                   return std::vector<Tensor<T>>(n, g);
                               });
}

template <typename T>
Var<T> scale(const Var<T>& x, double factor) {
    const T f = static_cast<T>(factor);
    return unary<T>("scale", x, [f](T v) { return v * f; }, [f](T) { return f; });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
    }
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<T> out({m, n});
    kernels::gemm<T>(false, false, m, n, k, av.data(), bv.data(), out.data(), false);
    return a.tape().record("matmul", {a, b}, std::move(out),
                           [av, bv, m, n, k](const Tensor<T>& g, const std::vector<bool>& need) {
                               Tensor<T> ga(av.shape());
                               Tensor<T> gb(bv.shape());
                               // dA = G . B^T, dB = A^T . G
                               if (need[0]) kernels::gemm<T>(false, true, m, k, n, g.data(), bv.data(), ga.data(), false);
                               if (need[1]) kernels::gemm<T>(true, false, k, n, m, av.data(), g.data(), gb.data(), false);
                               return std::vector<Tensor<T>>{std::move(ga), std::move(gb)};
                           });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    double acc = 0.0;
    for (T v : xv.data()) acc += v;
    Shape shape = xv.shape();
    return x.tape().record("sum", {x}, Tensor<T>::scalar(static_cast<T>(acc)),
                           [shape](const Tensor<T>& g, const std::vector<bool>&) {
                               return std::vector<Tensor<T>>{Tensor<T>(shape, g[0])};
                           });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    double acc = 0.0;
    for (T v : xv.data()) acc += v;
    const double n = static_cast<double>(xv.size());
    Shape shape = xv.shape();
    return x.tape().record("mean", {x}, Tensor<T>::scalar(static_cast<T>(acc / n)),
                           [shape, n](const Tensor<T>& g, const std::vector<bool>&) {
                               return std::vector<Tensor<T>>{Tensor<T>(shape, static_cast<T>(g[0] / n))};
                           });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    Tensor<T> out = x.value().reshaped(std::move(shape));
    Shape in_shape = x.shape();
    return x.tape().record("reshape", {x}, std::move(out),
                           [in_shape](const Tensor<T>& g, const std::vector<bool>&) {
                               return std::vector<Tensor<T>>{g.reshaped(in_shape)};
                           });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    return unary<T>("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                    [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = xv[i];
        // Split by sign so exp never overflows.
        if (v >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out[i] = e / (T(1) + e);
        }
    }
    Tensor<T> y = out;
    return x.tape().record("sigmoid", {x}, std::move(out),
                           [y](const Tensor<T>& g, const std::vector<bool>&) {
                               Tensor<T> gx(y.shape());
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * y[i] * (T(1) - y[i]);
                               return std::vector<Tensor<T>>{std::move(gx)};
                           });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.rank() != 2) throw ShapeError("softmax expects [B x c], got " + shape_str(xv.shape()));
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    Tensor<T> out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = xv.data().data() + r * cols;
        T* o = out.data().data() + r * cols;
        const T mx = *std::max_element(in, in + cols);
        T total = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            o[c] = std::exp(in[c] - mx);
            total += o[c];
        }
        for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
    }
    Tensor<T> y = out;
    return x.tape().record("softmax", {x}, std::move(out),
                           [y, rows, cols](const Tensor<T>& g, const std::vector<bool>&) {
                               // dx = y * (g - <g, y>) per row
                               Tensor<T> gx(y.shape());
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const std::size_t off = r * cols;
                                   T dot = 0;
                                   for (std::size_t c = 0; c < cols; ++c) dot += g[off + c] * y[off + c];
                                   for (std::size_t c = 0; c < cols; ++c) gx[off + c] = y[off + c] * (g[off + c] - dot);
                               }
                               return std::vector<Tensor<T>>{std::move(gx)};
                           });
}

template <typename T>
Var<T> clamped_log(const Var<T>& x, double lo, double hi) {
    if (!(lo > 0.0) || !(hi >= lo)) throw ContractError("clamped_log needs 0 < lo <= hi");
    const T l = static_cast<T>(lo), h = static_cast<T>(hi);
    return unary<T>("clamped_log", x, [l, h](T v) { return std::log(std::clamp(v, l, h)); },
                    [l, h](T v) { return (v < l || v > h) ? T(0) : T(1) / v; });
}

template <typename T>
Var<T> abs(const Var<T>& x) {
    return unary<T>("abs", x, [](T v) { return std::abs(v); },
                    [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
    for (T v : x.value().data()) {
        if (v < T(0)) throw NumericsError("sqrt of negative value");
    }
    return unary<T>("sqrt", x, [](T v) { return std::sqrt(v); },
                    [](T v) { return v > T(0) ? T(0.5) / std::sqrt(v) : T(0); });
}

#define RFRL_INSTANTIATE(T)                                                         \
    template Var<T> ewise<T>(EwiseKind, const Var<T>&, const Var<T>&);              \
    template Var<T> add_n<T>(std::span<const Var<T>>);                              \
    template Var<T> scale<T>(const Var<T>&, double);                                \
    template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                        \
    template Var<T> sum<T>(const Var<T>&);                                          \
    template Var<T> mean<T>(const Var<T>&);                                         \
    template Var<T> reshape<T>(const Var<T>&, Shape);                               \
    template Var<T> relu<T>(const Var<T>&);                                         \
    template Var<T> sigmoid<T>(const Var<T>&);                                      \
    template Var<T> softmax<T>(const Var<T>&);                                      \
    template Var<T> clamped_log<T>(const Var<T>&, double, double);                  \
    template Var<T> abs<T>(const Var<T>&);                                          \
    template Var<T> sqrt<T>(const Var<T>&);
RFRL_INSTANTIATE(float)
RFRL_INSTANTIATE(double)
#undef RFRL_INSTANTIATE

}  // namespace rfrl::ops
