#include "rfrl/explain.hpp"

#include <algorithm>
#include <cmath>

#include "rfrl/ops.hpp"

namespace rfrl {

CamStage parse_cam_stage(const std::string& s) {
    if (s == "n" || s == "N") return CamStage::n;
    if (s == "n-1" || s == "N-1") return CamStage::n_minus_1;
    if (s == "n-2" || s == "N-2") return CamStage::n_minus_2;
    throw ContractError("unknown stage '" + s + "' (expected n, n-1 or n-2)");
}

std::string to_string(CamStage s) {
    switch (s) {
        case CamStage::n: return "n";
        case CamStage::n_minus_1: return "n-1";
        case CamStage::n_minus_2: return "n-2";
    }
    return "n";
}

template <typename T>
Tensor<T> cam_from_gradients(const Tensor<T>& features, const Tensor<T>& grads, CamMethod method) {
    if (features.rank() != 3 || features.shape() != grads.shape()) {
        throw ShapeError("cam: features " + shape_str(features.shape()) + " and gradients " +
                         shape_str(grads.shape()) + " must both be [C, h, w]");
    }
    const std::size_t C = features.dim(0), h = features.dim(1), w = features.dim(2), plane = h * w;
    std::vector<double> cam(plane, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const T* f = features.data().data() + c * plane;
        const T* g = grads.data().data() + c * plane;
        double weight = 0.0;
        if (method == CamMethod::gradcam) {
            for (std::size_t i = 0; i < plane; ++i) weight += g[i];
            weight /= static_cast<double>(plane);
        } else {
            // Exponentiated-score closed form:
            // alpha = g^2 / (2 g^2 + sum(F) g^3), weight = sum alpha * relu(g).
            double f_sum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) f_sum += f[i];
            for (std::size_t i = 0; i < plane; ++i) {
                const double gi = g[i];
                if (gi == 0.0) continue;
                const double g2 = gi * gi;
                const double denom = 2.0 * g2 + f_sum * g2 * gi;
                const double alpha = denom != 0.0 ? g2 / denom : 0.0;
                weight += alpha * std::max(gi, 0.0);
            }
        }
        for (std::size_t i = 0; i < plane; ++i) cam[i] += weight * f[i];
    }
    Tensor<T> out({h, w});
    double peak = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
        cam[i] = std::max(cam[i], 0.0);
        peak = std::max(peak, cam[i]);
    }
    if (peak > 0.0) {
        for (std::size_t i = 0; i < plane; ++i) out[i] = static_cast<T>(cam[i] / peak);
    }
    return out;
}

template <typename T>
Heatmap<T> class_activation_map(const RfrlModel<T>& model, const Tensor<T>& x, std::size_t class_idx, CamStage stage,
                                CamMethod method) {
    const ModelConfig& cfg = model.config;
    if (class_idx >= cfg.num_classes) {
        throw ContractError("class " + std::to_string(class_idx) + " out of range for " +
                            std::to_string(cfg.num_classes) + " classes");
    }
    const std::size_t back = stage == CamStage::n ? 0 : (stage == CamStage::n_minus_1 ? 1 : 2);
    if (back > cfg.n_stages) throw ContractError("stage " + to_string(stage) + " does not exist in this model");
    const std::size_t enc_index = cfg.n_stages - back;

    Tensor<T> batch = x;
    if (x.rank() == 3) batch = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
    if (batch.rank() != 4 || batch.dim(0) != 1) {
        throw ContractError("class activation maps take a single image, got " + shape_str(x.shape()));
    }

    Tape<T> tape;
    ForwardTaps<T> taps = forward(model, tape, batch, ForwardOptions{.track_param_grads = true, .with_decoder = false});
    Tensor<T> mask({1, cfg.num_classes});
    mask[class_idx] = T(1);
    Var<T> score = ops::sum(ops::mul(taps.logits, tape.constant(mask)));
    const Gradients<T> grads = tape.backward(score);

    const Var<T>& feat = taps.enc_feats.at(enc_index);
    const Shape& fs = feat.shape();
    const Shape chw{fs[1], fs[2], fs[3]};
    Heatmap<T> out;
    out.values = cam_from_gradients(feat.value().reshaped(chw), grads.at(feat).reshaped(chw), method);
    out.stage = stage;
    out.class_idx = class_idx;
    return out;
}

#define RFRL_INSTANTIATE(T)                                                                                      \
    template Tensor<T> cam_from_gradients<T>(const Tensor<T>&, const Tensor<T>&, CamMethod);                     \
    template Heatmap<T> class_activation_map<T>(const RfrlModel<T>&, const Tensor<T>&, std::size_t, CamStage,     \
                                                CamMethod);
RFRL_INSTANTIATE(float)
RFRL_INSTANTIATE(double)
#undef RFRL_INSTANTIATE

}  // namespace rfrl
