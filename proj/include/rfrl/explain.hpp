#pragma once

#include <string>

#include "rfrl/model.hpp"

namespace rfrl {

/// Encoder tap for a heatmap: the last encoder stage E_n or one / two before it.
enum class CamStage { n, n_minus_1, n_minus_2 };
enum class CamMethod { gradcam, gradcam_pp };

CamStage parse_cam_stage(const std::string& s);  // "n", "n-1", "n-2"
std::string to_string(CamStage s);

template <typename T>
struct Heatmap {
    Tensor<T> values;  // [h, w] at the stage's resolution; 0 <= v <= 1
    CamStage stage = CamStage::n;
    std::size_t class_idx = 0;
};

/// Class activation map for one image x[1, C, H, W]. Gradients are taken
/// of the pre-softmax logit w.r.t. the pre-attention encoder feature.
template <typename T>
Heatmap<T> class_activation_map(const RfrlModel<T>& model, const Tensor<T>& x, std::size_t class_idx, CamStage stage,
                                CamMethod method);

template <typename T>
Heatmap<T> gradcam(const RfrlModel<T>& model, const Tensor<T>& x, std::size_t class_idx, CamStage stage) {
    return class_activation_map(model, x, class_idx, stage, CamMethod::gradcam);
}

template <typename T>
Heatmap<T> gradcam_pp(const RfrlModel<T>& model, const Tensor<T>& x, std::size_t class_idx, CamStage stage) {
    return class_activation_map(model, x, class_idx, stage, CamMethod::gradcam_pp);
}

/// Heatmap weighting from feature maps F[C, h, w] and gradients G[C, h, w].
/// Exposed separately so the weighting can be checked without a model.
template <typename T>
Tensor<T> cam_from_gradients(const Tensor<T>& features, const Tensor<T>& grads, CamMethod method);

}  // namespace rfrl
