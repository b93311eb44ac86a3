#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "rfrl/tensor.hpp"

namespace rfrl {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates keyed by parameter name.
template <typename T>
struct AdamState {
    std::uint64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::map<std::string, Tensor<T>> m;
    std::map<std::string, Tensor<T>> v;

    static AdamState from_config(const AdamConfig& cfg) {
        AdamState s;
        s.lr = cfg.lr;
        s.beta1 = cfg.beta1;
        s.beta2 = cfg.beta2;
        s.eps = cfg.eps;
        return s;
    }
};

/// One bias-corrected Adam update over every entry of `params`. A parameter
/// without an entry in `grads` is treated as having a zero gradient.
/// Raises NumericsError before touching anything if a gradient is not finite.
template <typename T>
void adam_step(std::map<std::string, Tensor<T>*>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state);

struct PlateauConfig {
    int patience = 6;
    double factor = 0.1;
    double min_lr = 1e-7;
};

struct PlateauState {
    double best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_improve = 0;
    PlateauConfig config;
};

/// Reduce-on-plateau: after `patience` epochs without a strict improvement,
/// lr <- max(lr * factor, min_lr) and the counter restarts.
std::pair<double, PlateauState> plateau_update(PlateauState state, double val_loss, double lr);

}  // namespace rfrl
