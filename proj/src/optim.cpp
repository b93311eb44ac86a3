#include "rfrl/optim.hpp"

#include <algorithm>
#include <cmath>

namespace rfrl {

template <typename T>
void adam_step(std::map<std::string, Tensor<T>*>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state) {
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("adam_step: gradient for unknown parameter '" + name + "'");
        if (g.shape() != it->second->shape()) {
            throw ShapeError("adam_step: gradient shape " + shape_str(g.shape()) + " does not match parameter '" +
                             name + "' " + shape_str(it->second->shape()));
        }
        if (!g.all_finite()) throw NumericsError("adam_step: non-finite gradient for '" + name + "'");
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);

    for (auto& [name, p] : params) {
        auto [mit, fresh_m] = state.m.try_emplace(name, p->shape());
        auto [vit, fresh_v] = state.v.try_emplace(name, p->shape());
        Tensor<T>& m = mit->second;
        Tensor<T>& v = vit->second;
        auto git = grads.find(name);
        const Tensor<T>* g = git == grads.end() ? nullptr : &git->second;
        T* pd = p->data().data();
        T* md = m.data().data();
        T* vd = v.data().data();
        const T* gd = g ? g->data().data() : nullptr;
        const double lr = state.lr, eps = state.eps, inv1 = 1.0 / bc1, inv2 = 1.0 / bc2;
        for (std::size_t i = 0, n = p->size(); i < n; ++i) {
            const T gi = gd ? gd[i] : T(0);
            md[i] = b1 * md[i] + (T(1) - b1) * gi;
            vd[i] = b2 * vd[i] + (T(1) - b2) * gi * gi;
            const double m_hat = static_cast<double>(md[i]) * inv1;
            const double v_hat = static_cast<double>(vd[i]) * inv2;
            pd[i] = static_cast<T>(static_cast<double>(pd[i]) - lr * m_hat / (std::sqrt(v_hat) + eps));
        }
    }
}

std::pair<double, PlateauState> plateau_update(PlateauState state, double val_loss, double lr) {
    if (!std::isfinite(val_loss)) throw NumericsError("plateau_update: non-finite validation loss");
    if (val_loss < state.best_val_loss) {
        state.best_val_loss = val_loss;
        state.epochs_since_improve = 0;
        return {lr, state};
    }
    state.epochs_since_improve += 1;
    if (state.epochs_since_improve >= state.config.patience) {
        lr = std::max(lr * state.config.factor, state.config.min_lr);
        state.epochs_since_improve = 0;
    }
    return {lr, state};
}

template void adam_step<float>(std::map<std::string, Tensor<float>*>&, const std::map<std::string, Tensor<float>>&,
                               AdamState<float>&);
template void adam_step<double>(std::map<std::string, Tensor<double>*>&, const std::map<std::string, Tensor<double>>&,
                                AdamState<double>&);

}  // namespace rfrl
