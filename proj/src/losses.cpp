#include "rfrl/losses.hpp"

#include <cmath>
#include <vector>

#include "rfrl/ops.hpp"

namespace rfrl {

FrsNorm parse_frs_norm(const std::string& s) {
    if (s == "squared" || s == "squared_mean") return FrsNorm::squared_mean;
    if (s == "l1" || s == "abs_mean") return FrsNorm::abs_mean;
    if (s == "l2" || s == "rms") return FrsNorm::rms;
    throw ConfigError("unknown FRS norm '" + s + "' (expected squared, l1 or l2)");
}

std::string to_string(FrsNorm norm) {
    switch (norm) {
        case FrsNorm::squared_mean: return "squared";
        case FrsNorm::abs_mean: return "l1";
        case FrsNorm::rms: return "l2";
    }
    return "squared";
}

namespace losses {

template <typename T>
Var<T> cross_entropy(const Var<T>& probs, const Var<T>& labels, double eps) {
    const Tensor<T>& p = probs.value();
    const Tensor<T>& y = labels.value();
    if (p.rank() != 2 || p.shape() != y.shape()) {
        throw ShapeError("cross_entropy: probs " + shape_str(p.shape()) + " vs labels " + shape_str(y.shape()));
    }
    const std::size_t rows = p.dim(0), cols = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
        int ones = 0;
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const T v = y[r * cols + c];
            if (v == T(1)) {
                ++ones;
            } else if (v != T(0)) {
                throw ContractError("cross_entropy: labels row " + std::to_string(r) + " is not one-hot");
            }
            total += p[r * cols + c];
        }
        if (ones != 1) throw ContractError("cross_entropy: labels row " + std::to_string(r) + " is not one-hot");
        if (std::abs(total - 1.0) > 1e-5) {
            throw ContractError("cross_entropy: probabilities in row " + std::to_string(r) + " sum to " +
                                std::to_string(total));
        }
    }
    Var<T> logp = ops::clamped_log(probs, eps, 1.0);
    return ops::scale(ops::sum(ops::mul(labels, logp)), -1.0 / static_cast<double>(rows));
}

template <typename T>
Var<T> mse(const Var<T>& x, const Var<T>& x_rec) {
    if (x.shape() != x_rec.shape()) {
        throw ShapeError("mse: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(x_rec.shape()));
    }
    Var<T> d = ops::sub(x, x_rec);
    return ops::mean(ops::mul(d, d));
}

template <typename T>
Var<T> frs_loss(std::span<const Var<T>> enc_feats, std::span<const Var<T>> dec_feats, FrsNorm norm) {
    const std::size_t n_pairs = enc_feats.size();
    if (n_pairs == 0 || dec_feats.size() != n_pairs) {
        throw ShapeError("frs_loss: need equally many encoder and decoder features, got " + std::to_string(n_pairs) +
                         " and " + std::to_string(dec_feats.size()));
    }
    std::vector<Var<T>> terms;
    terms.reserve(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const Var<T>& e = enc_feats[i];
        const Var<T>& d = dec_feats[n_pairs - 1 - i];
        if (e.shape() != d.shape()) {
            throw ShapeError("frs_loss: pair " + std::to_string(i) + " shape mismatch " + shape_str(e.shape()) +
                             " vs " + shape_str(d.shape()));
        }
        Var<T> diff = ops::sub(e, d);
        switch (norm) {
            case FrsNorm::squared_mean:
                terms.push_back(ops::mean(ops::mul(diff, diff)));
                break;
            case FrsNorm::abs_mean:
                terms.push_back(ops::mean(ops::abs(diff)));
                break;
            case FrsNorm::rms:
                terms.push_back(ops::sqrt(ops::mean(ops::mul(diff, diff))));
                break;
        }
    }
    return ops::scale(ops::add_n<T>(terms), 1.0 / static_cast<double>(n_pairs));
}

}  // namespace losses

template <typename T>
LossReport<T> total_loss(const ForwardTaps<T>& taps, const Var<T>& labels, const LossSwitches& switches,
                         FrsNorm norm) {
    LossReport<T> report;
    std::vector<Var<T>> heads;
    if (switches.supervised) {
        Var<T> l = losses::cross_entropy(taps.probs, labels);
        report.l_sup = l.value().item();
        heads.push_back(l);
    }
    if (switches.unsupervised) {
        if (!taps.recon.valid()) throw ContractError("total_loss: reconstruction head requested but decoder was skipped");
        Var<T> l = losses::mse(taps.input, taps.recon);
        report.l_un = l.value().item();
        heads.push_back(l);
    }
    if (switches.frs) {
        if (taps.dec_feats.empty()) throw ContractError("total_loss: FRS head requested but decoder was skipped");
        Var<T> l = losses::frs_loss<T>(taps.enc_feats, taps.dec_feats, norm);
        report.l_frs = l.value().item();
        heads.push_back(l);
    }
    if (heads.empty()) {
        report.total = labels.tape().constant(Tensor<T>::scalar(T(0)));
    } else if (heads.size() == 1) {
        report.total = heads.front();
    } else {
        report.total = ops::add_n<T>(heads);
    }
    report.total_value = report.total.value().item();
    return report;
}

#define RFRL_INSTANTIATE(T)                                                                                  \
    template Var<T> losses::cross_entropy<T>(const Var<T>&, const Var<T>&, double);                          \
    template Var<T> losses::mse<T>(const Var<T>&, const Var<T>&);                                            \
    template Var<T> losses::frs_loss<T>(std::span<const Var<T>>, std::span<const Var<T>>, FrsNorm);          \
    template LossReport<T> total_loss<T>(const ForwardTaps<T>&, const Var<T>&, const LossSwitches&, FrsNorm);
RFRL_INSTANTIATE(float)
RFRL_INSTANTIATE(double)
#undef RFRL_INSTANTIATE

}  // namespace rfrl
