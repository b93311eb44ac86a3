#include "rfrl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>
#include <vector>

#include "rfrl/errors.hpp"

namespace rfrl {

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

ConfusionMatrix confusion(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                          std::size_t classes) {
    if (preds.size() != labels.size()) {
        throw ContractError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                            std::to_string(labels.size()) + " labels");
    }
    if (classes == 0) throw ContractError("confusion: need at least one class");
    ConfusionMatrix cm{classes, std::vector<std::uint64_t>(classes * classes, 0)};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= classes || labels[i] >= classes) {
            throw ContractError("confusion: class index out of range at sample " + std::to_string(i));
        }
        ++cm.counts[labels[i] * classes + preds[i]];
    }
    return cm;
}

namespace {

/// Mean of p_i / q_i rounded once: exact rational sum while it fits in 128
/// bits, long double accumulation beyond that.
class RatioMean {
public:
    void add(std::uint64_t p, std::uint64_t q) {
        ratios_.emplace_back(p, q);
        if (!exact_) return;
        using U = unsigned __int128;
        U a, b;
        if (__builtin_mul_overflow(num_, static_cast<U>(q), &a) || __builtin_mul_overflow(static_cast<U>(p), den_, &b) ||
            __builtin_add_overflow(a, b, &num_) || __builtin_mul_overflow(den_, static_cast<U>(q), &den_)) {
            exact_ = false;
            return;
        }
        const U g = gcd(num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
    }

    double value() const {
        if (ratios_.empty()) return 0.0;
        const auto k = static_cast<unsigned __int128>(ratios_.size());
        if (exact_ && den_ <= (~static_cast<unsigned __int128>(0) >> 2) / k) return divide(num_, den_ * k);
        long double acc = 0.0L;
        for (auto [p, q] : ratios_) acc += static_cast<long double>(p) / static_cast<long double>(q);
        return static_cast<double>(acc / static_cast<long double>(ratios_.size()));
    }

private:
    static unsigned __int128 gcd(unsigned __int128 a, unsigned __int128 b) {
        while (b != 0) {
            const auto t = a % b;
            a = b;
            b = t;
        }
        return a;
    }

    /// Correctly rounded num / den for num <= den (round half to even).
    static double divide(unsigned __int128 num, unsigned __int128 den) {
        if (num == 0) return 0.0;
        if (num >= den) return num == den ? 1.0 : static_cast<double>(static_cast<long double>(num) / den);
        // Binary long division, 53 quotient bits.
        int exp = 0;
        while (num < den) {
            num <<= 1;
            --exp;
        }
        std::uint64_t mant = 0;
        for (int i = 0; i < 53; ++i) {
            mant <<= 1;
            if (num >= den) {
                num -= den;
                mant |= 1;
            }
            num <<= 1;
        }
        // num/den is now the remainder scaled by 2; compare with one half ulp.
        const bool above_half = num > den, at_half = num == den;
        if (above_half || (at_half && (mant & 1))) ++mant;
        return std::ldexp(static_cast<double>(mant), exp - 52);
    }

    std::vector<std::pair<std::uint64_t, std::uint64_t>> ratios_;
    unsigned __int128 num_ = 0, den_ = 1;
    bool exact_ = true;
};

}  // namespace

Metrics metrics(const ConfusionMatrix& cm) {
    const std::uint64_t n = cm.total();
    if (n == 0) throw ContractError("metrics: empty confusion matrix");
    const std::size_t k = cm.classes;
    Metrics out;
    RatioMean acc, sens, spec;
    for (std::size_t c = 0; c < k; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const std::uint64_t tp = cm.at(c, c);
        const std::uint64_t fn = row - tp;
        const std::uint64_t fp = col - tp;
        const std::uint64_t tn = n - tp - fn - fp;
        acc.add(tp + tn, n);
        if (tp + fn > 0) {
            sens.add(tp, tp + fn);
        } else {
            out.warnings.push_back("class " + std::to_string(c) + " has no positives; excluded from sensitivity");
        }
        if (tn + fp > 0) {
            spec.add(tn, tn + fp);
        } else {
            out.warnings.push_back("class " + std::to_string(c) + " has no negatives; excluded from specificity");
        }
    }
    out.accuracy = acc.value();
    out.sensitivity = sens.value();
    out.specificity = spec.value();
    return out;
}

void write_metrics_row(std::ostream& os, const std::string& run_id, const std::string& split, const Metrics& m) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f\n", m.accuracy, m.sensitivity, m.specificity);
    os << run_id << ',' << split << buf;
}

}  // namespace rfrl
