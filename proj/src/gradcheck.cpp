#include "rfrl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rfrl/layers.hpp"
#include "rfrl/losses.hpp"
#include "rfrl/model.hpp"
#include "rfrl/ops.hpp"

namespace rfrl {

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, double h) {
    if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
    Tensor<T> grad(x.shape());
    Tensor<T> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T orig = probe[i];
        probe[i] = static_cast<T>(orig + h);
        const T fp = f(probe);
        probe[i] = static_cast<T>(orig - h);
        const T fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericsError("finite_diff_grad: non-finite evaluation at element " + std::to_string(i));
        }
        grad[i] = static_cast<T>((static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * h));
    }
    return grad;
}

template Tensor<float> finite_diff_grad<float>(const std::function<float(const Tensor<float>&)>&,
                                               const Tensor<float>&, double);
template Tensor<double> finite_diff_grad<double>(const std::function<double(const Tensor<double>&)>&,
                                                 const Tensor<double>&, double);

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

Var<double> random_projection(const Var<double>& y, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> w(y.shape());
    for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
    return ops::sum(ops::mul(y, y.tape().constant(std::move(w))));
}

namespace {

using D = double;
using Inputs = std::vector<Tensor<D>>;
using Built = std::pair<Var<D>, std::vector<Var<D>>>;

Tensor<D> uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<D> t(std::move(s));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

/// Values bounded away from zero so relu/abs kinks sit further than h.
Tensor<D> off_zero(Shape s, Rng& rng) {
    Tensor<D> t(std::move(s));
    for (auto& v : t.data()) {
        const double mag = rng.uniform(0.05, 1.0);
        v = rng.bernoulli(0.5) ? mag : -mag;
    }
    return t;
}

std::vector<Var<D>> leaves(Tape<D>& tape, const Inputs& in) {
    std::vector<Var<D>> out;
    for (const auto& t : in) out.push_back(tape.leaf(t, true));
    return out;
}

/// Case whose inputs all become requires-grad leaves.
GradcheckCase simple(std::string op, std::function<Inputs(Rng&)> make,
                     std::function<Var<D>(const std::vector<Var<D>>&)> body) {
    return {std::move(op), std::move(make), [body](Tape<D>& tape, const Inputs& in) -> Built {
                auto vs = leaves(tape, in);
                return {random_projection(body(vs), 0x5EED), vs};
            }};
}

/// Sign pattern of every relu/abs input on the tape.
std::vector<signed char> kink_signature(const Tape<D>& tape) {
    std::vector<signed char> sig;
    for (NodeId id = 0; id < tape.size(); ++id) {
        const std::string& op = tape.op_name(id);
        if (op != "relu" && op != "abs") continue;
        for (D v : tape.value(tape.inputs(id).at(0)).data()) sig.push_back(static_cast<signed char>((v > 0) - (v < 0)));
    }
    return sig;
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.in_channels = 1;
    cfg.height = 8;
    cfg.width = 8;
    cfg.n_stages = 2;
    cfg.stem_channels = 2;
    cfg.stage_channels = {3, 4};
    cfg.num_classes = 3;
    return cfg;
}

GradcheckCase model_case() {
    const ModelConfig cfg = tiny_model_config();
    const std::size_t batch = 2;
    auto make = [cfg, batch](Rng& rng) {
        RfrlModel<D> m = build_model<D>(cfg, rng.next_u64());
        Inputs in;
        m.visit([&](const std::string& name, const Tensor<D>& t) {
            if (name.ends_with(".bias")) {
                in.push_back(uniform(t.shape(), rng, -0.1, 0.1));
            } else {
                in.push_back(t);
            }
        });
        in.push_back(uniform({batch, cfg.in_channels, cfg.height, cfg.width}, rng, 0.05, 0.95));
        Tensor<D> y({batch, cfg.num_classes});
        for (std::size_t b = 0; b < batch; ++b) y[b * cfg.num_classes + rng.bounded(cfg.num_classes)] = 1.0;
        in.push_back(y);
        return in;
    };
    auto build = [cfg](Tape<D>& tape, const Inputs& in) -> Built {
        RfrlModel<D> m = build_model<D>(cfg, 0);
        std::vector<std::string> names;
        std::size_t k = 0;
        m.visit([&](const std::string& name, Tensor<D>& t) {
            t = in.at(k++);
            names.push_back(name);
        });
        ForwardTaps<D> taps = forward(m, tape, in.at(k));
        LossReport<D> rep = total_loss(taps, tape.constant(in.at(k + 1)), LossSwitches{});
        std::vector<Var<D>> vars;
        for (const auto& name : names) {
            auto it = std::find_if(taps.params.begin(), taps.params.end(),
                                   [&](const auto& p) { return p.first == name; });
            vars.push_back(it == taps.params.end() ? Var<D>{} : it->second);
        }
        vars.emplace_back();  // input image: constant
        vars.emplace_back();  // labels: constant
        return {rep.total, vars};
    };
    return {"rfrl_model", make, build};
}

}  // namespace

std::vector<GradcheckCase> default_gradcheck_cases() {
    std::vector<GradcheckCase> cases;
    const Shape s{2, 3, 4};
    auto pair_of = [s](Rng& r) { return Inputs{uniform(s, r), uniform(s, r)}; };

    cases.push_back(simple("add", pair_of, [](const auto& v) { return ops::add(v[0], v[1]); }));
    cases.push_back(simple("sub", pair_of, [](const auto& v) { return ops::sub(v[0], v[1]); }));
    cases.push_back(simple("mul", pair_of, [](const auto& v) { return ops::mul(v[0], v[1]); }));
    cases.push_back(simple(
        "add_n", [s](Rng& r) { return Inputs{uniform(s, r), uniform(s, r), uniform(s, r)}; },
        [](const auto& v) { return ops::add_n<D>(std::span<const Var<D>>(v)); }));
    cases.push_back(simple(
        "scale", [s](Rng& r) { return Inputs{uniform(s, r)}; }, [](const auto& v) { return ops::scale(v[0], -1.7); }));
    cases.push_back(simple(
        "matmul", [](Rng& r) { return Inputs{uniform({3, 4}, r), uniform({4, 5}, r)}; },
        [](const auto& v) { return ops::matmul(v[0], v[1]); }));
    cases.push_back(simple(
        "sum", [s](Rng& r) { return Inputs{uniform(s, r)}; }, [](const auto& v) { return ops::sum(v[0]); }));
    cases.push_back(simple(
        "mean", [s](Rng& r) { return Inputs{uniform(s, r)}; }, [](const auto& v) { return ops::mean(v[0]); }));
    cases.push_back(simple(
        "reshape", [s](Rng& r) { return Inputs{uniform(s, r)}; },
        [](const auto& v) { return ops::reshape(v[0], Shape{4, 6}); }));
    cases.push_back(simple(
        "relu", [s](Rng& r) { return Inputs{off_zero(s, r)}; }, [](const auto& v) { return ops::relu(v[0]); }));
    cases.push_back(simple(
        "sigmoid", [s](Rng& r) { return Inputs{uniform(s, r, -4.0, 4.0)}; },
        [](const auto& v) { return ops::sigmoid(v[0]); }));
    cases.push_back(simple(
        "softmax", [](Rng& r) { return Inputs{uniform({4, 5}, r, -3.0, 3.0)}; },
        [](const auto& v) { return ops::softmax(v[0]); }));
    cases.push_back(simple(
        "clamped_log", [s](Rng& r) { return Inputs{uniform(s, r, 0.05, 0.95)}; },
        [](const auto& v) { return ops::clamped_log(v[0], 1e-7, 1.0); }));
    cases.push_back(simple(
        "abs", [s](Rng& r) { return Inputs{off_zero(s, r)}; }, [](const auto& v) { return ops::abs(v[0]); }));
    cases.push_back(simple(
        "sqrt", [s](Rng& r) { return Inputs{uniform(s, r, 0.2, 2.0)}; },
        [](const auto& v) { return ops::sqrt(v[0]); }));

    // Layers at the largest shapes the suite allows (4x4x8x8).
    cases.push_back(simple(
        "conv2d",
        [](Rng& r) {
            return Inputs{uniform({2, 3, 8, 8}, r), uniform({4, 3, 3, 3}, r), uniform({4}, r),
                          uniform({4, 3, 1, 1}, r), uniform({4}, r)};
        },
        [](const auto& v) {
            // 3x3 at stride 1 and 2 plus 1x1 at stride 1, summed through a projection each.
            Var<D> a = random_projection(layers::conv2d(v[0], v[1], v[2], 1), 11);
            Var<D> b = random_projection(layers::conv2d(v[0], v[1], v[2], 2), 12);
            Var<D> c = random_projection(layers::conv2d(v[0], v[3], v[4], 1), 13);
            return ops::add(ops::add(a, b), c);
        }));
    cases.push_back(simple(
        "conv2d_transpose",
        [](Rng& r) { return Inputs{uniform({2, 4, 4, 4}, r), uniform({4, 3, 3, 3}, r), uniform({3}, r)}; },
        [](const auto& v) { return layers::conv2d_transpose(v[0], v[1], v[2]); }));
    cases.push_back(simple(
        "global_avg_pool", [](Rng& r) { return Inputs{uniform({2, 4, 8, 8}, r)}; },
        [](const auto& v) { return layers::global_avg_pool(v[0]); }));
    cases.push_back(simple(
        "dense", [](Rng& r) { return Inputs{uniform({3, 6}, r), uniform({6, 4}, r), uniform({4}, r)}; },
        [](const auto& v) { return layers::dense(v[0], v[1], v[2]); }));

    // Losses.
    cases.push_back({"cross_entropy",
                     [](Rng& r) {
                         Tensor<D> y({4, 3});
                         for (std::size_t b = 0; b < 4; ++b) y[b * 3 + r.bounded(3)] = 1.0;
                         return Inputs{uniform({4, 3}, r, -2.0, 2.0), y};
                     },
                     [](Tape<D>& tape, const Inputs& in) -> Built {
                         Var<D> logits = tape.leaf(in[0], true);
                         Var<D> loss = losses::cross_entropy(ops::softmax(logits), tape.constant(in[1]));
                         return {loss, {logits, Var<D>{}}};
                     }});
    cases.push_back({"mse", pair_of, [](Tape<D>& tape, const Inputs& in) -> Built {
                         auto v = leaves(tape, in);
                         return {losses::mse(v[0], v[1]), v};
                     }});
    for (FrsNorm norm : {FrsNorm::squared_mean, FrsNorm::abs_mean, FrsNorm::rms}) {
        cases.push_back({"frs_loss[" + to_string(norm) + "]",
                         [](Rng& r) {
                             // Three stage pairs at shrinking resolution.
                             return Inputs{off_zero({2, 2, 8, 8}, r), off_zero({2, 3, 4, 4}, r),
                                           off_zero({2, 4, 2, 2}, r), off_zero({2, 4, 2, 2}, r),
                                           off_zero({2, 3, 4, 4}, r), off_zero({2, 2, 8, 8}, r)};
                         },
                         [norm](Tape<D>& tape, const Inputs& in) -> Built {
                             auto v = leaves(tape, in);
                             std::vector<Var<D>> enc(v.begin(), v.begin() + 3), dec(v.begin() + 3, v.end());
                             return {losses::frs_loss<D>(enc, dec, norm), v};
                         }});
    }
    cases.push_back(model_case());
    return cases;
}

GradcheckResult run_gradcheck_case(const GradcheckCase& c, const GradcheckOptions& opts) {
    GradcheckResult res;
    res.op = c.op;
    try {
        for (std::size_t seed = 0; seed < opts.seeds; ++seed) {
            Rng rng = Rng::derive(opts.base_seed, seed);
            Inputs inputs = c.make_inputs(rng);

            Tape<D> tape;
            auto [loss, vars] = c.build(tape, inputs);
            if (vars.size() != inputs.size()) throw ContractError(c.op + ": build returned wrong number of vars");
            const Gradients<D> grads = tape.backward(loss);
            const auto base_sig = kink_signature(tape);

            auto eval = [&](const Inputs& in, std::vector<signed char>* sig) {
                Tape<D> t;
                auto [l, unused] = c.build(t, in);
                if (sig) *sig = kink_signature(t);
                return l.value().item();
            };

            for (std::size_t k = 0; k < inputs.size(); ++k) {
                if (!vars[k].valid()) continue;
                const Tensor<D>& analytic = grads.at(vars[k]);
                Inputs probe = inputs;
                for (std::size_t i = 0; i < probe[k].size(); ++i) {
                    const D orig = probe[k][i];
                    std::vector<signed char> sig_p, sig_m;
                    probe[k][i] = orig + opts.h;
                    const D fp = eval(probe, &sig_p);
                    probe[k][i] = orig - opts.h;
                    const D fm = eval(probe, &sig_m);
                    probe[k][i] = orig;
                    if (!std::isfinite(fp) || !std::isfinite(fm)) {
                        throw NumericsError(c.op + ": non-finite evaluation");
                    }
                    if (sig_p != base_sig || sig_m != base_sig) {
                        ++res.skipped;
                        continue;
                    }
                    const double numeric = (fp - fm) / (2.0 * opts.h);
                    res.max_rel_err = std::max(res.max_rel_err, relative_error(analytic[i], numeric));
                    ++res.checked;
                }
            }
        }
        res.passed = res.checked > 0 && res.max_rel_err <= opts.tolerance;
    } catch (const std::exception& e) {
        res.error = e.what();
        res.passed = false;
    }
    return res;
}

std::vector<GradcheckResult> run_gradcheck(const std::vector<GradcheckCase>& cases, const GradcheckOptions& opts) {
    std::vector<GradcheckResult> out;
    out.reserve(cases.size());
    for (const auto& c : cases) out.push_back(run_gradcheck_case(c, opts));
    return out;
}

}  // namespace rfrl
