#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rfrl/rng.hpp"
#include "rfrl/tape.hpp"

namespace rfrl {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element.
/// Raises NumericsError if any evaluation of f is not finite.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, double h);

/// |a - n| / max(|a|, |n|, floor). The floor keeps rounding noise on
/// near-zero gradients from dominating.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// One entry of the finite-difference suite, always evaluated in 64-bit.
struct GradcheckCase {
    std::string op;
    /// Random inputs for one seed.
    std::function<std::vector<Tensor<double>>(Rng&)> make_inputs;
    /// Builds the scalar on a fresh tape. Returns the scalar and one Var per
    /// input whose gradient stands for that input.
    std::function<std::pair<Var<double>, std::vector<Var<double>>>(Tape<double>&, const std::vector<Tensor<double>>&)>
        build;
};

struct GradcheckOptions {
    std::size_t seeds = 20;
    std::uint64_t base_seed = 0x6C0FFEE;
    double h = 1e-5;
    double tolerance = 1e-4;
};

struct GradcheckResult {
    std::string op;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    /// Elements whose +-h evaluations land on different sides of a relu/abs kink.
    std::size_t skipped = 0;
    bool passed = false;
    std::string error;  // set when the case threw
};

/// Every op, layer, loss and the full model wiring, one entry per op name.
std::vector<GradcheckCase> default_gradcheck_cases();

GradcheckResult run_gradcheck_case(const GradcheckCase& c, const GradcheckOptions& opts);
std::vector<GradcheckResult> run_gradcheck(const std::vector<GradcheckCase>& cases, const GradcheckOptions& opts);

/// Random linear functional sum(w * y) turning any output into a scalar
/// whose gradient exercises the full Jacobian.
Var<double> random_projection(const Var<double>& y, std::uint64_t seed);

}  // namespace rfrl
