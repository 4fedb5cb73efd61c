#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "focusnas/ops.hpp"
#include "focusnas/rng.hpp"
#include "focusnas/tape.hpp"

namespace focusnas::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

/// Relative error with a small floor so entries whose true gradient is ~0
/// are judged on absolute error.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Worst relative error between reverse-mode gradients of `fn` with respect
/// to every entry of `inputs` and central differences with step `h`.
inline double gradcheck(const ScalarFn& fn, std::vector<Tensor> inputs, double h = 1e-5) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
        Var loss = fn(tape, vars);
        tape.backward(loss);
        for (Var v : vars) analytic.push_back(tape.grad(v));
    }
    auto eval = [&] {
        Tape tape(false);
        std::vector<Var> vars;
        for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
        return fn(tape, vars).value()[0];
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double up = eval();
            inputs[k][i] = orig - h;
            const double down = eval();
            inputs[k][i] = orig;
            worst = std::max(worst, rel_error(analytic[k][i], (up - down) / (2 * h)));
        }
    }
    return worst;
}

/// Projects a tensor-valued op to a scalar with fixed random weights so
/// every output element contributes a distinct gradient. The weights depend
/// only on `seed`, so repeated evaluations see the same projection.
inline Var weighted_sum(Tape& tape, Var y, std::uint64_t seed = 99) {
    Rng rng(seed);
    Tensor w = random_tensor(y.shape(), rng);
    Var wv = tape.constant(std::move(w));
    return ops::sum(ops::mul(y, wv));
}

}  // namespace focusnas::testing
