#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "cvit/autodiff.hpp"

namespace cvit {

struct GradCheckReport {
    bool passed = false;
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Scalar program over one or more differentiable inputs.
using GradProgram = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

/// Compares reverse-mode gradients with central differences, coordinate by
/// coordinate. Error per coordinate is |a - n| / max(1, |a|, |n|), i.e.
/// relative for O(1)+ gradients and absolute below that.
inline GradCheckReport grad_check(const GradProgram& f, const std::vector<Tensor<double>>& inputs, double h = 1e-5,
                                  double tol = 1e-4)
{
    auto evaluate = [&](const std::vector<Tensor<double>>& xs) {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (const auto& x : xs) vars.push_back(tape.leaf(x, false));
        const double v = f(tape, vars).value()[0];
        if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value at perturbed point");
        return v;
    };

    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(tape.leaf(x, true));
    const auto out = f(tape, vars);
    if (out.value().size() != 1) throw DimensionError("grad_check requires a scalar program");
    tape.backward(out);

    GradCheckReport report;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto analytic = tape.grad(vars[k]);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            auto plus = inputs;
            auto minus = inputs;
            plus[k][i] += h;
            minus[k][i] -= h;
            const double numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * h);
            const double a = analytic[i];
            const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (err >= report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_input = k;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

inline GradCheckReport grad_check(const std::function<Var<double>(Tape<double>&, const Var<double>&)>& f,
                                  const Tensor<double>& x, double h = 1e-5, double tol = 1e-4)
{
    return grad_check([&](Tape<double>& t, std::span<const Var<double>> v) { return f(t, v[0]); },
                      std::vector<Tensor<double>>{x}, h, tol);
}

}  // namespace cvit
