#pragma once

#include <string>
#include <vector>

#include "cvit/fields.hpp"
#include "cvit/grad_check.hpp"
#include "cvit/operators/fno.hpp"
#include "cvit/rng.hpp"

namespace cvit::verify {

struct NamedCheck {
    std::string name;
    GradCheckReport report;
};

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0)
{
    Tensor<double> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = scale * rng.normal();
    return t;
}

/// Finite-difference checks of every differentiable primitive and of
/// grid_interpolate, `trials` random inputs each. Each program contracts
/// the primitive's output with a fixed random tensor so every output
/// coordinate contributes to the gradient. Reports the worst trial per
/// primitive.
inline std::vector<NamedCheck> gradient_suite(std::size_t trials = 10, std::uint64_t seed = 0, double h = 1e-5,
                                              double tol = 1e-4)
{
    using V = Var<double>;
    using Args = std::span<const V>;
    struct Case {
        std::string name;
        std::vector<Shape> shapes;
        std::function<V(Tape<double>&, Args)> op;
    };
    const GridGeometry grid{5, 4, 20.0};
    const std::vector<Case> cases{
        {"add", {{3, 4}, {4}}, [](Tape<double>&, Args a) { return add(a[0], a[1]); }},
        {"sub", {{2, 3, 4}, {3, 1}}, [](Tape<double>&, Args a) { return sub(a[0], a[1]); }},
        {"mul", {{3, 4}, {3, 4}}, [](Tape<double>&, Args a) { return mul(a[0], a[1]); }},
        {"mul_broadcast", {{2, 3, 4}, {1, 4}}, [](Tape<double>&, Args a) { return mul(a[0], a[1]); }},
        {"scale", {{3, 4}}, [](Tape<double>&, Args a) { return scale(a[0], 1.7); }},
        {"reshape", {{3, 4}}, [](Tape<double>&, Args a) { return reshape(a[0], {2, 6}); }},
        {"permute", {{2, 3, 4}}, [](Tape<double>&, Args a) { return permute(a[0], {2, 0, 1}); }},
        {"transpose", {{2, 3, 4}}, [](Tape<double>&, Args a) { return transpose(a[0]); }},
        {"broadcast_to", {{1, 4}}, [](Tape<double>&, Args a) { return broadcast_to(a[0], {3, 4}); }},
        {"concat_last", {{2, 3}, {2, 2}}, [](Tape<double>&, Args a) { return concat_last<double>({a[0], a[1]}); }},
        {"matmul", {{3, 4}, {4, 5}}, [](Tape<double>&, Args a) { return matmul(a[0], a[1]); }},
        {"matmul_batched", {{2, 3, 4}, {2, 4, 2}}, [](Tape<double>&, Args a) { return matmul(a[0], a[1]); }},
        {"matmul_shared_rhs", {{2, 3, 4}, {4, 2}}, [](Tape<double>&, Args a) { return matmul(a[0], a[1]); }},
        {"linear", {{3, 4}, {4, 2}, {2}}, [](Tape<double>&, Args a) { return linear(a[0], a[1], a[2]); }},
        {"softmax", {{3, 5}}, [](Tape<double>&, Args a) { return softmax(a[0], -1); }},
        {"softmax_axis0", {{3, 5}}, [](Tape<double>&, Args a) { return softmax(a[0], 0); }},
        {"layer_norm", {{3, 6}, {6}, {6}}, [](Tape<double>&, Args a) { return layer_norm(a[0], a[1], a[2]); }},
        {"gelu", {{3, 4}}, [](Tape<double>&, Args a) { return gelu(a[0]); }},
        {"sum", {{3, 4}}, [](Tape<double>&, Args a) { return sum(a[0]); }},
        {"mean", {{3, 4}}, [](Tape<double>&, Args a) { return mean(a[0]); }},
        {"grid_interpolate", {{5, 4, 3}}, [grid, seed](Tape<double>&, Args a) {
             Rng qr(seed ^ 0x5eedULL);
             Tensor<double> q({6, 2});
             for (auto& v : q.mutable_data()) v = qr.uniform();
             return grid_interpolate(a[0], q, grid);
         }},
    };

    std::vector<NamedCheck> out;
    const Rng root(seed);
    for (std::size_t c = 0; c < cases.size(); ++c) {
        NamedCheck worst{cases[c].name, {true, 0, 0, 0, 0, 0}};
        for (std::size_t t = 0; t < trials; ++t) {
            Rng rng = root.substream(c).substream(t);
            std::vector<Tensor<double>> inputs;
            for (const auto& s : cases[c].shapes) inputs.push_back(random_tensor(s, rng));
            // contraction weights are sized from a dry run of the op
            Tape<double> probe;
            std::vector<V> pv;
            for (const auto& x : inputs) pv.push_back(probe.constant(x));
            const Shape out_shape = cases[c].op(probe, pv).shape();
            const auto weights = random_tensor(out_shape, rng);
            const auto& op = cases[c].op;
            auto program = [&](Tape<double>& tape, Args a) { return sum(mul(op(tape, a), tape.constant(weights))); };
            const auto r = grad_check(program, inputs, h, tol);
            const bool passed = worst.report.passed && r.passed;
            if (r.max_rel_error >= worst.report.max_rel_error) worst.report = r;
            worst.report.passed = passed;
        }
        out.push_back(worst);
    }
    return out;
}

/// Max over `trials` random (u, K, W) of the grid vs continuous FNO
/// discrepancy. u has standard normal entries on `channels` channels.
inline double fno_equivalence(std::size_t grid, std::size_t modes, std::size_t trials, std::uint64_t seed,
                              std::size_t channels = 2)
{
    double worst = 0;
    const Rng root(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng = root.substream(t);
        auto layer = FnoLayer::random(grid, modes, channels, rng);
        auto u = random_tensor({grid, channels}, rng);
        worst = std::max(worst, fno_grid_discrepancy(layer, u));
    }
    return worst;
}

}  // namespace cvit::verify
