#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "cvit/nn.hpp"
#include "cvit/operators/fno.hpp"

namespace cvit {

/// Kernel kappa(x, y, u(x)) returning a flattened d_s x d_u matrix (row-major).
using GnoKernel = std::function<std::vector<double>(std::span<const double> x, std::span<const double> y,
                                                    std::span<const double> ux)>;

/// Graph neural operator layer on a fixed node set:
/// s(y) = sigma(W u(y) + 1/|N(y)| sum_{x in N(y)} kappa(x, y, u(x)) u(x)),
/// with N(y) the nodes within `radius` of y (y itself included).
struct GnoLayer {
    std::size_t in_dim = 1;   // d_u
    std::size_t out_dim = 1;  // d_s
    Tensor<double> w;         // [d_s, d_u]
    GnoKernel kernel;
    double radius = 0.1;
    Activation activation = Activation::gelu;
};

/// Kernel network mapping concat(x, y, u(x)) to d_s * d_u entries.
struct GnoKernelMlp {
    Mlp mlp;
    ParamStore<double> params;

    static GnoKernelMlp create(std::size_t coord_dim, std::size_t d_u, std::size_t d_s, std::size_t hidden, Rng& rng)
    {
        GnoKernelMlp k{Mlp{"kernel", {2 * coord_dim + d_u, hidden, d_s * d_u}}, {}};
        k.mlp.init(k.params, rng);
        return k;
    }

    [[nodiscard]] GnoKernel as_kernel() const
    {
        return [self = *this](std::span<const double> x, std::span<const double> y, std::span<const double> ux) {
            std::vector<double> in(x.begin(), x.end());
            in.insert(in.end(), y.begin(), y.end());
            in.insert(in.end(), ux.begin(), ux.end());
            Tape<double> tape;
            Bound<double> p(tape, self.params, false);
            const auto n = in.size();
            auto out = self.mlp(p, tape.constant(Tensor<double>({1, n}, std::move(in))));
            return std::vector<double>(out.value().data().begin(), out.value().data().end());
        };
    }
};

/// Nodes within the radius of node `query` (inclusive), in node order.
inline std::vector<std::size_t> gno_neighborhood(const Tensor<double>& coords, std::size_t query, double radius)
{
    const std::size_t m = coords.dim(0), dim = coords.dim(1);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m; ++i) {
        double d2 = 0;
        for (std::size_t a = 0; a < dim; ++a) {
            const double d = coords.at(i, a) - coords.at(query, a);
            d2 += d * d;
        }
        if (i == query || d2 <= radius * radius) out.push_back(i);
    }
    return out;
}

/// Evaluates the layer at grid node `query`. coords: [M, dim], u: [M, d_u].
inline std::vector<double> gno_layer(const GnoLayer& layer, const Tensor<double>& coords, const Tensor<double>& u,
                                     std::size_t query)
{
    if (coords.rank() != 2 || u.rank() != 2 || coords.dim(0) != u.dim(0) || u.dim(1) != layer.in_dim) {
        throw DimensionError("gno_layer: coords " + shape_str(coords.shape()) + " / values " + shape_str(u.shape()) +
                             " inconsistent with d_u=" + std::to_string(layer.in_dim));
    }
    if (layer.w.shape() != Shape{layer.out_dim, layer.in_dim}) throw DimensionError("gno_layer: W must be d_s x d_u");
    if (query >= coords.dim(0)) throw DimensionError("gno_layer: query node out of range");
    const std::size_t du = layer.in_dim, ds = layer.out_dim;
    auto row = [](const Tensor<double>& t, std::size_t i) {
        return std::span<const double>(t.data().data() + i * t.dim(1), t.dim(1));
    };

    const auto hood = gno_neighborhood(coords, query, layer.radius);
    std::vector<double> message(ds, 0.0);
    for (auto x : hood) {
        const auto kappa = layer.kernel(row(coords, x), row(coords, query), row(u, x));
        if (kappa.size() != ds * du) {
            throw DimensionError("gno kernel returned " + std::to_string(kappa.size()) + " entries, expected " +
                                 std::to_string(ds * du));
        }
        for (std::size_t a = 0; a < ds; ++a) {
            for (std::size_t b = 0; b < du; ++b) message[a] += kappa[a * du + b] * u.at(x, b);
        }
    }
    std::vector<double> out(ds);
    for (std::size_t a = 0; a < ds; ++a) {
        double local = 0;
        for (std::size_t b = 0; b < du; ++b) local += layer.w.at(a, b) * u.at(query, b);
        out[a] = activate(layer.activation, local + message[a] / static_cast<double>(hood.size()));
    }
    return out;
}

}  // namespace cvit
