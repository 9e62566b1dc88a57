#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "cvit/autodiff.hpp"

namespace cvit {

// ---------------------------------------------------------------------------
// Fourier positional encoding

/// Integer wavenumbers k_1..k_n over a query space of fixed dimension.
struct FourierEncoding {
    std::vector<std::vector<int>> wavenumbers;

    [[nodiscard]] std::size_t length() const noexcept { return 2 * wavenumbers.size(); }

    /// k_j = j for j = first..first+n-1 on a one-dimensional domain.
    static FourierEncoding first_modes_1d(std::size_t n, int first = 1)
    {
        FourierEncoding enc;
        for (std::size_t j = 0; j < n; ++j) enc.wavenumbers.push_back({first + static_cast<int>(j)});
        return enc;
    }
};

/// [cos(2 pi <k_1,y>), sin(2 pi <k_1,y>), ..., cos(2 pi <k_n,y>), sin(2 pi <k_n,y>)]
inline std::vector<double> fourier_encode(std::span<const double> y, const FourierEncoding& enc)
{
    std::vector<double> out;
    out.reserve(enc.length());
    for (const auto& k : enc.wavenumbers) {
        if (k.size() != y.size()) {
            throw DimensionError("fourier_encode: query dim " + std::to_string(y.size()) + " vs wavenumber dim " +
                                 std::to_string(k.size()));
        }
        double phase = 0;
        for (std::size_t i = 0; i < y.size(); ++i) phase += k[i] * y[i];
        // Reduce the phase to one period first: exact for integer k and
        // keeps cos/sin arguments small.
        phase -= std::floor(phase);
        out.push_back(std::cos(2 * std::numbers::pi * phase));
        out.push_back(std::sin(2 * std::numbers::pi * phase));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Latent grid and Nadaraya-Watson interpolation

/// Geometry of a uniform Nx x Ny grid over [0,1]^2 (both endpoints
/// included) with locality parameter epsilon.
struct GridGeometry {
    std::size_t nx = 1;
    std::size_t ny = 1;
    double epsilon = 1e5;

    [[nodiscard]] static double coord(std::size_t i, std::size_t n)
    {
        return n <= 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    }

    [[nodiscard]] std::size_t nodes() const noexcept { return nx * ny; }

    void validate() const
    {
        if (nx == 0 || ny == 0) throw ConfigError("latent grid must have at least one node per axis");
        if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ConfigError("latent grid epsilon must be finite and >= 0");
    }
};

/// Nonzero interpolation weights of one query, as (node index, weight).
/// Node index is i * ny + j for grid node (i, j).
struct InterpWeights {
    std::vector<std::size_t> nodes;
    std::vector<double> weights;
};

/// w_ij = exp(-eps |y - y_ij|^2) / sum exp(-eps |y - y_ij|^2). The squared
/// distance separates over the two axes, so the weights are the outer
/// product of two 1D softmaxes, each computed with max subtraction. Weights
/// that underflow to zero are dropped. Queries outside [0,1]^2 are clamped.
inline InterpWeights nadaraya_watson_weights(double y1, double y2, const GridGeometry& g)
{
    if (!std::isfinite(y1) || !std::isfinite(y2)) throw NumericError("grid_interpolate: non-finite query");
    y1 = std::clamp(y1, 0.0, 1.0);
    y2 = std::clamp(y2, 0.0, 1.0);
    auto axis = [&](double y, std::size_t n) {
        std::vector<double> e(n);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double d = y - GridGeometry::coord(i, n);
            e[i] = d * d;
            best = std::min(best, e[i]);
        }
        double total = 0;
        for (auto& v : e) {
            v = std::exp(-g.epsilon * (v - best));
            total += v;
        }
        for (auto& v : e) v /= total;
        return e;
    };
    const auto wx = axis(y1, g.nx);
    const auto wy = axis(y2, g.ny);
    InterpWeights out;
    for (std::size_t i = 0; i < g.nx; ++i) {
        if (wx[i] == 0) continue;
        for (std::size_t j = 0; j < g.ny; ++j) {
            const double w = wx[i] * wy[j];
            if (w == 0) continue;
            out.nodes.push_back(i * g.ny + j);
            out.weights.push_back(w);
        }
    }
    return out;
}

/// Interpolates grid features [Nx, Ny, C] at queries [Q, 2]; returns [Q, C].
/// Differentiable with respect to the features.
template <class T>
Var<T> grid_interpolate(const Var<T>& features, const Tensor<T>& queries, const GridGeometry& g)
{
    g.validate();
    const auto& fv = features.value();
    if (fv.rank() != 3 || fv.dim(0) != g.nx || fv.dim(1) != g.ny) {
        throw DimensionError("grid features " + shape_str(fv.shape()) + " do not match grid " + std::to_string(g.nx) +
                             "x" + std::to_string(g.ny));
    }
    if (queries.rank() != 2 || queries.dim(1) != 2) {
        throw DimensionError("grid_interpolate queries must be [Q,2], got " + shape_str(queries.shape()));
    }
    const std::size_t q = queries.dim(0), c = fv.dim(2);
    std::vector<InterpWeights> weights(q);
    Tensor<T> out(Shape{q, c});
    {
        auto od = out.mutable_data();
        auto fd = fv.data();
        for (std::size_t r = 0; r < q; ++r) {
            weights[r] = nadaraya_watson_weights(static_cast<double>(queries.at(r, 0)),
                                                 static_cast<double>(queries.at(r, 1)), g);
            T* row = od.data() + r * c;
            const auto& w = weights[r];
            for (std::size_t e = 0; e < w.nodes.size(); ++e) {
                const T we = static_cast<T>(w.weights[e]);
                const T* src = fd.data() + w.nodes[e] * c;
                for (std::size_t j = 0; j < c; ++j) row[j] += we * src[j];
            }
        }
    }
    const auto id = features.id();
    const Shape fshape = fv.shape();
    return features.tape().record("grid_interpolate", {id}, std::move(out), [=](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T> gf(fshape);
        auto gfd = gf.mutable_data();
        auto gd = grad.data();
        for (std::size_t r = 0; r < q; ++r) {
            const auto& w = weights[r];
            for (std::size_t e = 0; e < w.nodes.size(); ++e) {
                const T we = static_cast<T>(w.weights[e]);
                T* dst = gfd.data() + w.nodes[e] * c;
                for (std::size_t j = 0; j < c; ++j) dst[j] += we * gd[r * c + j];
            }
        }
        t.accumulate(id, gf);
    });
}

/// Trainable grid features with their geometry.
template <class T>
struct LatentGrid {
    GridGeometry geometry;
    Tensor<T> features;  // [nx, ny, C]

    [[nodiscard]] std::size_t channels() const { return features.rank() == 3 ? features.dim(2) : 0; }

    /// Interpolated feature vector at a single query point.
    [[nodiscard]] std::vector<T> interpolate(double y1, double y2) const
    {
        Tape<T> tape;
        auto f = tape.constant(features);
        auto out = grid_interpolate(f, Tensor<T>::from({1, 2}, {static_cast<T>(y1), static_cast<T>(y2)}), geometry);
        return {out.value().data().begin(), out.value().data().end()};
    }
};

// ---------------------------------------------------------------------------
// Conditioned neural field

enum class ConditioningKind { global, local, both };

/// s(y) = base_field(y, z) with z = conditioning(u). The latent code is
/// computed once per input function and each query is evaluated on its own,
/// so outputs at one query never depend on which other queries are asked.
template <class Input, class Latent, class Query, class Output>
struct ConditionedField {
    std::function<Latent(const Input&)> conditioning;
    std::function<Output(const Query&, const Latent&)> base_field;
    ConditioningKind kind = ConditioningKind::global;

    [[nodiscard]] Output operator()(const Input& u, const Query& y) const { return base_field(y, conditioning(u)); }

    [[nodiscard]] std::vector<Output> evaluate(const Input& u, std::span<const Query> queries) const
    {
        const Latent z = conditioning(u);
        std::vector<Output> out;
        out.reserve(queries.size());
        for (const auto& y : queries) out.push_back(base_field(y, z));
        return out;
    }
};

}  // namespace cvit
