#pragma once

#include <vector>

#include "cvit/fields.hpp"
#include "cvit/nn.hpp"

namespace cvit {

/// DeepONet: s(y) = <E(u), t(y)> with branch E over flattened input samples
/// and trunk t over query coordinates, both of width n.
struct DeepOnet {
    Mlp branch;  // m -> n
    Mlp trunk;   // dy -> n

    static DeepOnet make(std::size_t sensors, std::size_t query_dim, std::size_t width, std::size_t hidden,
                         std::size_t hidden_layers)
    {
        std::vector<std::size_t> b{sensors}, t{query_dim};
        for (std::size_t i = 0; i < hidden_layers; ++i) {
            b.push_back(hidden);
            t.push_back(hidden);
        }
        b.push_back(width);
        t.push_back(width);
        return {{"branch", b}, {"trunk", t}};
    }

    void validate() const
    {
        if (branch.widths.size() < 2 || trunk.widths.size() < 2 || branch.widths.back() != trunk.widths.back()) {
            throw ConfigError("DeepONet branch and trunk output widths must match");
        }
    }

    [[nodiscard]] std::size_t sensors() const { return branch.widths.front(); }
    [[nodiscard]] std::size_t query_dim() const { return trunk.widths.front(); }

    template <class T>
    void init(ParamStore<T>& store, Rng& rng) const
    {
        validate();
        branch.init(store, rng);
        trunk.init(store, rng);
    }

    /// Branch encoding E(u): [B, m] -> [B, n].
    template <class T>
    Var<T> encode(const Bound<T>& p, const Var<T>& u) const
    {
        if (u.value().rank() != 2 || u.dim(1) != sensors()) {
            throw DimensionError("DeepONet branch expects [B," + std::to_string(sensors()) + "], got " +
                                 shape_str(u.shape()));
        }
        return branch(p, u);
    }

    /// Decoder: <z, t(y)> for z [B, n] and queries [Q, dy] -> [B, Q].
    template <class T>
    Var<T> decode(const Bound<T>& p, const Var<T>& z, const Var<T>& y) const
    {
        if (y.value().rank() != 2 || y.dim(1) != query_dim()) {
            throw DimensionError("DeepONet trunk expects [Q," + std::to_string(query_dim()) + "], got " +
                                 shape_str(y.shape()));
        }
        if (z.value().rank() != 2 || z.dim(1) != trunk.widths.back()) {
            throw DimensionError("DeepONet latent width mismatch: " + shape_str(z.shape()));
        }
        return matmul(z, transpose(trunk(p, y)));
    }

    template <class T>
    Var<T> forward(const Bound<T>& p, const Var<T>& u, const Var<T>& y) const
    {
        return decode(p, encode(p, u), y);
    }
};

/// NoMaD: s(y) = f(y, E(u)), a nonlinear decoder over the concatenation of
/// the query with the input encoding.
struct Nomad {
    Mlp encoder;  // m -> n
    Mlp decoder;  // dy + n -> d_out
    std::size_t query_dim = 1;

    static Nomad make(std::size_t sensors, std::size_t query_dim, std::size_t latent, std::size_t out_dim,
                      std::size_t hidden, std::size_t hidden_layers)
    {
        std::vector<std::size_t> e{sensors}, d{query_dim + latent};
        for (std::size_t i = 0; i < hidden_layers; ++i) {
            e.push_back(hidden);
            d.push_back(hidden);
        }
        e.push_back(latent);
        d.push_back(out_dim);
        return {{"encoder", e}, {"decoder", d}, query_dim};
    }

    void validate() const
    {
        if (encoder.widths.size() < 2 || decoder.widths.size() < 2 ||
            decoder.widths.front() != query_dim + encoder.widths.back()) {
            throw ConfigError("NoMaD decoder input width must equal query dim + latent width");
        }
    }

    template <class T>
    void init(ParamStore<T>& store, Rng& rng) const
    {
        validate();
        encoder.init(store, rng);
        decoder.init(store, rng);
    }

    template <class T>
    Var<T> encode(const Bound<T>& p, const Var<T>& u) const
    {
        if (u.value().rank() != 2 || u.dim(1) != encoder.widths.front()) {
            throw DimensionError("NoMaD encoder expects [B," + std::to_string(encoder.widths.front()) + "], got " +
                                 shape_str(u.shape()));
        }
        return encoder(p, u);
    }

    /// z [B, n], queries [Q, dy] -> [B, Q, d_out].
    template <class T>
    Var<T> decode(const Bound<T>& p, const Var<T>& z, const Var<T>& y) const
    {
        if (y.value().rank() != 2 || y.dim(1) != query_dim) {
            throw DimensionError("NoMaD queries must be [Q," + std::to_string(query_dim) + "], got " +
                                 shape_str(y.shape()));
        }
        if (z.value().rank() != 2 || z.dim(1) != encoder.widths.back()) {
            throw DimensionError("NoMaD latent width mismatch: " + shape_str(z.shape()));
        }
        const std::size_t b = z.dim(0), q = y.dim(0);
        auto yy = broadcast_to(reshape(y, {1, q, query_dim}), {b, q, query_dim});
        auto zz = broadcast_to(reshape(z, {b, 1, z.dim(1)}), {b, q, z.dim(1)});
        return decoder(p, concat_last<T>({yy, zz}));
    }

    template <class T>
    Var<T> forward(const Bound<T>& p, const Var<T>& u, const Var<T>& y) const
    {
        return decode(p, encode(p, u), y);
    }
};

}  // namespace cvit
