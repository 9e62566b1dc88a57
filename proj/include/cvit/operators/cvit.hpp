#pragma once

#include <string>
#include <vector>

#include "cvit/fields.hpp"
#include "cvit/nn.hpp"

namespace cvit {

/// Continuous Vision Transformer configuration.
///
/// Inputs are T frames of H x W x D. Frames are cut into patch_h x patch_w
/// patches (square P x P for 2D data; 1 x P for 1D profiles stored with
/// H = 1), embedded to C, aggregated over time by a Perceiver cross-attention
/// with one latent query, and refined by L pre-norm self-attention blocks.
/// The base field interpolates trainable grid features at a query,
/// cross-attends to the encoder tokens through K blocks, and projects to
/// the output channels.
struct CvitSpec {
    std::size_t patch_h = 8;
    std::size_t patch_w = 8;
    std::size_t frames = 2;    // T
    std::size_t height = 96;   // H
    std::size_t width = 192;   // W
    std::size_t channels = 2;  // D
    std::size_t out_dim = 2;
    std::size_t embed = 384;   // C
    std::size_t depth = 5;     // L
    std::size_t decoder_depth = 1;  // K
    std::size_t heads = 6;
    std::size_t mlp_width = 384;
    std::size_t grid_nx = 96;
    std::size_t grid_ny = 192;
    std::size_t grid_dim = 512;
    double epsilon = 1e5;

    [[nodiscard]] std::size_t tokens_h() const { return height / patch_h; }
    [[nodiscard]] std::size_t tokens_w() const { return width / patch_w; }
    [[nodiscard]] std::size_t spatial_tokens() const { return tokens_h() * tokens_w(); }
    [[nodiscard]] std::size_t patch_dim() const { return patch_h * patch_w * channels; }
    [[nodiscard]] GridGeometry grid() const { return {grid_nx, grid_ny, epsilon}; }

    void validate() const
    {
        if (patch_h == 0 || patch_w == 0 || height % patch_h != 0 || width % patch_w != 0) {
            throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                              " is not divisible into " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                              " patches");
        }
        if (frames == 0 || channels == 0 || out_dim == 0 || embed == 0 || mlp_width == 0 || grid_dim == 0) {
            throw ConfigError("CViT dimensions must be positive");
        }
        if (heads == 0 || embed % heads != 0) {
            throw ConfigError("CViT embedding dim " + std::to_string(embed) + " is not divisible by " +
                              std::to_string(heads) + " heads");
        }
        grid().validate();
    }
};

/// Named encoder presets (layers, embed dim, MLP width, heads).
struct CvitPreset {
    std::size_t layers, embed, mlp_width, heads;
};

inline CvitPreset cvit_preset(const std::string& name)
{
    if (name == "S") return {5, 384, 384, 6};
    if (name == "B") return {10, 512, 512, 8};
    if (name == "L") return {15, 768, 1536, 12};
    if (name == "T") return {2, 64, 64, 4};  // desk-scale
    throw ConfigError("unknown CViT preset '" + name + "' (expected S, B, L or T)");
}

inline CvitSpec apply_preset(CvitSpec spec, const std::string& name)
{
    const auto p = cvit_preset(name);
    spec.depth = p.layers;
    spec.embed = p.embed;
    spec.mlp_width = p.mlp_width;
    spec.heads = p.heads;
    return spec;
}

/// Cross-attention block shared by the Perceiver aggregator and the base
/// field decoder: x' = x + MHA(LN(x), LN(kv), LN(kv)); out = x' + MLP(LN(x')).
struct CrossAttentionBlock {
    std::string name;
    std::size_t dim = 0;
    std::size_t heads = 1;
    std::size_t hidden = 0;

    [[nodiscard]] LayerNorm ln_q() const { return {name + ".ln_q", dim}; }
    [[nodiscard]] LayerNorm ln_kv() const { return {name + ".ln_kv", dim}; }
    [[nodiscard]] MultiHeadAttention attn() const { return {name + ".attn", dim, dim, dim, heads}; }
    [[nodiscard]] FeedForward ffn() const { return {name + ".ffn", dim, hidden}; }

    template <class T>
    void init(ParamStore<T>& store, Rng& rng) const
    {
        ln_q().init(store, rng);
        ln_kv().init(store, rng);
        attn().init(store, rng);
        ffn().init(store, rng);
    }

    template <class T>
    Var<T> operator()(const Bound<T>& p, const Var<T>& x, const Var<T>& kv) const
    {
        auto kv_n = ln_kv()(p, kv);
        auto h = add(x, attn()(p, ln_q()(p, x), kv_n, kv_n));
        return ffn()(p, h);
    }
};

/// Pre-norm self-attention block: z' = z + MSA(LN(z)); out = z' + MLP(LN(z')).
struct SelfAttentionBlock {
    std::string name;
    std::size_t dim = 0;
    std::size_t heads = 1;
    std::size_t hidden = 0;

    [[nodiscard]] LayerNorm ln() const { return {name + ".ln", dim}; }
    [[nodiscard]] MultiHeadAttention attn() const { return {name + ".attn", dim, dim, dim, heads}; }
    [[nodiscard]] FeedForward ffn() const { return {name + ".ffn", dim, hidden}; }

    template <class T>
    void init(ParamStore<T>& store, Rng& rng) const
    {
        ln().init(store, rng);
        attn().init(store, rng);
        ffn().init(store, rng);
    }

    template <class T>
    Var<T> operator()(const Bound<T>& p, const Var<T>& z) const
    {
        auto n = ln()(p, z);
        return ffn()(p, add(z, attn()(p, n, n, n)));
    }
};

class Cvit {
public:
    explicit Cvit(CvitSpec spec) : spec_(spec) { spec_.validate(); }

    [[nodiscard]] const CvitSpec& spec() const noexcept { return spec_; }

    [[nodiscard]] Dense patch_embed() const { return {"patch_embed", spec_.patch_dim(), spec_.embed}; }
    [[nodiscard]] CrossAttentionBlock aggregator() const
    {
        return {"aggregate", spec_.embed, spec_.heads, spec_.mlp_width};
    }
    [[nodiscard]] SelfAttentionBlock encoder_block(std::size_t l) const
    {
        return {"encoder.block" + std::to_string(l), spec_.embed, spec_.heads, spec_.mlp_width};
    }
    [[nodiscard]] CrossAttentionBlock decoder_block(std::size_t k) const
    {
        return {"decoder.block" + std::to_string(k), spec_.embed, spec_.heads, spec_.mlp_width};
    }
    [[nodiscard]] bool needs_alignment() const { return spec_.grid_dim != spec_.embed; }
    [[nodiscard]] Dense grid_align() const { return {"grid.align", spec_.grid_dim, spec_.embed}; }
    [[nodiscard]] Mlp projection() const { return {"projection", {spec_.embed, spec_.embed, spec_.out_dim}}; }

    /// Fresh parameters. Grid features and the latent query are unit
    /// Gaussian; positional embeddings are truncated normal (0.02); dense
    /// weights use fan-in scaling.
    template <class T>
    ParamStore<T> init(Rng& rng) const
    {
        ParamStore<T> store;
        const std::size_t c = spec_.embed;
        patch_embed().init(store, rng);
        store.add("pe_t", init::truncated_normal<T>({spec_.frames, 1, 1, c}, 0.02, rng));
        store.add("pe_s", init::truncated_normal<T>({1, spec_.tokens_h(), spec_.tokens_w(), c}, 0.02, rng));
        store.add("latent_query", init::normal<T>({1, c}, rng));
        aggregator().init(store, rng);
        for (std::size_t l = 0; l < spec_.depth; ++l) encoder_block(l).init(store, rng);
        store.add("grid.features", init::normal<T>({spec_.grid_nx, spec_.grid_ny, spec_.grid_dim}, rng));
        if (needs_alignment()) grid_align().init(store, rng);
        for (std::size_t k = 0; k < spec_.decoder_depth; ++k) decoder_block(k).init(store, rng);
        projection().init(store, rng);
        return store;
    }

    /// Rearranges frames [B, T, H, W, D] into patch rows [B, T, Ls, ph*pw*D].
    template <class T>
    [[nodiscard]] Tensor<T> patchify(const Tensor<T>& u) const
    {
        const auto& s = spec_;
        if (u.shape() != Shape{u.rank() ? u.dim(0) : 0, s.frames, s.height, s.width, s.channels}) {
            throw DimensionError("CViT input must be [B," + std::to_string(s.frames) + "," + std::to_string(s.height) +
                                 "," + std::to_string(s.width) + "," + std::to_string(s.channels) + "], got " +
                                 shape_str(u.shape()));
        }
        const std::size_t b = u.dim(0);
        auto split = u.reshaped({b, s.frames, s.tokens_h(), s.patch_h, s.tokens_w(), s.patch_w, s.channels});
        auto moved = kernels::permute(split, {0, 1, 2, 4, 3, 5, 6});
        return moved.reshaped({b, s.frames, s.spatial_tokens(), s.patch_dim()});
    }

    /// Temporal aggregation. tokens [N, T, C] (N = batch * spatial tokens)
    /// -> [N, 1, C]: the latent query is tiled N times and cross-attends to
    /// each location's T temporal tokens.
    template <class T>
    Var<T> perceiver_aggregate(const Bound<T>& p, const Var<T>& tokens) const
    {
        if (tokens.value().rank() != 3 || tokens.dim(2) != spec_.embed) {
            throw DimensionError("perceiver tokens must be [N,T," + std::to_string(spec_.embed) + "], got " +
                                 shape_str(tokens.shape()));
        }
        const std::size_t n = tokens.dim(0);
        auto z_hat = broadcast_to(reshape(p["latent_query"], {1, 1, spec_.embed}), {n, 1, spec_.embed});
        return aggregator()(p, z_hat, tokens);
    }

    /// u [B, T, H, W, D] -> z_L [B, Ls, C].
    template <class T>
    Var<T> encode(const Bound<T>& p, const Tensor<T>& u) const
    {
        const auto& s = spec_;
        auto& tape = p.tape();
        const std::size_t b = u.rank() ? u.dim(0) : 0;
        auto tokens = patch_embed()(p, tape.constant(patchify(u)));                        // [B,T,Ls,C]
        tokens = add(tokens, reshape(p["pe_t"], {s.frames, 1, s.embed}));
        tokens = add(tokens, reshape(p["pe_s"], {s.spatial_tokens(), s.embed}));
        auto flat = reshape(permute(tokens, {0, 2, 1, 3}), {b * s.spatial_tokens(), s.frames, s.embed});
        auto z = reshape(perceiver_aggregate(p, flat), {b, s.spatial_tokens(), s.embed});
        for (std::size_t l = 0; l < s.depth; ++l) z = encoder_block(l)(p, z);
        return z;
    }

    /// Positional features x_0 for queries [Q, 2] -> [Q, C].
    template <class T>
    Var<T> query_features(const Bound<T>& p, const Tensor<T>& queries) const
    {
        auto x0 = grid_interpolate(p["grid.features"], queries, spec_.grid());
        if (needs_alignment()) x0 = grid_align()(p, x0);
        return x0;
    }

    /// z_L [B, Ls, C], queries [Q, 2] -> [B, Q, out_dim]. Every query row
    /// is processed independently of the others.
    template <class T>
    Var<T> decode(const Bound<T>& p, const Var<T>& z, const Tensor<T>& queries) const
    {
        if (z.value().rank() != 3 || z.dim(2) != spec_.embed) {
            throw DimensionError("CViT latent must be [B,Ls," + std::to_string(spec_.embed) + "], got " +
                                 shape_str(z.shape()));
        }
        const std::size_t b = z.dim(0), q = queries.rank() == 2 ? queries.dim(0) : 0;
        if (q == 0) return p.tape().constant(Tensor<T>({b, 0, spec_.out_dim}));
        auto x = broadcast_to(reshape(query_features(p, queries), {1, q, spec_.embed}), {b, q, spec_.embed});
        for (std::size_t k = 0; k < spec_.decoder_depth; ++k) x = decoder_block(k)(p, x, z);
        return projection()(p, x);
    }

    template <class T>
    Var<T> forward(const Bound<T>& p, const Tensor<T>& u, const Tensor<T>& queries) const
    {
        return decode(p, encode(p, u), queries);
    }

private:
    CvitSpec spec_;
};

}  // namespace cvit
