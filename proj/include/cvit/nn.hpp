#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cvit/autodiff.hpp"
#include "cvit/rng.hpp"
#include "cvit/serialize.hpp"

namespace cvit {

/// Trainable tensors keyed by dotted path (e.g. "encoder.block3.attn.wq").
template <class T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> value)
    {
        auto [it, inserted] = tensors_.emplace(name, std::move(value));
        if (!inserted) throw ConfigError("duplicate parameter name " + name);
        return it->second;
    }

    [[nodiscard]] const Tensor<T>& get(const std::string& name) const
    {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw ConfigError("unknown parameter " + name);
        return it->second;
    }

    [[nodiscard]] Tensor<T>& get(const std::string& name)
    {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw ConfigError("unknown parameter " + name);
        return it->second;
    }

    [[nodiscard]] bool contains(const std::string& name) const { return tensors_.contains(name); }
    [[nodiscard]] std::size_t size() const noexcept { return tensors_.size(); }

    [[nodiscard]] std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& [_, t] : tensors_) n += t.size();
        return n;
    }

    [[nodiscard]] const NamedTensors<T>& tensors() const noexcept { return tensors_; }
    [[nodiscard]] NamedTensors<T>& tensors() noexcept { return tensors_; }

    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

private:
    NamedTensors<T> tensors_;
};

/// A ParamStore recorded on a tape for one forward pass.
template <class T>
class Bound {
public:
    Bound(Tape<T>& tape, const ParamStore<T>& store, bool requires_grad = true) : tape_(&tape)
    {
        for (const auto& [name, value] : store) vars_.emplace(name, tape.leaf(value, requires_grad));
    }

    [[nodiscard]] const Var<T>& operator[](const std::string& name) const
    {
        auto it = vars_.find(name);
        if (it == vars_.end()) throw ConfigError("parameter not bound: " + name);
        return it->second;
    }

    [[nodiscard]] Tape<T>& tape() const noexcept { return *tape_; }

    /// Gradients after tape.backward(), keyed like the store.
    [[nodiscard]] NamedTensors<T> gradients() const
    {
        NamedTensors<T> out;
        for (const auto& [name, var] : vars_) out.emplace(name, tape_->grad(var));
        return out;
    }

    [[nodiscard]] Var<T> constant(Tensor<T> value) const { return tape_->constant(std::move(value)); }

private:
    Tape<T>* tape_;
    std::map<std::string, Var<T>> vars_;
};

namespace init {

template <class T>
Tensor<T> truncated_normal(Shape shape, double stddev, Rng& rng)
{
    Tensor<T> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.truncated_normal(stddev));
    return t;
}

template <class T>
Tensor<T> normal(Shape shape, Rng& rng)
{
    Tensor<T> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.normal());
    return t;
}

/// Fan-in variance scaling, truncated at two standard deviations.
template <class T>
Tensor<T> fan_in(std::size_t in, std::size_t out, Rng& rng)
{
    return truncated_normal<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

}  // namespace init

/// Affine map over the last axis: "<name>.w" [in,out], "<name>.b" [out].
struct Dense {
    std::string name;
    std::size_t in = 0;
    std::size_t out = 0;

    template <class T>
    void init(ParamStore<T>& store, Rng& rng) const
    {
        store.add(name + ".w", init::fan_in<T>(in, out, rng));
        store.add(name + ".b", Tensor<T>(Shape{out}));
    }

    template <class T>
    Var<T> operator()(const Bound<T>& p, const Var<T>& x) const
    {
        return linear(x, p[name + ".w"], p[name + ".b"]);
    }
};

struct LayerNorm {
    std::string name;
    std::size_t dim = 0;
    double eps = 1e-5;

    template <class T>
    void init(ParamStore<T>& store, Rng&) const
    {
        store.add(name + ".gain", Tensor<T>(Shape{dim}, T{1}));
        store.add(name + ".bias", Tensor<T>(Shape{dim}));
    }

    template <class T>
    Var<T> operator()(const Bound<T>& p, const Var<T>& x) const
    {
        return layer_norm(x, p[name + ".gain"], p[name + ".bias"], static_cast<T>(eps));
    }
};

/// Dense layers with GELU between them (none after the last).
struct Mlp {
    std::string name;
    std::vector<std::size_t> widths;  // input, hidden..., output

    [[nodiscard]] Dense layer(std::size_t i) const
    {
        return Dense{name + ".dense" + std::to_string(i), widths.at(i), widths.at(i + 1)};
    }

    [[nodiscard]] std::size_t depth() const { return widths.size() < 2 ? 0 : widths.size() - 1; }

    template <class T>
    void init(ParamStore<T>& store, Rng& rng) const
    {
        if (widths.size() < 2) throw ConfigError("MLP " + name + " needs at least input and output widths");
        for (std::size_t i = 0; i < depth(); ++i) layer(i).init(store, rng);
    }

    template <class T>
    Var<T> operator()(const Bound<T>& p, Var<T> x) const
    {
        for (std::size_t i = 0; i < depth(); ++i) {
            x = layer(i)(p, x);
            if (i + 1 < depth()) x = gelu(x);
        }
        return x;
    }
};

/// Multi-head attention parameters: projections "<name>.wq/.wk/.wv/.wo".
struct MultiHeadAttention {
    std::string name;
    std::size_t q_dim = 0;
    std::size_t kv_dim = 0;
    std::size_t embed = 0;
    std::size_t heads = 1;

    void validate() const
    {
        if (heads == 0 || embed % heads != 0) {
            throw ConfigError("attention " + name + ": embedding dim " + std::to_string(embed) +
                              " is not divisible by " + std::to_string(heads) + " heads");
        }
    }

    [[nodiscard]] Dense wq() const { return {name + ".wq", q_dim, embed}; }
    [[nodiscard]] Dense wk() const { return {name + ".wk", kv_dim, embed}; }
    [[nodiscard]] Dense wv() const { return {name + ".wv", kv_dim, embed}; }
    [[nodiscard]] Dense wo() const { return {name + ".wo", embed, q_dim}; }

    template <class T>
    void init(ParamStore<T>& store, Rng& rng) const
    {
        validate();
        wq().init(store, rng);
        wk().init(store, rng);
        wv().init(store, rng);
        wo().init(store, rng);
    }

    template <class T>
    Var<T> operator()(const Bound<T>& p, const Var<T>& q, const Var<T>& k, const Var<T>& v) const
    {
        return multi_head_attention(q, k, v, p, *this);
    }
};

/// Scaled dot-product attention. q: [B, Lq, q_dim], k and v: [B, Lk, kv_dim].
/// Each head attends with scale 1/sqrt(head_dim); heads are concatenated
/// and mapped back through the output projection. Query rows never
/// interact, so each output row depends only on its own query.
template <class T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, const Bound<T>& p,
                            const MultiHeadAttention& spec)
{
    spec.validate();
    if (q.value().rank() != 3 || k.value().rank() != 3 || v.value().rank() != 3) {
        throw DimensionError("attention expects rank-3 [batch, length, dim] inputs, got " + shape_str(q.shape()) +
                             ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
    }
    if (k.dim(0) != q.dim(0) || v.dim(0) != q.dim(0) || k.dim(1) != v.dim(1)) {
        throw DimensionError("attention batch/length mismatch: " + shape_str(q.shape()) + ", " + shape_str(k.shape()) +
                             ", " + shape_str(v.shape()));
    }
    const std::size_t b = q.dim(0), lq = q.dim(1), lk = k.dim(1);
    const std::size_t h = spec.heads, dh = spec.embed / spec.heads;

    auto qh = permute(reshape(spec.wq()(p, q), {b, lq, h, dh}), {0, 2, 1, 3});  // [B,h,Lq,dh]
    auto kh = permute(reshape(spec.wk()(p, k), {b, lk, h, dh}), {0, 2, 3, 1});  // [B,h,dh,Lk]
    auto vh = permute(reshape(spec.wv()(p, v), {b, lk, h, dh}), {0, 2, 1, 3});  // [B,h,Lk,dh]
    auto scores = scale(matmul(qh, kh), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    auto attn = matmul(softmax(scores, -1), vh);                                 // [B,h,Lq,dh]
    auto merged = reshape(permute(attn, {0, 2, 1, 3}), {b, lq, spec.embed});
    return spec.wo()(p, merged);
}

/// Pre-norm residual MLP sub-block: x + MLP(LN(x)).
struct FeedForward {
    std::string name;
    std::size_t dim = 0;
    std::size_t hidden = 0;

    [[nodiscard]] LayerNorm norm() const { return {name + ".ln", dim}; }
    [[nodiscard]] Mlp mlp() const { return {name + ".mlp", {dim, hidden, dim}}; }

    template <class T>
    void init(ParamStore<T>& store, Rng& rng) const
    {
        norm().init(store, rng);
        mlp().init(store, rng);
    }

    template <class T>
    Var<T> operator()(const Bound<T>& p, const Var<T>& x) const
    {
        return add(x, mlp()(p, norm()(p, x)));
    }
};

}  // namespace cvit
