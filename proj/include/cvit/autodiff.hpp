#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "cvit/errors.hpp"
#include "cvit/kernels.hpp"
#include "cvit/tensor.hpp"

namespace cvit {

template <class T>
class Tape;

/// Handle to a value recorded on a Tape.
template <class T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    [[nodiscard]] const Tensor<T>& value() const { return tape_->value(id_); }
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] std::size_t dim(std::ptrdiff_t axis) const { return value().dim(axis); }
    [[nodiscard]] bool requires_grad() const { return tape_->requires_grad(id_); }
    [[nodiscard]] std::size_t id() const noexcept { return id_; }
    [[nodiscard]] Tape<T>& tape() const noexcept { return *tape_; }
    [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Define-by-run record of primitive applications. Node ids are assigned in
/// creation order, which is a topological order of the graph.
template <class T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor<T>& grad_out)>;

    struct Node {
        std::string op;
        std::vector<std::size_t> inputs;
        Tensor<T> value;
        bool requires_grad = false;
        Backward backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Tensor<T> value, bool requires_grad = false)
    {
        nodes_.push_back(Node{"leaf", {}, std::move(value), requires_grad, {}});
        return Var<T>(this, nodes_.size() - 1);
    }

    Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

    /// Appends a primitive result. The backward rule is kept only when some
    /// input participates in differentiation.
    Var<T> record(std::string op, std::vector<std::size_t> inputs, Tensor<T> value, Backward backward)
    {
        bool needs = false;
        for (auto id : inputs) needs = needs || nodes_.at(id).requires_grad;
        if (!needs) backward = nullptr;
        nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(value), needs, std::move(backward)});
        return Var<T>(this, nodes_.size() - 1);
    }

    [[nodiscard]] const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    [[nodiscard]] const Node& node(std::size_t id) const { return nodes_.at(id); }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    /// Adds `g` into the gradient slot of node `id` (no-op for nodes outside
    /// differentiation).
    void accumulate(std::size_t id, const Tensor<T>& g)
    {
        if (!nodes_[id].requires_grad) return;
        if (g.shape() != nodes_[id].value.shape()) {
            throw DimensionError("gradient shape " + shape_str(g.shape()) + " does not match value shape " +
                                 shape_str(nodes_[id].value.shape()) + " at op " + nodes_[id].op);
        }
        auto& slot = grads_[id];
        if (slot.shape() != g.shape() || slot.size() != g.size()) {
            slot = g;
            return;
        }
        auto sd = slot.mutable_data();
        auto gd = g.data();
        for (std::size_t i = 0; i < sd.size(); ++i) sd[i] += gd[i];
    }

    /// Reverse sweep from a scalar loss.
    void backward(const Var<T>& loss)
    {
        if (loss.value().size() != 1) {
            throw DimensionError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
        }
        grads_.assign(nodes_.size(), Tensor<T>());
        has_run_ = true;
        if (!nodes_[loss.id()].requires_grad) return;
        grads_[loss.id()] = Tensor<T>(loss.shape(), T{1});
        for (std::size_t id = loss.id() + 1; id-- > 0;) {
            auto& node = nodes_[id];
            if (!node.backward || grads_[id].size() == 0) continue;
            const Tensor<T> g = grads_[id];
            node.backward(*this, g);
        }
    }

    /// Gradient of the last backward() call; zeros if the node got none.
    [[nodiscard]] Tensor<T> grad(const Var<T>& v) const
    {
        if (!has_run_) throw std::logic_error("grad() called before backward()");
        const auto& g = grads_.at(v.id());
        if (g.size() == 0 && v.value().size() != 0) return Tensor<T>(v.shape());
        return g;
    }

private:
    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    bool has_run_ = false;
};

/// Reverse-mode sweep from a scalar loss node.
template <class T>
void backward_pass(const Var<T>& loss)
{
    loss.tape().backward(loss);
}

namespace detail {

template <class T>
Tape<T>& common_tape(const Var<T>& a, const Var<T>& b)
{
    if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
    return a.tape();
}

template <class T>
Tensor<T> scaled(const Tensor<T>& x, T c)
{
    Tensor<T> out(x.shape());
    auto od = out.mutable_data();
    auto xd = x.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * c;
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic with numpy broadcasting.

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    auto& tape = detail::common_tape(a, b);
    auto out = kernels::broadcast_apply(a.value(), b.value(), [](T x, T y) { return x + y; });
    const Shape sa = a.shape(), sb = b.shape();
    const auto ia = a.id(), ib = b.id();
    return tape.record("add", {ia, ib}, std::move(out), [=](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, kernels::reduce_to(g, sa));
        if (t.requires_grad(ib)) t.accumulate(ib, kernels::reduce_to(g, sb));
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    auto& tape = detail::common_tape(a, b);
    auto out = kernels::broadcast_apply(a.value(), b.value(), [](T x, T y) { return x - y; });
    const Shape sa = a.shape(), sb = b.shape();
    const auto ia = a.id(), ib = b.id();
    return tape.record("sub", {ia, ib}, std::move(out), [=](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, kernels::reduce_to(g, sa));
        if (t.requires_grad(ib)) t.accumulate(ib, kernels::reduce_to(detail::scaled(g, T{-1}), sb));
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    auto& tape = detail::common_tape(a, b);
    auto out = kernels::broadcast_apply(a.value(), b.value(), [](T x, T y) { return x * y; });
    const Tensor<T> av = a.value(), bv = b.value();
    const auto ia = a.id(), ib = b.id();
    return tape.record("mul", {ia, ib}, std::move(out), [=](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) {
            auto ga = kernels::broadcast_apply(g, bv, [](T x, T y) { return x * y; });
            t.accumulate(ia, kernels::reduce_to(ga, av.shape()));
        }
        if (t.requires_grad(ib)) {
            auto gb = kernels::broadcast_apply(g, av, [](T x, T y) { return x * y; });
            t.accumulate(ib, kernels::reduce_to(gb, bv.shape()));
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& a, T c)
{
    const auto ia = a.id();
    return a.tape().record("scale", {ia}, detail::scaled(a.value(), c),
                           [=](Tape<T>& t, const Tensor<T>& g) { t.accumulate(ia, detail::scaled(g, c)); });
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Shape manipulation.

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape)
{
    const auto ia = a.id();
    const Shape in = a.shape();
    return a.tape().record("reshape", {ia}, a.value().reshaped(std::move(shape)),
                           [=](Tape<T>& t, const Tensor<T>& g) { t.accumulate(ia, g.reshaped(in)); });
}

template <class T>
Var<T> permute(const Var<T>& a, std::vector<std::size_t> perm)
{
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= perm.size()) throw DimensionError("invalid permutation");
        inverse[perm[i]] = i;
    }
    const auto ia = a.id();
    return a.tape().record("permute", {ia}, kernels::permute(a.value(), perm),
                           [=](Tape<T>& t, const Tensor<T>& g) { t.accumulate(ia, kernels::permute(g, inverse)); });
}

/// Swaps two axes.
template <class T>
Var<T> transpose(const Var<T>& a, std::ptrdiff_t ax1 = -2, std::ptrdiff_t ax2 = -1)
{
    std::vector<std::size_t> perm(a.value().rank());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::swap(perm[a.value().normalize_axis(ax1)], perm[a.value().normalize_axis(ax2)]);
    return permute(a, std::move(perm));
}

/// Materializes `a` broadcast to `shape`.
template <class T>
Var<T> broadcast_to(const Var<T>& a, Shape shape)
{
    if (kernels::broadcast_shapes(a.shape(), shape) != shape) {
        throw DimensionError("cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    Tensor<T> zeros(shape);
    auto out = kernels::broadcast_apply(zeros, a.value(), [](T, T y) { return y; });
    const auto ia = a.id();
    const Shape in = a.shape();
    return a.tape().record("broadcast_to", {ia}, std::move(out),
                           [=](Tape<T>& t, const Tensor<T>& g) { t.accumulate(ia, kernels::reduce_to(g, in)); });
}

/// Concatenation along the last axis. Leading extents must agree.
template <class T>
Var<T> concat_last(const std::vector<Var<T>>& parts)
{
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    auto& tape = parts.front().tape();
    Shape lead = parts.front().shape();
    if (lead.empty()) throw DimensionError("concat requires rank >= 1");
    lead.pop_back();
    std::vector<std::size_t> widths;
    std::vector<std::size_t> ids;
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.empty()) throw DimensionError("concat requires rank >= 1");
        widths.push_back(s.back());
        s.pop_back();
        if (s != lead) throw DimensionError("concat leading shape mismatch: " + shape_str(p.shape()));
        total += widths.back();
        ids.push_back(p.id());
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    Tensor<T> out(out_shape);
    const std::size_t rows = shape_size(lead);
    auto od = out.mutable_data();
    std::size_t col = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto pd = parts[k].value().data();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                        od.begin() + static_cast<std::ptrdiff_t>(r * total + col));
        }
        col += widths[k];
    }
    return tape.record("concat", ids, std::move(out), [=](Tape<T>& t, const Tensor<T>& g) {
        auto gd = g.data();
        std::size_t c0 = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.requires_grad(ids[k])) {
                Shape s = lead;
                s.push_back(widths[k]);
                Tensor<T> gk(s);
                auto kd = gk.mutable_data();
                for (std::size_t r = 0; r < rows; ++r) {
                    std::copy_n(gd.begin() + static_cast<std::ptrdiff_t>(r * total + c0), widths[k],
                                kd.begin() + static_cast<std::ptrdiff_t>(r * widths[k]));
                }
                t.accumulate(ids[k], gk);
            }
            c0 += widths[k];
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra.

/// a[..., m, k] @ b[..., k, n]. Batch axes must be equal, or one operand
/// must be a plain matrix that is shared across the other's batch.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b)
{
    auto& tape = detail::common_tape(a, b);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    auto mismatch = [&] {
        return DimensionError("matmul shape mismatch: " + shape_str(sa) + " x " + shape_str(sb));
    };
    if (sa.size() < 2 || sb.size() < 2) throw mismatch();
    const std::size_t m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
    if (sb[sb.size() - 2] != k) throw mismatch();
    const Shape batch_a(sa.begin(), sa.end() - 2);
    const Shape batch_b(sb.begin(), sb.end() - 2);
    if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b) throw mismatch();
    const Shape batch = batch_a.empty() ? batch_b : batch_a;
    const std::size_t nb = shape_size(batch);
    const std::size_t stride_a = batch_a.empty() ? 0 : m * k;
    const std::size_t stride_b = batch_b.empty() ? 0 : k * n;

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<T> out(out_shape);
    {
        auto od = out.mutable_data();
        auto ad = a.value().data();
        auto bd = b.value().data();
        if (stride_b == 0 && stride_a != 0) {
            // Shared right operand: fold batch into rows.
            kernels::gemm_nn(ad.data(), bd.data(), od.data(), nb * m, k, n);
        } else {
            for (std::size_t i = 0; i < nb; ++i) {
                kernels::gemm_nn(ad.data() + i * stride_a, bd.data() + i * stride_b, od.data() + i * m * n, m, k, n);
            }
        }
    }
    const Tensor<T> av = a.value(), bv = b.value();
    const auto ia = a.id(), ib = b.id();
    return tape.record("matmul", {ia, ib}, std::move(out), [=](Tape<T>& t, const Tensor<T>& g) {
        auto gd = g.data();
        auto ad = av.data();
        auto bd = bv.data();
        if (t.requires_grad(ia)) {
            Tensor<T> ga(av.shape());
            auto gad = ga.mutable_data();
            if (stride_b == 0 && stride_a != 0) {
                kernels::gemm_nt(gd.data(), bd.data(), gad.data(), nb * m, n, k);
            } else {
                for (std::size_t i = 0; i < nb; ++i) {
                    kernels::gemm_nt(gd.data() + i * m * n, bd.data() + i * stride_b, gad.data() + i * stride_a, m, n, k);
                }
            }
            t.accumulate(ia, ga);
        }
        if (t.requires_grad(ib)) {
            Tensor<T> gb(bv.shape());
            auto gbd = gb.mutable_data();
            if (stride_b == 0 && stride_a != 0) {
                kernels::gemm_tn(ad.data(), gd.data(), gbd.data(), nb * m, k, n);
            } else {
                for (std::size_t i = 0; i < nb; ++i) {
                    kernels::gemm_tn(ad.data() + i * stride_a, gd.data() + i * m * n, gbd.data() + i * stride_b, m, k, n);
                }
            }
            t.accumulate(ib, gb);
        }
    });
}

/// x @ w + bias over the last axis of x.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias)
{
    return add(matmul(x, w), bias);
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization.

/// Softmax along `axis` with max subtraction.
template <class T>
Var<T> softmax(const Var<T>& x, std::ptrdiff_t axis = -1)
{
    const auto& xv = x.value();
    const std::size_t ax = xv.normalize_axis(axis);
    const std::size_t len = xv.shape()[ax];
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < xv.rank(); ++i) inner *= xv.shape()[i];
    const std::size_t outer = len == 0 ? 0 : xv.size() / (len * inner);

    Tensor<T> y(xv.shape());
    auto yd = y.mutable_data();
    auto xd = xv.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
            if (mx == -std::numeric_limits<T>::infinity()) {
                throw NumericError("softmax over a slice of all -inf (degenerate distribution)");
            }
            T total = 0;
            for (std::size_t j = 0; j < len; ++j) {
                const T e = std::exp(xd[base + j * inner] - mx);
                yd[base + j * inner] = e;
                total += e;
            }
            const T inv = T{1} / total;
            for (std::size_t j = 0; j < len; ++j) yd[base + j * inner] *= inv;
        }
    }
    const Tensor<T> saved = y;
    const auto ix = x.id();
    return x.tape().record("softmax", {ix}, std::move(y), [=](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T> gx(saved.shape());
        auto gxd = gx.mutable_data();
        auto gd = g.data();
        auto sd = saved.data();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot = 0;
                for (std::size_t j = 0; j < len; ++j) dot += gd[base + j * inner] * sd[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t e = base + j * inner;
                    gxd[e] = sd[e] * (gd[e] - dot);
                }
            }
        }
        t.accumulate(ix, gx);
    });
}

/// Normalizes over the last axis, then applies gain and bias (both [C]).
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T{1e-5})
{
    if (!(eps > 0)) throw ConfigError("layer_norm eps must be positive");
    const auto& xv = x.value();
    if (xv.rank() == 0) throw DimensionError("layer_norm requires rank >= 1");
    const std::size_t c = xv.shape().back();
    if (gain.shape() != Shape{c} || bias.shape() != Shape{c}) {
        throw DimensionError("layer_norm gain/bias must have shape [" + std::to_string(c) + "], got " +
                             shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
    }
    const std::size_t rows = c == 0 ? 0 : xv.size() / c;
    Tensor<T> xhat(xv.shape());
    Tensor<T> rstd(Shape{rows});
    Tensor<T> y(xv.shape());
    {
        auto xd = xv.data();
        auto hd = xhat.mutable_data();
        auto rd = rstd.mutable_data();
        auto yd = y.mutable_data();
        auto gd = gain.value().data();
        auto bd = bias.value().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* row = xd.data() + r * c;
            T mean = 0;
            for (std::size_t j = 0; j < c; ++j) mean += row[j];
            mean /= static_cast<T>(c);
            T var = 0;
            for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= static_cast<T>(c);
            const T inv = T{1} / std::sqrt(var + eps);
            rd[r] = inv;
            for (std::size_t j = 0; j < c; ++j) {
                const T h = (row[j] - mean) * inv;
                hd[r * c + j] = h;
                yd[r * c + j] = h * gd[j] + bd[j];
            }
        }
    }
    const Tensor<T> gv = gain.value();
    const auto ix = x.id(), ig = gain.id(), ib = bias.id();
    return x.tape().record("layer_norm", {ix, ig, ib}, std::move(y), [=](Tape<T>& t, const Tensor<T>& g) {
        auto gd = g.data();
        auto hd = xhat.data();
        if (t.requires_grad(ig) || t.requires_grad(ib)) {
            Tensor<T> dg(Shape{c}), db(Shape{c});
            auto dgd = dg.mutable_data();
            auto dbd = db.mutable_data();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < c; ++j) {
                    dgd[j] += gd[r * c + j] * hd[r * c + j];
                    dbd[j] += gd[r * c + j];
                }
            }
            t.accumulate(ig, dg);
            t.accumulate(ib, db);
        }
        if (t.requires_grad(ix)) {
            Tensor<T> dx(xhat.shape());
            auto dxd = dx.mutable_data();
            auto gw = gv.data();
            auto rd = rstd.data();
            std::vector<T> dh(c);
            for (std::size_t r = 0; r < rows; ++r) {
                T mean_dh = 0, mean_dhh = 0;
                for (std::size_t j = 0; j < c; ++j) {
                    dh[j] = gd[r * c + j] * gw[j];
                    mean_dh += dh[j];
                    mean_dhh += dh[j] * hd[r * c + j];
                }
                mean_dh /= static_cast<T>(c);
                mean_dhh /= static_cast<T>(c);
                for (std::size_t j = 0; j < c; ++j) {
                    dxd[r * c + j] = rd[r] * (dh[j] - mean_dh - hd[r * c + j] * mean_dhh);
                }
            }
            t.accumulate(ix, dx);
        }
    });
}

/// Standard normal CDF through the error function.
template <class T>
T normal_cdf(T x)
{
    return T{0.5} * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

/// Exact GELU: x * Phi(x).
template <class T>
Var<T> gelu(const Var<T>& x)
{
    const auto& xv = x.value();
    Tensor<T> y(xv.shape());
    auto yd = y.mutable_data();
    auto xd = xv.data();
    for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = xd[i] * normal_cdf(xd[i]);
    const auto ix = x.id();
    return x.tape().record("gelu", {ix}, std::move(y), [=](Tape<T>& t, const Tensor<T>& g) {
        constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
        Tensor<T> gx(xv.shape());
        auto gxd = gx.mutable_data();
        auto gd = g.data();
        auto xs = xv.data();
        for (std::size_t i = 0; i < gxd.size(); ++i) {
            const T v = xs[i];
            gxd[i] = gd[i] * (normal_cdf(v) + v * inv_sqrt_2pi * std::exp(T{-0.5} * v * v));
        }
        t.accumulate(ix, gx);
    });
}

// ---------------------------------------------------------------------------
// Reductions.

template <class T>
Var<T> sum(const Var<T>& x)
{
    T total = 0;
    for (T v : x.value().data()) total += v;
    const auto ix = x.id();
    const Shape s = x.shape();
    return x.tape().record("sum", {ix}, Tensor<T>::scalar(total),
                           [=](Tape<T>& t, const Tensor<T>& g) { t.accumulate(ix, Tensor<T>(s, g[0])); });
}

template <class T>
Var<T> mean(const Var<T>& x)
{
    const std::size_t n = x.value().size();
    if (n == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum(x), T{1} / static_cast<T>(n));
}

}  // namespace cvit
