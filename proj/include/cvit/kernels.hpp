#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "cvit/tensor.hpp"

namespace cvit::kernels {

// Row-major GEMM variants backed by Eigen. All three accumulate into C.

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
using MutMap = Eigen::Map<RowMatrix<T>>;

/// C[m,n] += A[m,k] * B[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n)
{
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    MutMap<T>(c, mi, ni).noalias() += ConstMap<T>(a, mi, ki) * ConstMap<T>(b, ki, ni);
}

/// C[m,k] += G[m,n] * B[k,n]^T
template <class T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k)
{
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    MutMap<T>(c, mi, ki).noalias() += ConstMap<T>(g, mi, ni) * ConstMap<T>(b, ki, ni).transpose();
}

/// C[k,n] += A[m,k]^T * G[m,n]
template <class T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n)
{
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    MutMap<T>(c, ki, ni).noalias() += ConstMap<T>(a, mi, ki).transpose() * ConstMap<T>(g, mi, ni);
}

/// Numpy-style broadcast of two shapes.
inline Shape broadcast_shapes(const Shape& a, const Shape& b)
{
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
        }
        out[i] = da == 1 ? db : da;
    }
    return out;
}

/// Strides of `in` when viewed inside `out` (0 along broadcast axes).
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out)
{
    const std::size_t r = out.size();
    std::vector<std::size_t> strides(r, 0);
    std::size_t stride = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        const std::size_t oi = i + (r - in.size());
        strides[oi] = in[i] == 1 ? 0 : stride;
        stride *= in[i];
    }
    return strides;
}

/// Offset of each output element into `in` under broadcasting.
inline std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out)
{
    const auto strides = broadcast_strides(in, out);
    const std::size_t total = shape_size(out);
    std::vector<std::size_t> index(total);
    std::vector<std::size_t> counter(out.size(), 0);
    std::size_t off = 0;
    for (std::size_t e = 0; e < total; ++e) {
        index[e] = off;
        for (std::size_t ax = out.size(); ax-- > 0;) {
            ++counter[ax];
            off += strides[ax];
            if (counter[ax] < out[ax]) break;
            off -= strides[ax] * out[ax];
            counter[ax] = 0;
        }
    }
    return index;
}

/// True when `in` equals the trailing axes of `out`.
inline bool is_suffix(const Shape& in, const Shape& out)
{
    if (in.size() > out.size()) return false;
    return std::equal(in.begin(), in.end(), out.end() - static_cast<std::ptrdiff_t>(in.size()));
}

/// Sums `g` (shaped like out) down to shape `in`.
template <class T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& in)
{
    if (g.shape() == in) return g;
    Tensor<T> r(in);
    auto rd = r.mutable_data();
    auto gd = g.data();
    if (is_suffix(in, g.shape())) {
        const std::size_t inner = rd.size();
        for (std::size_t o = 0; o < gd.size(); o += inner) {
            for (std::size_t j = 0; j < inner; ++j) rd[j] += gd[o + j];
        }
        return r;
    }
    const auto index = broadcast_index(in, g.shape());
    for (std::size_t e = 0; e < gd.size(); ++e) rd[index[e]] += gd[e];
    return r;
}

/// out = f(a, b) elementwise under broadcasting.
template <class T, class F>
Tensor<T> broadcast_apply(const Tensor<T>& a, const Tensor<T>& b, F f)
{
    const Shape out_shape = a.shape() == b.shape() ? a.shape() : broadcast_shapes(a.shape(), b.shape());
    Tensor<T> out(out_shape);
    auto od = out.mutable_data();
    auto ad = a.data();
    auto bd = b.data();
    if (a.shape() == out_shape && b.shape() == out_shape) {
        for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(ad[i], bd[i]);
    } else if (a.shape() == out_shape && is_suffix(b.shape(), out_shape) && !bd.empty()) {
        const std::size_t inner = bd.size();
        for (std::size_t o = 0; o < od.size(); o += inner) {
            for (std::size_t j = 0; j < inner; ++j) od[o + j] = f(ad[o + j], bd[j]);
        }
    } else if (b.shape() == out_shape && is_suffix(a.shape(), out_shape) && !ad.empty()) {
        const std::size_t inner = ad.size();
        for (std::size_t o = 0; o < od.size(); o += inner) {
            for (std::size_t j = 0; j < inner; ++j) od[o + j] = f(ad[j], bd[o + j]);
        }
    } else {
        const auto ia = broadcast_index(a.shape(), out_shape);
        const auto ib = broadcast_index(b.shape(), out_shape);
        for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(ad[ia[i]], bd[ib[i]]);
    }
    return out;
}

/// Generic axis permutation: out axis i is input axis perm[i].
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm)
{
    const std::size_t r = x.rank();
    if (perm.size() != r) throw DimensionError("permutation rank mismatch for shape " + shape_str(x.shape()));
    if (r <= 1) return x;
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.shape()[i];
    Shape out_shape(r);
    std::vector<std::size_t> strides(r);
    std::vector<bool> seen(r, false);
    for (std::size_t i = 0; i < r; ++i) {
        if (perm[i] >= r || seen[perm[i]]) throw DimensionError("invalid permutation");
        seen[perm[i]] = true;
        out_shape[i] = x.shape()[perm[i]];
        strides[i] = in_strides[perm[i]];
    }
    Tensor<T> out(out_shape);
    auto od = out.mutable_data();
    auto xd = x.data();
    if (od.empty()) return out;
    std::vector<std::size_t> counter(r, 0);
    std::size_t off = 0;
    // Innermost axis handled as a strided run.
    const std::size_t inner = r ? out_shape[r - 1] : 1;
    const std::size_t inner_stride = r ? strides[r - 1] : 0;
    for (std::size_t e = 0; e < od.size(); e += inner) {
        for (std::size_t j = 0; j < inner; ++j) od[e + j] = xd[off + j * inner_stride];
        for (std::size_t ax = r - 1; ax-- > 0;) {
            ++counter[ax];
            off += strides[ax];
            if (counter[ax] < out_shape[ax]) break;
            off -= strides[ax] * out_shape[ax];
            counter[ax] = 0;
        }
    }
    return out;
}

}  // namespace cvit::kernels
