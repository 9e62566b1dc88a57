#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cvit/errors.hpp"

namespace cvit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

/// 64-byte aligned storage, so vectorized kernels take the same code path
/// (and summation order) for every buffer.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept
    {
        return true;
    }
};

/// Dense row-major tensor. Storage is shared between copies and duplicated
/// on the first mutable access of a shared buffer, so copying is cheap and
/// tensors behave as values.
template <class T>
class Tensor {
public:
    using value_type = T;

    using Storage = std::vector<T, AlignedAllocator<T>>;

    Tensor() : data_(std::make_shared<Storage>()) {}

    explicit Tensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(std::make_shared<Storage>(shape_size(shape_), fill))
    {
    }

    Tensor(Shape shape, std::vector<T> values)
        : shape_(std::move(shape)), data_(std::make_shared<Storage>(values.begin(), values.end()))
    {
        if (data_->size() != shape_size(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_->size()) +
                                 " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

    static Tensor from(Shape shape, std::initializer_list<T> values)
    {
        return Tensor(std::move(shape), std::vector<T>(values));
    }

    template <class U>
    static Tensor cast(const Tensor<U>& other)
    {
        Tensor out(other.shape());
        std::transform(other.data().begin(), other.data().end(), out.data_->begin(),
                       [](U v) { return static_cast<T>(v); });
        return out;
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_->size(); }
    [[nodiscard]] std::size_t dim(std::ptrdiff_t axis) const { return shape_.at(normalize_axis(axis)); }

    [[nodiscard]] std::size_t normalize_axis(std::ptrdiff_t axis) const
    {
        const auto r = static_cast<std::ptrdiff_t>(rank());
        if (axis < 0) axis += r;
        if (axis < 0 || axis >= r) {
            throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
        }
        return static_cast<std::size_t>(axis);
    }

    [[nodiscard]] std::span<const T> data() const noexcept { return {data_->data(), data_->size()}; }

    [[nodiscard]] std::span<T> mutable_data()
    {
        if (data_.use_count() > 1) data_ = std::make_shared<Storage>(*data_);
        return {data_->data(), data_->size()};
    }

    [[nodiscard]] const T& operator[](std::size_t i) const { return (*data_)[i]; }
    [[nodiscard]] T& operator[](std::size_t i) { return mutable_data()[i]; }

    template <class... Idx>
    [[nodiscard]] const T& at(Idx... idx) const
    {
        return (*data_)[offset({static_cast<std::size_t>(idx)...})];
    }

    template <class... Idx>
    [[nodiscard]] T& at(Idx... idx)
    {
        return mutable_data()[offset({static_cast<std::size_t>(idx)...})];
    }

    [[nodiscard]] std::size_t offset(std::initializer_list<std::size_t> idx) const
    {
        if (idx.size() != rank()) throw DimensionError("index rank mismatch for shape " + shape_str(shape_));
        std::size_t off = 0;
        std::size_t axis = 0;
        for (auto i : idx) {
            if (i >= shape_[axis]) throw DimensionError("index out of range for shape " + shape_str(shape_));
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    /// Same storage, new shape. Element count must match.
    [[nodiscard]] Tensor reshaped(Shape shape) const
    {
        if (shape_size(shape) != size()) {
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        Tensor out = *this;
        out.shape_ = std::move(shape);
        return out;
    }

    [[nodiscard]] bool all_finite() const
    {
        return std::all_of(data_->begin(), data_->end(), [](T v) { return std::isfinite(v); });
    }

    void fill(T v) { std::fill(mutable_data().begin(), mutable_data().end(), v); }

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && *a.data_ == *b.data_;
    }

private:
    Shape shape_;
    std::shared_ptr<Storage> data_;
};

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b)
{
    if (a.shape() != b.shape()) {
        throw DimensionError("max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace cvit
