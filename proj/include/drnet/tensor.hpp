#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "drnet/error.hpp"
#include "drnet/rng.hpp"

namespace drnet {

// (batch, channels, height, width)
struct Shape {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    friend bool operator==(const Shape&, const Shape&) = default;

    std::size_t spatial() const { return h * w; }
    std::string str() const;
};

// Product of the four extents; throws ShapeError on overflow.
std::size_t element_count(const Shape& s);

// Dense row-major rank-4 array. float for training, double for gradient checks.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(element_count(shape), fill) {}
    Tensor(Shape shape, std::vector<T> values);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    std::size_t index(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return ((b * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) { return data_[index(b, c, y, x)]; }
    T at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const { return data_[index(b, c, y, x)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    // Pointer to the (b, c) plane.
    T* plane(std::size_t b, std::size_t c) { return data_.data() + (b * shape_.c + c) * shape_.spatial(); }
    const T* plane(std::size_t b, std::size_t c) const {
        return data_.data() + (b * shape_.c + c) * shape_.spatial();
    }

    // Same data, new shape of equal element count.
    Tensor reshaped(Shape shape) const;

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_{};
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != element_count(shape_))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_.str());
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (element_count(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, data_);
}

template <typename T>
Tensor<T> zeros(Shape shape) {
    return Tensor<T>(shape, T(0));
}

template <typename T>
Tensor<T> ones(Shape shape) {
    return Tensor<T>(shape, T(1));
}

template <typename T>
Tensor<T> rng_normal(Rng& rng, Shape shape, double mean, double std) {
    if (!(std >= 0.0)) throw ArgumentError("rng_normal: std must be >= 0");
    Tensor<T> out(shape);
    for (auto& v : out.values()) v = static_cast<T>(rng.normal(mean, std));
    return out;
}

template <typename T>
Tensor<T> rng_uniform(Rng& rng, Shape shape, double lo, double hi) {
    Tensor<T> out(shape);
    for (auto& v : out.values()) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
    return out;
}

template <typename T>
bool all_finite(std::span<const T> v) {
    for (T x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
    if (!all_finite(t.values())) throw NumericError(std::string(what) + ": non-finite value");
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
Tensor<T> ew_add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "ew_add");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    require_finite(out, "ew_add");
    return out;
}

template <typename T>
Tensor<T> ew_mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "ew_mul");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    require_finite(out, "ew_mul");
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double c) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * static_cast<T>(c);
    require_finite(out, "scale");
    return out;
}

// In-place a += b.
template <typename T>
void accumulate(Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "accumulate");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// Class index per batch element for (B, 2, 1, 1) logits. Ties go to 0.
template <typename T>
std::vector<int> argmax_channel(const Tensor<T>& t) {
    const Shape& s = t.shape();
    if (s.c != 2 || s.h != 1 || s.w != 1)
        throw ShapeError("argmax_channel expects (B, 2, 1, 1) logits, got " + s.str());
    std::vector<int> out(s.n);
    for (std::size_t b = 0; b < s.n; ++b) out[b] = t[2 * b + 1] > t[2 * b] ? 1 : 0;
    return out;
}

}  // namespace drnet
