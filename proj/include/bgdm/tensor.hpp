#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "bgdm/errors.hpp"

namespace bgdm {

using cdouble = std::complex<double>;

template <class T>
inline constexpr bool is_complex_v = std::is_same_v<T, cdouble>;

/// Dense row-major n-d array over double or complex<double>. Value-semantic;
/// all arithmetic requires exact shape agreement (no broadcasting).
template <class T>
class Tensor {
    static_assert(std::is_same_v<T, double> || std::is_same_v<T, cdouble>);

public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), T{}) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size())
            throw shape_error("tensor data length does not match shape");
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// 2-d element access (row, col); valid only for rank-2 tensors.
    T& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void require_same_shape(const Tensor& o, const char* what) const {
        if (!same_shape(o)) throw shape_error(std::string(what) + ": shape mismatch");
    }

    bool all_finite() const {
        for (const T& v : data_)
            if (!finite_value(v)) return false;
        return true;
    }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same_shape(o, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (T& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, T s) { return a *= s; }
    friend Tensor operator*(T s, Tensor a) { return a *= s; }

    friend Tensor hadamard(Tensor a, const Tensor& b) {
        a.require_same_shape(b, "hadamard");
        for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] *= b.data_[i];
        return a;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>());
    }

private:
    static bool finite_value(double v) { return std::isfinite(v); }
    static bool finite_value(const cdouble& v) {
        return std::isfinite(v.real()) && std::isfinite(v.imag());
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using RTensor = Tensor<double>;
using CTensor = Tensor<cdouble>;

template <class T>
inline double norm2(const Tensor<T>& t) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += std::norm(std::complex<double>(t[i]));
    return std::sqrt(s);
}

/// Real inner product <a, b> = Re sum conj(a_i) b_i; the standard inner
/// product when complex tensors are viewed as pairs of real coordinates.
template <class T>
inline double dot_real(const Tensor<T>& a, const Tensor<T>& b) {
    a.require_same_shape(b, "dot_real");
    double s = 0;
    if constexpr (is_complex_v<T>) {
        for (std::size_t i = 0; i < a.size(); ++i)
            s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    } else {
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    }
    return s;
}

inline CTensor to_complex(const RTensor& x) {
    CTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = cdouble(x[i], 0.0);
    return out;
}

inline RTensor real_part(const CTensor& x) {
    RTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].real();
    return out;
}

inline RTensor magnitude(const CTensor& x) {
    RTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
    return out;
}

inline RTensor magnitude(const RTensor& x) {
    RTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
    return out;
}

}  // namespace bgdm
