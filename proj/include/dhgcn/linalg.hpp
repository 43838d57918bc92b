#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dhgcn/errors.hpp"

namespace dhgcn {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw dimension_error("Matrix: data length " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_));
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace la {

inline double dot(std::span<const double> a, std::span<const double> b) {
    detail::require_same_dim(a.size(), b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sqnorm(std::span<const double> a) noexcept {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

inline double norm(std::span<const double> a) noexcept { return std::sqrt(sqnorm(a)); }

inline Vector scaled(std::span<const double> a, double s) {
    Vector out(a.begin(), a.end());
    for (double& v : out) v *= s;
    return out;
}

/// a*x + b*y
inline Vector lincomb(double a, std::span<const double> x, double b, std::span<const double> y) {
    detail::require_same_dim(x.size(), y.size(), "lincomb");
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
}

inline Vector sub(std::span<const double> x, std::span<const double> y) { return lincomb(1.0, x, -1.0, y); }

inline Vector matvec(const Matrix& m, std::span<const double> x) {
    detail::require_same_dim(m.cols(), x.size(), "matvec");
    Vector out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) s += row[c] * x[c];
        out[r] = s;
    }
    return out;
}

inline bool all_finite(std::span<const double> a) noexcept {
    // branch-free so the loop vectorizes: an all-ones exponent marks inf or NaN
    constexpr std::uint64_t exp_mask = 0x7ff0000000000000ULL;
    std::uint64_t bad = 0;
    for (double v : a) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & exp_mask) == exp_mask);
    return bad == 0;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    detail::require_same_dim(a.size(), b.size(), "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace la
}  // namespace dhgcn
