#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <tuple>
#include <vector>

#include "dhgcn/errors.hpp"
#include "dhgcn/linalg.hpp"

namespace dhgcn {

/// Compressed sparse row matrix. Column indices are sorted within each row.
class CsrMatrix {
public:
    struct Entry {
        std::size_t row;
        std::size_t col;
        double value;
    };

    CsrMatrix() = default;

    /// Duplicate (row, col) entries are summed.
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Entry> entries) {
        for (const auto& e : entries) {
            if (e.row >= rows || e.col >= cols) throw dimension_error("CsrMatrix: entry out of range");
        }
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        CsrMatrix m;
        m.rows_ = rows;
        m.cols_ = cols;
        m.row_ptr_.assign(rows + 1, 0);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!m.col_idx_.empty() && i > 0 && entries[i].row == entries[i - 1].row &&
                entries[i].col == entries[i - 1].col) {
                m.values_.back() += entries[i].value;
                continue;
            }
            m.col_idx_.push_back(entries[i].col);
            m.values_.push_back(entries[i].value);
            ++m.row_ptr_[entries[i].row + 1];
        }
        for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
        return m;
    }

    static CsrMatrix identity(std::size_t n) {
        std::vector<Entry> e;
        e.reserve(n);
        for (std::size_t i = 0; i < n; ++i) e.push_back({i, i, 1.0});
        return from_triplets(n, n, std::move(e));
    }

    static CsrMatrix from_dense(const Matrix& d) {
        std::vector<Entry> e;
        for (std::size_t r = 0; r < d.rows(); ++r)
            for (std::size_t c = 0; c < d.cols(); ++c)
                if (d(r, c) != 0.0) e.push_back({r, c, d(r, c)});
        return from_triplets(d.rows(), d.cols(), std::move(e));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nnz() const noexcept { return values_.size(); }

    const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
    const std::vector<std::size_t>& col_idx() const noexcept { return col_idx_; }
    const std::vector<double>& values() const noexcept { return values_; }

    /// Value at (r, c), zero if not stored.
    double at(std::size_t r, std::size_t c) const {
        auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
        auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
        auto it = std::lower_bound(first, last, c);
        if (it == last || *it != c) return 0.0;
        return values_[static_cast<std::size_t>(it - col_idx_.begin())];
    }

    CsrMatrix transpose() const {
        std::vector<Entry> e;
        e.reserve(nnz());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                e.push_back({col_idx_[k], r, values_[k]});
        return from_triplets(cols_, rows_, std::move(e));
    }

    /// Same pattern with absolute values.
    CsrMatrix abs() const {
        CsrMatrix m = *this;
        for (double& v : m.values_) v = std::abs(v);
        return m;
    }

    Matrix to_dense() const {
        Matrix d(rows_, cols_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(r, col_idx_[k]) = values_[k];
        return d;
    }

    /// this * dense
    Matrix multiply(const Matrix& x) const {
        detail::require_same_dim(cols_, x.rows(), "CsrMatrix::multiply");
        Matrix out(rows_, x.cols());
        for (std::size_t r = 0; r < rows_; ++r) {
            auto dst = out.row(r);
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
                const double w = values_[k];
                auto src = x.row(col_idx_[k]);
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
            }
        }
        return out;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> values_;
};

}  // namespace dhgcn
