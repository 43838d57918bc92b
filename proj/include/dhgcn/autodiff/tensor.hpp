#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dhgcn/errors.hpp"
#include "dhgcn/linalg.hpp"
#include "dhgcn/manifold.hpp"
#include "dhgcn/sparse.hpp"

namespace dhgcn::ad {

/// Storage shared between a Tensor handle and the tape records that reference it.
struct TensorImpl {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;

    std::span<double> grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

/// Dense 2-D tensor of doubles. Copies share storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) {}

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad = false)
        : impl_(std::make_shared<TensorImpl>()) {
        if (data.size() != rows * cols) {
            throw dimension_error("Tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
        }
        impl_->rows = rows;
        impl_->cols = cols;
        impl_->data = std::move(data);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
        return Tensor(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
    }
    static Tensor full(std::size_t rows, std::size_t cols, double v) {
        return Tensor(rows, cols, std::vector<double>(rows * cols, v));
    }
    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor(1, 1, {v}, requires_grad);
    }
    static Tensor from_matrix(const Matrix& m, bool requires_grad = false) {
        return Tensor(m.rows(), m.cols(), m.data(), requires_grad);
    }
    static Tensor column(const Vector& v) { return Tensor(v.size(), 1, v); }
    static Tensor row_vector(const Vector& v) { return Tensor(1, v.size(), v); }

    std::size_t rows() const noexcept { return impl_->rows; }
    std::size_t cols() const noexcept { return impl_->cols; }
    std::size_t size() const noexcept { return impl_->data.size(); }
    bool requires_grad() const noexcept { return impl_->requires_grad; }
    void set_requires_grad(bool on) noexcept { impl_->requires_grad = on; }

    std::span<const double> data() const noexcept { return impl_->data; }
    /// Mutable access for optimizers and initializers; never call while a tape references this tensor.
    std::span<double> mutable_data() noexcept { return impl_->data; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return impl_->data[r * impl_->cols + c]; }
    double item() const {
        if (size() != 1) throw dimension_error("Tensor::item: tensor is not 1x1");
        return impl_->data[0];
    }
    std::span<const double> row(std::size_t r) const noexcept {
        return {impl_->data.data() + r * impl_->cols, impl_->cols};
    }

    bool has_grad() const noexcept { return !impl_->grad.empty(); }
    /// Gradient; zeros if none was accumulated.
    std::vector<double> grad() const {
        return impl_->grad.empty() ? std::vector<double>(size(), 0.0) : impl_->grad;
    }
    void zero_grad() noexcept { impl_->grad.clear(); }

    Matrix to_matrix() const { return Matrix(rows(), cols(), impl_->data); }
    Tensor clone() const { return Tensor(rows(), cols(), impl_->data, requires_grad()); }
    /// Same values, no gradient tracking.
    Tensor detach() const { return Tensor(rows(), cols(), impl_->data, false); }

    const std::shared_ptr<TensorImpl>& impl() const noexcept { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// One recorded operation. `backward` reads the output gradient and accumulates into inputs.
struct Record {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void(std::span<const double>)> backward;
};

/// Ordered list of operation records. Records are appended in execution order, so every record's
/// inputs were produced before it.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void push(Record r) { records_.push_back(std::move(r)); }
    std::size_t size() const noexcept { return records_.size(); }
    const std::vector<Record>& records() const noexcept { return records_; }
    void clear() noexcept { records_.clear(); }

    /// Reverse sweep from a 1x1 loss. Gradients accumulate into every requires_grad tensor.
    void backward(const Tensor& loss) {
        if (loss.size() != 1) throw dimension_error("backward: loss must be a 1x1 tensor");
        if (!loss.requires_grad()) throw std::invalid_argument("backward: loss does not depend on any parameter");
        auto g = loss.impl()->grad_buffer();
        g[0] += 1.0;
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            if (it->output->grad.empty()) continue;
            it->backward(it->output->grad);
        }
    }

private:
    std::vector<Record> records_;
};

namespace detail {
inline thread_local Tape* active_tape = nullptr;
}

inline Tape* active_tape() noexcept { return detail::active_tape; }

/// Makes a tape the recording target for the current thread for the guard's lifetime.
class TapeGuard {
public:
    explicit TapeGuard(Tape& t) noexcept : prev_(detail::active_tape) { detail::active_tape = &t; }
    ~TapeGuard() { detail::active_tape = prev_; }
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

private:
    Tape* prev_;
};

/// Suspends recording for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard() noexcept : prev_(detail::active_tape) { detail::active_tape = nullptr; }
    ~NoGradGuard() { detail::active_tape = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape* prev_;
};

namespace detail {

using BackwardFn = std::function<void(std::span<const double>)>;

inline void check_finite(std::span<const double> v, const char* op) {
    if (!la::all_finite(v)) throw numeric_fault(std::string(op) + ": non-finite value produced");
}

/// Wraps freshly computed data as the output of `op`, recording it when any input tracks gradients
/// and a tape is active. `make_backward` is only invoked when recording.
template <class MakeBackward>
Tensor finish(const char* op, std::size_t rows, std::size_t cols, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, MakeBackward&& make_backward) {
    check_finite(data, op);
    bool track = false;
    for (const Tensor* t : inputs) track = track || t->requires_grad();
    Tape* tape = active_tape;
    track = track && tape != nullptr;
    Tensor out(rows, cols, std::move(data), track);
    if (track) {
        BackwardFn bwd;
        if constexpr (std::is_invocable_v<MakeBackward&, const TensorImpl*>)
            bwd = make_backward(static_cast<const TensorImpl*>(out.impl().get()));
        else
            bwd = make_backward();
        Record r{op, {}, out.impl(), std::move(bwd)};
        for (const Tensor* t : inputs) r.inputs.push_back(t->impl());
        tape->push(std::move(r));
    }
    return out;
}

inline void accumulate(const std::shared_ptr<TensorImpl>& t, std::size_t i, double v) {
    if (!t->requires_grad) return;
    t->grad_buffer()[i] += v;
}

struct Broadcast {
    std::size_t rows, cols;
    bool a_row_bc, a_col_bc, b_row_bc, b_col_bc;
};

inline Broadcast broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
    auto dim = [&](std::size_t x, std::size_t y) {
        if (x == y || y == 1) return x;
        if (x == 1) return y;
        throw dimension_error(std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()) + " do not broadcast");
    };
    Broadcast s{};
    s.rows = dim(a.rows(), b.rows());
    s.cols = dim(a.cols(), b.cols());
    s.a_row_bc = a.rows() != s.rows;
    s.a_col_bc = a.cols() != s.cols;
    s.b_row_bc = b.rows() != s.rows;
    s.b_col_bc = b.cols() != s.cols;
    return s;
}

/// Elementwise binary op with broadcasting. F(x, y) -> value; DF(x, y) -> {dz/dx, dz/dy}.
template <class F, class DF>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DF df) {
    const Broadcast s = broadcast_shape(a, b, op);
    const std::size_t ac = a.cols(), bc = b.cols();
    // per-row base offsets and per-column strides (0 when broadcast)
    const std::size_t sa = s.a_col_bc ? 0 : 1, sb = s.b_col_bc ? 0 : 1;
    auto row_a = [=](std::size_t r) { return (s.a_row_bc ? 0 : r) * ac; };
    auto row_b = [=](std::size_t r) { return (s.b_row_bc ? 0 : r) * bc; };
    std::vector<double> out(s.rows * s.cols);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    if (sa == 1 && sb == 1 && !s.a_row_bc && !s.b_row_bc) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i], bd[i]);
    } else {
        for (std::size_t r = 0; r < s.rows; ++r) {
            const double* pa = ad + row_a(r);
            const double* pb = bd + row_b(r);
            double* po = out.data() + r * s.cols;
            for (std::size_t c = 0; c < s.cols; ++c) po[c] = f(pa[c * sa], pb[c * sb]);
        }
    }
    return finish(op, s.rows, s.cols, std::move(out), {&a, &b}, [&]() -> BackwardFn {
        auto ai = a.impl(), bi = b.impl();
        return [ai, bi, s, sa, sb, row_a, row_b, df](std::span<const double> g) {
            const bool ta = ai->requires_grad, tb = bi->requires_grad;
            double* ga = ta ? ai->grad_buffer().data() : nullptr;
            double* gb = tb ? bi->grad_buffer().data() : nullptr;
            for (std::size_t r = 0; r < s.rows; ++r) {
                const std::size_t oa = row_a(r), ob = row_b(r);
                const double* pa = ai->data.data() + oa;
                const double* pb = bi->data.data() + ob;
                const double* pg = g.data() + r * s.cols;
                for (std::size_t c = 0; c < s.cols; ++c) {
                    const auto [dx, dy] = df(pa[c * sa], pb[c * sb]);
                    if (ta) ga[oa + c * sa] += pg[c] * dx;
                    if (tb) gb[ob + c * sb] += pg[c] * dy;
                }
            }
        };
    });
}

/// Elementwise unary op. F(x) -> value; DF(x, y) -> dy/dx.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
    std::vector<double> out(a.size());
    auto ad = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i]);
    return finish(op, a.rows(), a.cols(), std::move(out), {&a}, [&](const TensorImpl* y) -> BackwardFn {
        auto ai = a.impl();
        // y is owned by the same tape record as this closure
        return [ai, y, df](std::span<const double> g) {
            auto gi = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * df(ai->data[i], y->data[i]);
        };
    });
}

}  // namespace detail

// ---- elementwise arithmetic (broadcasting over rows/cols of size 1) ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary("add", a, b, [](double x, double y) { return x + y; },
                          [](double, double) { return std::pair{1.0, 1.0}; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary("sub", a, b, [](double x, double y) { return x - y; },
                          [](double, double) { return std::pair{1.0, -1.0}; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary("mul", a, b, [](double x, double y) { return x * y; },
                          [](double x, double y) { return std::pair{y, x}; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary("div", a, b, [](double x, double y) { return x / y; },
                          [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    return detail::unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
inline Tensor mul_scalar(const Tensor& a, double s) {
    return detail::unary("mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
/// s - a
inline Tensor rsub_scalar(double s, const Tensor& a) {
    return detail::unary("rsub_scalar", a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}
/// s / a
inline Tensor rdiv_scalar(double s, const Tensor& a) {
    return detail::unary("rdiv_scalar", a, [s](double x) { return s / x; },
                         [s](double x, double) { return -s / (x * x); });
}
inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return rsub_scalar(s, a); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return mul_scalar(a, 1.0 / s); }
inline Tensor operator/(double s, const Tensor& a) { return rdiv_scalar(s, a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- elementwise functions ----

inline Tensor sqrt(const Tensor& a) {
    for (double x : a.data())
        if (x < 0.0) throw numeric_fault("sqrt: negative argument " + std::to_string(x));
    // gradient at exactly zero is taken as zero
    return detail::unary("sqrt", a, [](double x) { return std::sqrt(x); },
                         [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary("tanh", a, [](double x) { return std::tanh(x); },
                         [](double, double y) { return 1.0 - y * y; });
}

inline constexpr double kAtanhClamp = 1.0 - 1e-12;

/// atanh with the argument clamped to [-(1 - 1e-12), 1 - 1e-12]; zero gradient where clamped.
inline Tensor atanh(const Tensor& a) {
    return detail::unary(
        "atanh", a, [](double x) { return std::atanh(std::clamp(x, -kAtanhClamp, kAtanhClamp)); },
        [](double x, double) { return std::abs(x) > kAtanhClamp ? 0.0 : 1.0 / (1.0 - x * x); });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    for (double x : a.data())
        if (!(x > 0.0)) throw numeric_fault("log: non-positive argument " + std::to_string(x));
    return detail::unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// log(1 + exp(x)), evaluated without overflow.
inline Tensor softplus(const Tensor& a) {
    return detail::unary(
        "softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

/// Clamp into [lo, hi]; gradient is zero outside the band.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    return detail::unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                         [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

/// tanh(x)/x, smooth through 0.
inline Tensor tanhc(const Tensor& a) {
    return detail::unary("tanhc", a, [](double x) { return dhgcn::tanhc(x); },
                         [](double x, double) { return dhgcn::tanhc_deriv(x); });
}

/// atanh(x)/x, smooth through 0; argument magnitude clamped at 1 - 1e-12 with zero gradient beyond.
inline Tensor atanhc(const Tensor& a) {
    return detail::unary(
        "atanhc", a,
        [](double x) {
            const double t = std::clamp(x, -kAtanhClamp, kAtanhClamp);
            return t == x ? dhgcn::atanhc(x) : std::atanh(t) / x;
        },
        [](double x, double) { return std::abs(x) > kAtanhClamp ? 0.0 : dhgcn::atanhc_deriv(x); });
}

// ---- linear algebra ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    dhgcn::detail::require_same_dim(a.cols(), b.rows(), "matmul");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    std::vector<double> out(n * m, 0.0);
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * bd[p * m + j];
        }
    return detail::finish("matmul", n, m, std::move(out), {&a, &b}, [&]() -> detail::BackwardFn {
        auto ai = a.impl(), bi = b.impl();
        return [ai, bi, n, k, m](std::span<const double> g) {
            if (ai->requires_grad) {
                auto ga = ai->grad_buffer();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * bi->data[p * m + j];
                        ga[i * k + p] += s;
                    }
            }
            if (bi->requires_grad) {
                auto gb = bi->grad_buffer();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = ai->data[i * k + p];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += av * g[i * m + j];
                    }
            }
        };
    });
}

/// a * b^T without materializing the transpose.
inline Tensor matmul_t(const Tensor& a, const Tensor& b) {
    dhgcn::detail::require_same_dim(a.cols(), b.cols(), "matmul_t");
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    std::vector<double> out(n * m, 0.0);
    auto ad = a.data();
    auto bd = b.data();
    // b is small (a weight); transposing it lets the inner loop run over contiguous output
    std::vector<double> bt(k * m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = bd[j * k + p];
    for (std::size_t i = 0; i < n; ++i) {
        double* po = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const double* pb = bt.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) po[j] += av * pb[j];
        }
    }
    return detail::finish("matmul_t", n, m, std::move(out), {&a, &b}, [&]() -> detail::BackwardFn {
        auto ai = a.impl(), bi = b.impl();
        return [ai, bi, n, k, m](std::span<const double> g) {
            if (ai->requires_grad) {
                auto ga = ai->grad_buffer();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        const double gv = g[i * m + j];
                        if (gv == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gv * bi->data[j * k + p];
                    }
            }
            if (bi->requires_grad) {
                auto gb = bi->grad_buffer();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        const double gv = g[i * m + j];
                        if (gv == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gv * ai->data[i * k + p];
                    }
            }
        };
    });
}

inline Tensor transpose(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    auto ad = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
    return detail::finish("transpose", c, r, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai, r, c](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
        };
    });
}

/// Sparse (constant) times dense.
inline Tensor spmm(std::shared_ptr<const CsrMatrix> s, const Tensor& b) {
    dhgcn::detail::require_same_dim(s->cols(), b.rows(), "spmm");
    const std::size_t n = s->rows(), m = b.cols();
    std::vector<double> out(n * m, 0.0);
    auto bd = b.data();
    const auto& rp = s->row_ptr();
    const auto& ci = s->col_idx();
    const auto& vals = s->values();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
            const double w = vals[k];
            const double* src = bd.data() + ci[k] * m;
            double* dst = out.data() + r * m;
            for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
        }
    return detail::finish("spmm", n, m, std::move(out), {&b}, [&]() -> detail::BackwardFn {
        auto bi = b.impl();
        return [s, bi, n, m](std::span<const double> g) {
            auto gb = bi->grad_buffer();
            const auto& rp = s->row_ptr();
            const auto& ci = s->col_idx();
            const auto& vals = s->values();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
                    const double w = vals[k];
                    double* dst = gb.data() + ci[k] * m;
                    const double* src = g.data() + r * m;
                    for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
                }
        };
    });
}

// ---- reductions ----

/// Sum of all entries, 1x1.
inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return detail::finish("sum", 1, 1, {s}, {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai](std::span<const double> g) {
            for (double& v : ai->grad_buffer()) v += g[0];
        };
    });
}

inline Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw degenerate_input("mean: empty tensor");
    return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size()));
}

/// Per-row sums, Rx1.
inline Tensor row_sum(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r, 0.0);
    auto ad = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += ad[i * c + j];
    return detail::finish("row_sum", r, 1, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai, r, c](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
        };
    });
}

/// Per-column sums, 1xC.
inline Tensor col_sum(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(c, 0.0);
    auto ad = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += ad[i * c + j];
    return detail::finish("col_sum", 1, c, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai, r, c](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
        };
    });
}

/// Per-row squared Euclidean norms, Rx1.
inline Tensor row_sqnorm(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r, 0.0);
    auto ad = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += ad[i * c + j] * ad[i * c + j];
    return detail::finish("row_sqnorm", r, 1, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai, r, c](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += 2.0 * g[i] * ai->data[i * c + j];
        };
    });
}

/// Per-row Euclidean norms, Rx1. Rows that are exactly zero get a zero gradient.
inline Tensor row_norm(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) out[i] = safe_norm(a.row(i));
    std::vector<double> saved = out;
    return detail::finish("row_norm", r, 1, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai, r, c, n = std::move(saved)](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < r; ++i) {
                if (n[i] == 0.0) continue;
                const double s = g[i] / n[i];
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += s * ai->data[i * c + j];
            }
        };
    });
}

/// Per-row dot products of two equally shaped tensors, Rx1.
inline Tensor row_dot(const Tensor& a, const Tensor& b) {
    return row_sum(mul(a, b));
}

// ---- shape manipulation ----

inline Tensor broadcast_to(const Tensor& a, std::size_t rows, std::size_t cols) {
    return add(a, Tensor::zeros(rows, cols));
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw degenerate_input("concat_rows: no inputs");
    const std::size_t c = parts.front().cols();
    std::size_t r = 0;
    for (const auto& p : parts) {
        dhgcn::detail::require_same_dim(p.cols(), c, "concat_rows");
        r += p.rows();
    }
    std::vector<double> out;
    out.reserve(r * c);
    bool track = false;
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        track = track || p.requires_grad();
    }
    detail::check_finite(out, "concat_rows");
    Tape* tape = active_tape();
    track = track && tape != nullptr;
    Tensor result(r, c, std::move(out), track);
    if (track) {
        Record rec{"concat_rows", {}, result.impl(), {}};
        std::vector<std::shared_ptr<TensorImpl>> ins;
        for (const auto& p : parts) ins.push_back(p.impl());
        rec.inputs = ins;
        rec.backward = [ins](std::span<const double> g) {
            std::size_t off = 0;
            for (const auto& p : ins) {
                if (p->requires_grad) {
                    auto gp = p->grad_buffer();
                    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
                }
                off += p->data.size();
            }
        };
        tape->push(std::move(rec));
    }
    return result;
}

/// Rows [start, start + count).
inline Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
    if (start + count > a.rows()) throw dimension_error("slice_rows: range exceeds tensor");
    const std::size_t c = a.cols();
    std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(start * c),
                            a.data().begin() + static_cast<std::ptrdiff_t>((start + count) * c));
    return detail::finish("slice_rows", count, c, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai, start, c](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[start * c + i] += g[i];
        };
    });
}

/// Rows picked by index (repeats allowed).
inline Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx) {
    const std::size_t c = a.cols();
    std::vector<double> out(idx.size() * c);
    auto ad = a.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.rows()) throw dimension_error("gather_rows: index out of range");
        std::copy_n(ad.begin() + static_cast<std::ptrdiff_t>(idx[i] * c), c, out.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    return detail::finish("gather_rows", idx.size(), c, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai, c, idx = std::move(idx)](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < c; ++j) ga[idx[i] * c + j] += g[i * c + j];
        };
    });
}

/// Entries (i, cols[i]) as an Rx1 column.
inline Tensor pick(const Tensor& a, std::vector<std::size_t> cols) {
    dhgcn::detail::require_same_dim(cols.size(), a.rows(), "pick");
    const std::size_t c = a.cols();
    std::vector<double> out(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] >= c) throw dimension_error("pick: column out of range");
        out[i] = a(i, cols[i]);
    }
    return detail::finish("pick", cols.size(), 1, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai, c, cols = std::move(cols)](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < cols.size(); ++i) ga[i * c + cols[i]] += g[i];
        };
    });
}

/// Per-row maximum as a constant (no gradient); used to stabilize softmax.
inline Tensor row_max_detached(const Tensor& a) {
    std::vector<double> out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        out[i] = r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
    }
    return Tensor(a.rows(), 1, std::move(out));
}

// ---- hyperbolic helpers ----

/// Clips every row into the ball of curvature kappa. The gradient passes straight through.
inline Tensor clip_ball(const Tensor& a, double kappa, double min_norm = kClipMinNorm,
                        double eps = kClipEps) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        raw::clip_into(a.row(i), std::span<double>(out.data() + i * c, c), kappa, min_norm, eps);
    return detail::finish("clip_ball", r, c, std::move(out), {&a}, [&]() -> detail::BackwardFn {
        auto ai = a.impl();
        return [ai](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    });
}

}  // namespace dhgcn::ad
