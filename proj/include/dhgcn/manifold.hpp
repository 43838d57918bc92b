#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dhgcn/errors.hpp"
#include "dhgcn/linalg.hpp"

namespace dhgcn {

/// Default boundary margin for clipping: points are kept at norm <= (1 - eps)/sqrt(|kappa|).
inline constexpr double kClipEps = 1e-5;
/// Default minimum norm for clipping.
inline constexpr double kClipMinNorm = 1e-15;
/// Threshold below which exp/log/scalar multiplication take their removable-singularity branch.
inline constexpr double kZeroNorm = 1e-12;

/// Negative sectional curvature of the model.
class Curvature {
public:
    explicit Curvature(double kappa = -1.0) : kappa_(kappa) {
        if (!std::isfinite(kappa) || !(kappa < 0.0)) {
            throw std::invalid_argument("Curvature: kappa must be finite and negative, got " +
                                        std::to_string(kappa));
        }
        sqrt_c_ = std::sqrt(-kappa);
    }

    double kappa() const noexcept { return kappa_; }
    /// |kappa|
    double c() const noexcept { return -kappa_; }
    double sqrt_c() const noexcept { return sqrt_c_; }
    /// Radius 1/sqrt(|kappa|) of the open ball.
    double radius() const noexcept { return 1.0 / sqrt_c_; }
    /// Largest norm a clipped point may have.
    double max_norm(double eps = kClipEps) const noexcept { return (1.0 - eps) / sqrt_c_; }

    friend bool operator==(const Curvature& a, const Curvature& b) noexcept {
        return a.kappa_ == b.kappa_;
    }

private:
    double kappa_;
    double sqrt_c_;
};

namespace detail {

inline void require_same_curvature(const Curvature& a, const Curvature& b, const char* what) {
    if (!(a == b)) {
        throw curvature_mismatch(std::string(what) + ": curvature mismatch (" +
                                 std::to_string(a.kappa()) + " vs " + std::to_string(b.kappa()) +
                                 ")");
    }
}

inline void require_finite(std::span<const double> v, const char* what) {
    if (!la::all_finite(v)) throw numeric_fault(std::string(what) + ": non-finite component");
}

}  // namespace detail

/// tanh(s)/s, continuous at 0.
inline double tanhc(double s) noexcept {
    const double s2 = s * s;
    if (std::abs(s) < 1e-3) return 1.0 - s2 / 3.0 + 2.0 * s2 * s2 / 15.0 - 17.0 * s2 * s2 * s2 / 315.0;
    return std::tanh(s) / s;
}

/// d/ds tanhc(s)
inline double tanhc_deriv(double s) noexcept {
    const double s2 = s * s;
    if (std::abs(s) < 1e-3) return s * (-2.0 / 3.0 + 8.0 * s2 / 15.0 - 102.0 * s2 * s2 / 315.0);
    const double t = std::tanh(s);
    return ((1.0 - t * t) * s - t) / s2;
}

/// atanh(s)/s, continuous at 0. Arguments are clamped to |s| <= 1 - 1e-16.
inline double atanhc(double s) noexcept {
    const double s2 = s * s;
    if (std::abs(s) < 1e-3) return 1.0 + s2 / 3.0 + s2 * s2 / 5.0 + s2 * s2 * s2 / 7.0;
    constexpr double lim = 1.0 - 1e-16;
    const double t = std::clamp(s, -lim, lim);
    return std::atanh(t) / s;
}

/// d/ds atanhc(s) for |s| < 1.
inline double atanhc_deriv(double s) noexcept {
    const double s2 = s * s;
    if (std::abs(s) < 1e-3) return s * (2.0 / 3.0 + 4.0 * s2 / 5.0 + 6.0 * s2 * s2 / 7.0);
    return (s / (1.0 - s2) - std::atanh(s)) / s2;
}

/// Norm that does not underflow for tiny components.
inline double safe_norm(std::span<const double> x) noexcept {
    double q = 0.0;
    for (double v : x) q += v * v;
    // the plain sum is exact enough unless it over- or underflowed
    if (q > 1e-280 && q < 1e280) return std::sqrt(q);
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    if (m == 0.0) return 0.0;
    double s = 0.0;
    for (double v : x) s += (v / m) * (v / m);
    return m * std::sqrt(s);
}

/// Span-level kernels. Inputs are assumed to be valid ball points for the given kappa;
/// outputs are not clipped. The typed API below wraps these.
namespace raw {

inline Vector mobius_add(std::span<const double> x, std::span<const double> y, double kappa) {
    detail::require_same_dim(x.size(), y.size(), "mobius_add");
    const double xy = la::dot(x, y);
    const double x2 = la::sqnorm(x);
    const double y2 = la::sqnorm(y);
    const double a = 1.0 - 2.0 * kappa * xy - kappa * y2;
    const double b = 1.0 + kappa * x2;
    const double den = 1.0 - 2.0 * kappa * xy + kappa * kappa * x2 * y2;
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (a * x[i] + b * y[i]) / den;
    return out;
}

inline Vector negate(std::span<const double> x) { return la::scaled(x, -1.0); }

inline double conformal_factor(std::span<const double> x, double kappa) noexcept {
    return 2.0 / (1.0 + kappa * la::sqnorm(x));
}

inline Vector exp0(std::span<const double> v, double kappa) {
    const double sc = std::sqrt(-kappa);
    return la::scaled(v, tanhc(sc * la::norm(v)));
}

inline Vector log0(std::span<const double> x, double kappa) {
    const double sc = std::sqrt(-kappa);
    return la::scaled(x, atanhc(sc * la::norm(x)));
}

inline Vector exp_map(std::span<const double> x, std::span<const double> v, double kappa) {
    detail::require_same_dim(x.size(), v.size(), "exp_map");
    const double vn = la::norm(v);
    if (vn < kZeroNorm) return Vector(x.begin(), x.end());
    const double sc = std::sqrt(-kappa);
    const double lam = conformal_factor(x, kappa);
    Vector step = la::scaled(v, 0.5 * lam * tanhc(0.5 * sc * lam * vn));
    return mobius_add(x, step, kappa);
}

inline Vector log_map(std::span<const double> x, std::span<const double> y, double kappa) {
    detail::require_same_dim(x.size(), y.size(), "log_map");
    Vector u = mobius_add(negate(x), y, kappa);
    const double un = la::norm(u);
    if (un < kZeroNorm) return Vector(x.size(), 0.0);
    const double sc = std::sqrt(-kappa);
    const double lam = conformal_factor(x, kappa);
    for (double& v : u) v *= (2.0 / lam) * atanhc(sc * un);
    return u;
}

inline Vector scalar_mul(double r, std::span<const double> x, double kappa) {
    const double xn = la::norm(x);
    if (xn < kZeroNorm) return la::scaled(x, r);
    const double sc = std::sqrt(-kappa);
    const double a = std::atanh(std::min(sc * xn, 1.0 - 1e-16));
    return la::scaled(x, std::tanh(r * a) / (sc * xn));
}

inline Vector matvec_mul(const Matrix& m, std::span<const double> x, double kappa) {
    return exp0(la::matvec(m, log0(x, kappa)), kappa);
}

inline double distance(std::span<const double> x, std::span<const double> y, double kappa) {
    const double sc = std::sqrt(-kappa);
    const double un = la::norm(mobius_add(negate(x), y, kappa));
    return 2.0 * un * atanhc(sc * un);
}

/// gyr[u, v] w in closed form; linear in w.
inline Vector gyration(std::span<const double> u, std::span<const double> v,
                       std::span<const double> w, double kappa) {
    detail::require_same_dim(u.size(), v.size(), "gyration");
    detail::require_same_dim(u.size(), w.size(), "gyration");
    const double u2 = la::sqnorm(u), v2 = la::sqnorm(v);
    const double uv = la::dot(u, v), uw = la::dot(u, w), vw = la::dot(v, w);
    const double k2 = kappa * kappa;
    const double a = -k2 * uw * v2 - kappa * vw + 2.0 * k2 * uv * vw;
    const double b = -k2 * vw * u2 + kappa * uw;
    const double d = 1.0 - 2.0 * kappa * uv + k2 * u2 * v2;
    Vector out(w.begin(), w.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += 2.0 * (a * u[i] + b * v[i]) / d;
    return out;
}

inline Vector parallel_transport(std::span<const double> x, std::span<const double> y,
                                 std::span<const double> v, double kappa) {
    Vector g = gyration(y, negate(x), v, kappa);
    const double s = conformal_factor(x, kappa) / conformal_factor(y, kappa);
    for (double& e : g) e *= s;
    return g;
}

/// Writes x rescaled into the band [a, (1 - eps)/sqrt(|kappa|)] to out (which must not alias x).
/// The zero vector is left unchanged.
inline void clip_into(std::span<const double> x, std::span<double> out, double kappa, double a = kClipMinNorm,
                      double eps = kClipEps) {
    detail::require_finite(x, "clip");
    const double n = safe_norm(x);
    const double hi = (1.0 - eps) / std::sqrt(-kappa);
    double s = 1.0;
    if (n > hi) {
        s = hi / n;
        // rounding can leave the result one ulp outside the band
        for (;;) {
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
            if (safe_norm(out) <= hi) return;
            s *= 1.0 - std::numeric_limits<double>::epsilon();
        }
    }
    if (n > 0.0 && n < a) s = a / n;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
}

/// Rescales x into the band [a, (1 - eps)/sqrt(|kappa|)]. The zero vector is returned unchanged.
inline Vector clip(std::span<const double> x, double kappa, double a = kClipMinNorm,
                   double eps = kClipEps) {
    Vector out(x.size());
    clip_into(x, out, kappa, a, eps);
    return out;
}

inline double lorentz_inner(std::span<const double> x, std::span<const double> y) {
    detail::require_same_dim(x.size(), y.size(), "lorentz_inner");
    if (x.empty()) throw dimension_error("lorentz_inner: empty vector");
    double s = -x[0] * y[0];
    for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

/// Geodesic distance on the hyperboloid, evaluated through the Minkowski norm of x - y
/// so that coincident points give exactly zero.
inline double lorentz_distance(std::span<const double> x, std::span<const double> y,
                               double kappa) {
    detail::require_same_dim(x.size(), y.size(), "lorentz_distance");
    Vector diff = la::sub(x, y);
    const double q = std::max(lorentz_inner(diff, diff), 0.0);
    const double sc = std::sqrt(-kappa);
    return 2.0 / sc * std::asinh(0.5 * sc * std::sqrt(q));
}

/// Hyperboloid (time, space...) to ball.
inline Vector project_L_to_D(std::span<const double> z, double kappa) {
    if (z.empty()) throw dimension_error("project_L_to_D: empty vector");
    const double sc = std::sqrt(-kappa);
    return la::scaled(z.subspan(1), 1.0 / (1.0 + sc * z[0]));
}

/// Ball to hyperboloid (time, space...).
inline Vector project_D_to_L(std::span<const double> x, double kappa) {
    const double x2 = la::sqnorm(x);
    const double sc = std::sqrt(-kappa);
    const double den = 1.0 + kappa * x2;
    Vector out(x.size() + 1);
    out[0] = (1.0 - kappa * x2) / (sc * den);
    for (std::size_t i = 0; i < x.size(); ++i) out[i + 1] = 2.0 * x[i] / den;
    return out;
}

}  // namespace raw

/// Point of the open Poincare ball of radius 1/sqrt(|kappa|).
class PoincarePoint {
public:
    /// Validates finiteness and strict ball membership; does not clip.
    PoincarePoint(Vector coords, Curvature k) : coords_(std::move(coords)), k_(k) {
        detail::require_finite(coords_, "PoincarePoint");
        if (!(la::norm(coords_) < k_.radius())) {
            throw std::invalid_argument("PoincarePoint: norm " + std::to_string(la::norm(coords_)) +
                                        " outside ball of radius " + std::to_string(k_.radius()));
        }
    }

    /// Builds a point from arbitrary finite coordinates by clipping them into the ball.
    static PoincarePoint clipped(std::span<const double> raw_coords, Curvature k) {
        return PoincarePoint(raw::clip(raw_coords, k.kappa()), k, Trusted{});
    }

    static PoincarePoint origin(std::size_t dim, Curvature k) {
        return PoincarePoint(Vector(dim, 0.0), k, Trusted{});
    }

    const Vector& coords() const noexcept { return coords_; }
    std::span<const double> span() const noexcept { return coords_; }
    const Curvature& curvature() const noexcept { return k_; }
    std::size_t dim() const noexcept { return coords_.size(); }
    double norm() const noexcept { return la::norm(coords_); }

private:
    struct Trusted {};
    PoincarePoint(Vector coords, Curvature k, Trusted) : coords_(std::move(coords)), k_(k) {}

    Vector coords_;
    Curvature k_;
};

/// N points of one ball, stored as the rows of a matrix.
class PoincareBatch {
public:
    /// Validates every row; does not clip.
    PoincareBatch(Matrix rows, Curvature k) : rows_(std::move(rows)), k_(k) {
        detail::require_finite(rows_.data(), "PoincareBatch");
        for (std::size_t i = 0; i < rows_.rows(); ++i) {
            if (!(la::norm(rows_.row(i)) < k_.radius())) {
                throw std::invalid_argument("PoincareBatch: row " + std::to_string(i) +
                                            " outside the ball");
            }
        }
    }

    /// Clips every row into the ball.
    static PoincareBatch clipped(const Matrix& raw_rows, Curvature k) {
        Matrix out(raw_rows.rows(), raw_rows.cols());
        for (std::size_t i = 0; i < raw_rows.rows(); ++i) {
            Vector r = raw::clip(raw_rows.row(i), k.kappa());
            std::copy(r.begin(), r.end(), out.row(i).begin());
        }
        return PoincareBatch(std::move(out), k, Trusted{});
    }

    std::size_t size() const noexcept { return rows_.rows(); }
    std::size_t dim() const noexcept { return rows_.cols(); }
    const Matrix& matrix() const noexcept { return rows_; }
    const Curvature& curvature() const noexcept { return k_; }
    std::span<const double> row(std::size_t i) const noexcept { return rows_.row(i); }
    PoincarePoint point(std::size_t i) const {
        return PoincarePoint(Vector(rows_.row(i).begin(), rows_.row(i).end()), k_);
    }

private:
    struct Trusted {};
    PoincareBatch(Matrix rows, Curvature k, Trusted) : rows_(std::move(rows)), k_(k) {}

    Matrix rows_;
    Curvature k_;
};

/// Tangent vector attached to a ball point.
class TangentVector {
public:
    TangentVector(Vector coords, PoincarePoint base) : coords_(std::move(coords)), base_(std::move(base)) {
        detail::require_finite(coords_, "TangentVector");
        detail::require_same_dim(coords_.size(), base_.dim(), "TangentVector");
    }

    const Vector& coords() const noexcept { return coords_; }
    std::span<const double> span() const noexcept { return coords_; }
    const PoincarePoint& base() const noexcept { return base_; }
    std::size_t dim() const noexcept { return coords_.size(); }
    double norm() const noexcept { return la::norm(coords_); }
    /// Norm under the Riemannian metric at the base point.
    double metric_norm() const noexcept {
        return raw::conformal_factor(base_.span(), base_.curvature().kappa()) * norm();
    }

private:
    Vector coords_;
    PoincarePoint base_;
};

/// Point on the upper sheet of the hyperboloid <x,x>_L = 1/kappa.
class LorentzPoint {
public:
    LorentzPoint(double time, Vector space, Curvature k)
        : time_(time), space_(std::move(space)), k_(k) {
        if (!std::isfinite(time_)) throw numeric_fault("LorentzPoint: non-finite time");
        detail::require_finite(space_, "LorentzPoint");
        if (!(time_ > 0.0)) throw std::invalid_argument("LorentzPoint: time must be positive");
        if (membership_error() > kTolerance) {
            throw std::invalid_argument("LorentzPoint: off the hyperboloid by " +
                                        std::to_string(membership_error()));
        }
    }

    /// Recomputes the time coordinate from the spatial part.
    static LorentzPoint lift(Vector space, Curvature k) {
        const double t = std::sqrt(la::sqnorm(space) + 1.0 / k.c());
        return LorentzPoint(t, std::move(space), k);
    }

    static LorentzPoint origin(std::size_t dim, Curvature k) {
        return LorentzPoint(k.radius(), Vector(dim, 0.0), k);
    }

    double time() const noexcept { return time_; }
    const Vector& space() const noexcept { return space_; }
    const Curvature& curvature() const noexcept { return k_; }
    std::size_t dim() const noexcept { return space_.size(); }

    /// (time, space...) as one vector of length dim + 1.
    Vector coords() const {
        Vector out(space_.size() + 1);
        out[0] = time_;
        std::copy(space_.begin(), space_.end(), out.begin() + 1);
        return out;
    }

    /// |c <x,x>_L + 1| scaled by the magnitude of the terms involved.
    double membership_error() const noexcept {
        const double t2 = time_ * time_;
        const double inner = -t2 + la::sqnorm(space_);
        return std::abs(k_.c() * inner + 1.0) / std::max(1.0, k_.c() * t2);
    }

    static constexpr double kTolerance = 1e-9;

private:
    double time_;
    Vector space_;
    Curvature k_;
};

/// Tangent vector at a hyperboloid point, stored as (time, space...).
class LorentzTangent {
public:
    LorentzTangent(Vector coords, LorentzPoint base) : coords_(std::move(coords)), base_(std::move(base)) {
        detail::require_finite(coords_, "LorentzTangent");
        detail::require_same_dim(coords_.size(), base_.dim() + 1, "LorentzTangent");
        const Vector b = base_.coords();
        const double scale = std::max(1.0, la::norm(b) * la::norm(coords_));
        if (std::abs(raw::lorentz_inner(b, coords_)) > 1e-9 * scale) {
            throw std::invalid_argument("LorentzTangent: vector not orthogonal to base");
        }
    }

    const Vector& coords() const noexcept { return coords_; }
    const LorentzPoint& base() const noexcept { return base_; }

private:
    Vector coords_;
    LorentzPoint base_;
};

// ---- Poincare ball ----

inline PoincarePoint mobius_add(const PoincarePoint& x, const PoincarePoint& y) {
    detail::require_same_dim(x.dim(), y.dim(), "mobius_add");
    detail::require_same_curvature(x.curvature(), y.curvature(), "mobius_add");
    return PoincarePoint::clipped(raw::mobius_add(x.span(), y.span(), x.curvature().kappa()),
                                  x.curvature());
}

inline PoincarePoint mobius_neg(const PoincarePoint& x) {
    return PoincarePoint(raw::negate(x.span()), x.curvature());
}

/// x (-) y = x (+) (-y)
inline PoincarePoint mobius_sub(const PoincarePoint& x, const PoincarePoint& y) {
    detail::require_same_dim(x.dim(), y.dim(), "mobius_sub");
    detail::require_same_curvature(x.curvature(), y.curvature(), "mobius_sub");
    return PoincarePoint::clipped(
        raw::mobius_add(x.span(), raw::negate(y.span()), x.curvature().kappa()), x.curvature());
}

inline double conformal_factor(const PoincarePoint& x) noexcept {
    return raw::conformal_factor(x.span(), x.curvature().kappa());
}

inline void require_based_at(const TangentVector& v, const PoincarePoint& x, const char* what) {
    detail::require_same_dim(v.dim(), x.dim(), what);
    detail::require_same_curvature(v.base().curvature(), x.curvature(), what);
    if (v.base().coords() != x.coords()) {
        throw std::invalid_argument(std::string(what) + ": tangent vector is based elsewhere");
    }
}

inline PoincarePoint exp_map(const PoincarePoint& x, const TangentVector& v) {
    require_based_at(v, x, "exp_map");
    return PoincarePoint::clipped(raw::exp_map(x.span(), v.span(), x.curvature().kappa()),
                                  x.curvature());
}

inline TangentVector log_map(const PoincarePoint& x, const PoincarePoint& y) {
    detail::require_same_dim(x.dim(), y.dim(), "log_map");
    detail::require_same_curvature(x.curvature(), y.curvature(), "log_map");
    return TangentVector(raw::log_map(x.span(), y.span(), x.curvature().kappa()), x);
}

/// exp_0 from raw tangent coordinates at the origin.
inline PoincarePoint exp0(std::span<const double> v, Curvature k) {
    detail::require_finite(v, "exp0");
    return PoincarePoint::clipped(raw::exp0(v, k.kappa()), k);
}

inline TangentVector log0(const PoincarePoint& x) {
    return TangentVector(raw::log0(x.span(), x.curvature().kappa()),
                         PoincarePoint::origin(x.dim(), x.curvature()));
}

/// r (x) x = exp_0(r log_0(x))
inline PoincarePoint scalar_mul(double r, const PoincarePoint& x) {
    if (!std::isfinite(r)) throw numeric_fault("scalar_mul: non-finite scalar");
    return PoincarePoint::clipped(raw::scalar_mul(r, x.span(), x.curvature().kappa()),
                                  x.curvature());
}

/// M (x) x = exp_0(M log_0(x))
inline PoincarePoint matvec_mul(const Matrix& m, const PoincarePoint& x) {
    detail::require_same_dim(m.cols(), x.dim(), "matvec_mul");
    detail::require_finite(m.data(), "matvec_mul");
    return PoincarePoint::clipped(raw::matvec_mul(m, x.span(), x.curvature().kappa()),
                                  x.curvature());
}

inline double poincare_distance(const PoincarePoint& x, const PoincarePoint& y) {
    detail::require_same_dim(x.dim(), y.dim(), "poincare_distance");
    detail::require_same_curvature(x.curvature(), y.curvature(), "poincare_distance");
    return raw::distance(x.span(), y.span(), x.curvature().kappa());
}

inline TangentVector parallel_transport(const PoincarePoint& x, const PoincarePoint& y,
                                        const TangentVector& v) {
    require_based_at(v, x, "parallel_transport");
    detail::require_same_dim(x.dim(), y.dim(), "parallel_transport");
    detail::require_same_curvature(x.curvature(), y.curvature(), "parallel_transport");
    return TangentVector(raw::parallel_transport(x.span(), y.span(), v.span(), x.curvature().kappa()), y);
}

inline PoincarePoint clip(std::span<const double> x, Curvature k, double a = kClipMinNorm,
                          double eps = kClipEps) {
    if (!(a > 0.0)) throw std::invalid_argument("clip: minimum norm must be positive");
    return PoincarePoint::clipped(raw::clip(x, k.kappa(), a, eps), k);
}

/// Componentwise max(x, 0); never increases the norm, so the result stays in the ball.
inline PoincarePoint manifold_relu(const PoincarePoint& x) {
    Vector out = x.coords();
    for (double& v : out) v = std::max(v, 0.0);
    return PoincarePoint(std::move(out), x.curvature());
}

// ---- Lorentz model ----

inline double lorentz_inner(std::span<const double> x, std::span<const double> y) {
    return raw::lorentz_inner(x, y);
}

inline double lorentz_inner(const LorentzPoint& x, const LorentzPoint& y) {
    detail::require_same_dim(x.dim(), y.dim(), "lorentz_inner");
    return -x.time() * y.time() + la::dot(x.space(), y.space());
}

inline double lorentz_distance(const LorentzPoint& x, const LorentzPoint& y) {
    detail::require_same_dim(x.dim(), y.dim(), "lorentz_distance");
    detail::require_same_curvature(x.curvature(), y.curvature(), "lorentz_distance");
    return raw::lorentz_distance(x.coords(), y.coords(), x.curvature().kappa());
}

inline PoincarePoint project_L_to_D(const LorentzPoint& z) {
    return PoincarePoint::clipped(raw::project_L_to_D(z.coords(), z.curvature().kappa()),
                                  z.curvature());
}

inline LorentzPoint project_D_to_L(const PoincarePoint& x) {
    Vector z = raw::project_D_to_L(x.span(), x.curvature().kappa());
    const double t = z[0];
    z.erase(z.begin());
    return LorentzPoint(t, std::move(z), x.curvature());
}

/// Projects an ambient vector onto the tangent space at x.
inline LorentzTangent lorentz_tangent(const LorentzPoint& x, std::span<const double> ambient) {
    const Vector b = x.coords();
    detail::require_same_dim(ambient.size(), b.size(), "lorentz_tangent");
    const double s = x.curvature().kappa() * raw::lorentz_inner(b, ambient);
    Vector out(ambient.begin(), ambient.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= s * b[i];
    return LorentzTangent(std::move(out), x);
}

inline LorentzPoint lorentz_exp_map(const LorentzPoint& x, const LorentzTangent& v) {
    detail::require_same_curvature(x.curvature(), v.base().curvature(), "lorentz_exp_map");
    detail::require_same_dim(x.dim(), v.base().dim(), "lorentz_exp_map");
    const Vector b = x.coords();
    const Vector& vc = v.coords();
    const double vn = std::sqrt(std::max(raw::lorentz_inner(vc, vc), 0.0));
    const double theta = x.curvature().sqrt_c() * vn;
    const double sinhc = theta < 1e-8 ? 1.0 + theta * theta / 6.0 : std::sinh(theta) / theta;
    const double ch = std::cosh(theta);
    Vector space(x.dim());
    for (std::size_t i = 0; i < space.size(); ++i) space[i] = ch * b[i + 1] + sinhc * vc[i + 1];
    return LorentzPoint::lift(std::move(space), x.curvature());
}

inline LorentzTangent lorentz_log_map(const LorentzPoint& x, const LorentzPoint& y) {
    detail::require_same_curvature(x.curvature(), y.curvature(), "lorentz_log_map");
    detail::require_same_dim(x.dim(), y.dim(), "lorentz_log_map");
    const Vector b = x.coords();
    const Vector yc = y.coords();
    const double kappa = x.curvature().kappa();
    const double alpha = kappa * raw::lorentz_inner(b, yc);
    const double theta = x.curvature().sqrt_c() * raw::lorentz_distance(b, yc, kappa);
    const double scale = theta < 1e-8 ? 1.0 : theta / std::sinh(theta);
    Vector u(b.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = scale * (yc[i] - alpha * b[i]);
    return lorentz_tangent(x, u);
}

inline LorentzTangent lorentz_parallel_transport(const LorentzPoint& x, const LorentzPoint& y,
                                                 const LorentzTangent& v) {
    detail::require_same_curvature(x.curvature(), y.curvature(), "lorentz_parallel_transport");
    detail::require_same_dim(x.dim(), y.dim(), "lorentz_parallel_transport");
    const double kappa = x.curvature().kappa();
    const Vector xc = x.coords();
    const Vector yc = y.coords();
    const Vector& vc = v.coords();
    const double s = kappa * raw::lorentz_inner(yc, vc) / (1.0 + kappa * raw::lorentz_inner(xc, yc));
    Vector out(vc.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vc[i] - s * (xc[i] + yc[i]);
    return lorentz_tangent(y, out);
}

}  // namespace dhgcn
