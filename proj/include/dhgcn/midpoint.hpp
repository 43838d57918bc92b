#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dhgcn/errors.hpp"
#include "dhgcn/manifold.hpp"
#include "dhgcn/sparse.hpp"

namespace dhgcn {

/// Points of one ball with one real weight each.
class WeightedPointSet {
public:
    WeightedPointSet(PoincareBatch points, Vector weights)
        : points_(std::move(points)), weights_(std::move(weights)) {
        detail::require_same_dim(points_.size(), weights_.size(), "WeightedPointSet");
        detail::require_finite(weights_, "WeightedPointSet");
    }

    /// All weights equal to one.
    explicit WeightedPointSet(PoincareBatch points)
        : WeightedPointSet(points, Vector(points.size(), 1.0)) {}

    const PoincareBatch& points() const noexcept { return points_; }
    const Vector& weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return weights_.size(); }
    std::size_t dim() const noexcept { return points_.dim(); }
    const Curvature& curvature() const noexcept { return points_.curvature(); }

private:
    PoincareBatch points_;
    Vector weights_;
};

namespace raw {

/// (1/2) (x) y in closed form: y / (1 + sqrt(1 - c |y|^2)).
inline void half_scale_inplace(std::span<double> y, double kappa) noexcept {
    const double q = std::max(0.0, 1.0 + kappa * la::sqnorm(y));
    const double s = 1.0 / (1.0 + std::sqrt(q));
    for (double& v : y) v *= s;
}

/// Accumulates the gyromidpoint numerator/denominator for one point.
inline void gyro_accumulate(std::span<double> num, double& den, std::span<const double> x,
                            double w, double kappa) noexcept {
    const double lam = conformal_factor(x, kappa);
    for (std::size_t j = 0; j < num.size(); ++j) num[j] += w * lam * x[j];
    den += std::abs(w) * (lam - 1.0);
}

}  // namespace raw

/// Weighted Mobius gyromidpoint.
inline PoincarePoint gyromidpoint(const WeightedPointSet& s) {
    const double kappa = s.curvature().kappa();
    Vector num(s.dim(), 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        raw::gyro_accumulate(num, den, s.points().row(i), s.weights()[i], kappa);
    if (!(den > 0.0)) throw degenerate_input("gyromidpoint: weights give a zero denominator");
    for (double& v : num) v /= den;
    raw::half_scale_inplace(num, kappa);
    return PoincarePoint::clipped(num, s.curvature());
}

/// exp_0 of the weighted mean of log_0 of the points.
inline PoincarePoint tangential_midpoint(const WeightedPointSet& s) {
    const double kappa = s.curvature().kappa();
    const double wsum = std::accumulate(s.weights().begin(), s.weights().end(), 0.0);
    if (wsum == 0.0) throw degenerate_input("tangential_midpoint: weights sum to zero");
    Vector acc(s.dim(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        Vector l = raw::log0(s.points().row(i), kappa);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += s.weights()[i] * l[j];
    }
    for (double& v : acc) v /= wsum;
    return PoincarePoint::clipped(raw::exp0(acc, kappa), s.curvature());
}

/// Weighted sum of squared distances from m to the points.
inline double frechet_objective(const WeightedPointSet& s, std::span<const double> m) {
    const double kappa = s.curvature().kappa();
    double f = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = raw::distance(m, s.points().row(i), kappa);
        f += s.weights()[i] * d * d;
    }
    return f;
}

struct FrechetResult {
    PoincarePoint point;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
};

/// Iterative Frechet mean (Karcher flow with backtracking). Starts at the origin and moves along
/// the weighted mean of log-mapped points. A step is accepted when it lowers the objective sufficiently (Armijo), or, when
/// the objective change is at round-off level, when it lowers the Riemannian norm of that mean
/// direction; otherwise it is halved. Stops when the Riemannian norm
/// of the update drops below tol.
inline FrechetResult frechet_mean_oracle(const WeightedPointSet& s, int max_iters = 1000,
                                         double tol = 1e-12) {
    if (max_iters < 1) throw std::invalid_argument("frechet_mean_oracle: max_iters must be >= 1");
    if (s.size() == 0) throw degenerate_input("frechet_mean_oracle: empty point set");
    const double kappa = s.curvature().kappa();
    const double wsum = std::accumulate(s.weights().begin(), s.weights().end(), 0.0);
    if (!(wsum > 0.0)) throw degenerate_input("frechet_mean_oracle: weights must sum to a positive value");

    auto direction = [&](std::span<const double> m, double& metric_norm) {
        Vector g(s.dim(), 0.0);
        for (std::size_t i = 0; i < s.size(); ++i) {
            Vector l = raw::log_map(m, s.points().row(i), kappa);
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += s.weights()[i] * l[j];
        }
        for (double& v : g) v /= wsum;
        metric_norm = raw::conformal_factor(m, kappa) * la::norm(g);
        return g;
    };

    Vector m(s.dim(), 0.0);
    double f = frechet_objective(s, m);
    double gnorm = 0.0;
    Vector g = direction(m, gnorm);
    double step = 1.0;
    FrechetResult res{PoincarePoint::origin(s.dim(), s.curvature())};
    for (int it = 0; it < max_iters; ++it) {
        bool accepted = false;
        while (step * gnorm >= tol) {
            Vector cand = raw::clip(raw::exp_map(m, la::scaled(g, step), kappa), kappa);
            const double fc = frechet_objective(s, cand);
            double gc_norm = 0.0;
            Vector gc = direction(cand, gc_norm);
            // once objective changes fall to round-off level, the direction norm decides
            const bool flat = std::abs(fc - f) <= 1e-13 * std::max(f, 1e-300);
            // sufficient decrease along g: the objective's slope there is -2 * wsum * gnorm^2
            const bool armijo = fc < f && fc <= f - 0.25 * step * 2.0 * wsum * gnorm * gnorm;
            if (armijo || (flat && gc_norm < gnorm)) {
                m = std::move(cand);
                f = fc;
                g = std::move(gc);
                gnorm = gc_norm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            res.converged = true;
            break;
        }
        res.iterations = it + 1;
        step = std::min(1.0, 2.0 * step);
    }
    res.point = PoincarePoint(m, s.curvature());
    res.objective = f;
    return res;
}

/// Row i of the result is the gyromidpoint of all rows of H weighted by row i of adj.
/// Rows of adj without positive mass map to the origin.
inline PoincareBatch aggregate(const CsrMatrix& adj, const PoincareBatch& h) {
    detail::require_same_dim(adj.rows(), h.size(), "aggregate");
    detail::require_same_dim(adj.cols(), h.size(), "aggregate");
    const double kappa = h.curvature().kappa();
    Matrix out(h.size(), h.dim());
    for (std::size_t i = 0; i < adj.rows(); ++i) {
        auto num = out.row(i);
        double den = 0.0;
        for (std::size_t k = adj.row_ptr()[i]; k < adj.row_ptr()[i + 1]; ++k) {
            const double w = adj.values()[k];
            if (w < 0.0) throw std::invalid_argument("aggregate: adjacency must be nonnegative");
            raw::gyro_accumulate(num, den, h.row(adj.col_idx()[k]), w, kappa);
        }
        if (den > 0.0) {
            for (double& v : num) v /= den;
            raw::half_scale_inplace(num, kappa);
        } else {
            std::fill(num.begin(), num.end(), 0.0);
        }
    }
    return PoincareBatch::clipped(out, h.curvature());
}

}  // namespace dhgcn
