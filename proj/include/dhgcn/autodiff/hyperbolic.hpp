#pragma once

#include <cmath>
#include <memory>

#include "dhgcn/autodiff/tensor.hpp"
#include "dhgcn/manifold.hpp"
#include "dhgcn/sparse.hpp"

// Row-batched Poincare ball operations on tensors. Every row of an N x d tensor is one point
// (or one tangent vector at the origin).
namespace dhgcn::ad {

/// Conformal factor per row, N x 1.
inline Tensor conformal_factor(const Tensor& x, const Curvature& k) {
    return 2.0 / (1.0 + k.kappa() * row_sqnorm(x));
}

inline Tensor expmap0(const Tensor& v, const Curvature& k) {
    return mul(v, tanhc(k.sqrt_c() * row_norm(v)));
}

inline Tensor logmap0(const Tensor& x, const Curvature& k) {
    return mul(x, atanhc(k.sqrt_c() * row_norm(x)));
}

/// Rowwise Mobius addition; y may be a single row broadcast against x (or vice versa).
inline Tensor mobius_add(const Tensor& x, const Tensor& y, const Curvature& k) {
    const double kappa = k.kappa();
    const std::size_t rows = std::max(x.rows(), y.rows());
    Tensor xb = x.rows() == rows ? x : broadcast_to(x, rows, x.cols());
    Tensor yb = y.rows() == rows ? y : broadcast_to(y, rows, y.cols());
    Tensor xy = row_dot(xb, yb);
    Tensor x2 = row_sqnorm(xb);
    Tensor y2 = row_sqnorm(yb);
    Tensor cx = 1.0 - 2.0 * kappa * xy - kappa * y2;
    Tensor cy = 1.0 + kappa * x2;
    Tensor den = 1.0 - 2.0 * kappa * xy + (kappa * kappa) * mul(x2, y2);
    return div(mul(cx, xb) + mul(cy, yb), den);
}

/// Squared geodesic distance per row, N x 1. Smooth at coincident points.
inline Tensor sqdist(const Tensor& x, const Tensor& y, const Curvature& k) {
    Tensor u = mobius_add(neg(x), y, k);
    Tensor a = atanhc(k.sqrt_c() * row_norm(u));
    return 4.0 * mul(row_sqnorm(u), mul(a, a));
}

/// (1/2) (x) y per row in closed form.
inline Tensor half_scale(const Tensor& y, const Curvature& k) {
    Tensor q = clamp(1.0 + k.kappa() * row_sqnorm(y), 0.0, 1.0);
    return div(y, 1.0 + sqrt(q));
}

/// Row i is the gyromidpoint of the rows of h weighted by row i of adj. Every row of adj
/// needs positive mass.
inline Tensor gyromidpoint_aggregate(const std::shared_ptr<const CsrMatrix>& adj,
                                     const std::shared_ptr<const CsrMatrix>& adj_abs, const Tensor& h,
                                     const Curvature& k) {
    Tensor lam = conformal_factor(h, k);
    Tensor num = spmm(adj, mul(lam, h));
    Tensor den = spmm(adj_abs, lam - 1.0);
    return clip_ball(half_scale(div(num, den), k), k.kappa());
}

/// Unweighted gyromidpoint of all rows, 1 x d.
inline Tensor gyromidpoint_rows(const Tensor& h, const Curvature& k) {
    Tensor lam = conformal_factor(h, k);
    Tensor num = col_sum(mul(lam, h));
    Tensor den = sum(lam - 1.0);
    return clip_ball(half_scale(div(num, den), k), k.kappa());
}

/// Rowwise two-point gyromidpoint with weights (w1, w2).
inline Tensor two_point_midpoint(const Tensor& h1, const Tensor& h2, double w1, double w2, const Curvature& k) {
    if (w1 == 0.0 && w2 == 0.0) throw degenerate_input("two_point_midpoint: both weights are zero");
    Tensor l1 = conformal_factor(h1, k);
    Tensor l2 = conformal_factor(h2, k);
    Tensor num = w1 * mul(l1, h1) + w2 * mul(l2, h2);
    Tensor den = std::abs(w1) * (l1 - 1.0) + std::abs(w2) * (l2 - 1.0);
    return clip_ball(half_scale(div(num, den), k), k.kappa());
}

/// exp_0(P log_0(h)) row-wise on the nodes: the Mobius matrix-vector product of P with h.
inline Tensor mobius_propagate(const std::shared_ptr<const CsrMatrix>& p, const Tensor& h, const Curvature& k) {
    return clip_ball(expmap0(spmm(p, logmap0(h, k)), k), k.kappa());
}

}  // namespace dhgcn::ad
