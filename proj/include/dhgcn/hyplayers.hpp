#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dhgcn/autodiff/hyperbolic.hpp"
#include "dhgcn/autodiff/tensor.hpp"
#include "dhgcn/errors.hpp"
#include "dhgcn/manifold.hpp"
#include "dhgcn/midpoint.hpp"
#include "dhgcn/sampling.hpp"

namespace dhgcn {

/// Euclidean parameters of one ball-to-ball linear layer: weight is out x in, both biases have
/// length out. The time bias scales with the hyperboloid time coordinate of the input.
struct FcParams {
    Matrix weight;
    Vector bias_time;
    Vector bias_space;

    FcParams(Matrix w, Vector b1, Vector b2)
        : weight(std::move(w)), bias_time(std::move(b1)), bias_space(std::move(b2)) {
        detail::require_same_dim(weight.rows(), bias_time.size(), "FcParams");
        detail::require_same_dim(weight.rows(), bias_space.size(), "FcParams");
        detail::require_finite(weight.data(), "FcParams");
        detail::require_finite(bias_time, "FcParams");
        detail::require_finite(bias_space, "FcParams");
    }

    static FcParams zeros(std::size_t in, std::size_t out) {
        return FcParams(Matrix(out, in), Vector(out, 0.0), Vector(out, 0.0));
    }

    /// Glorot-uniform weight, zero biases.
    static FcParams glorot(std::size_t in, std::size_t out, Rng& rng) {
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-a, a);
        Matrix w(out, in);
        for (double& v : w.data()) v = u(rng);
        return FcParams(std::move(w), Vector(out, 0.0), Vector(out, 0.0));
    }

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }
};

/// Per-layer blending weights. Layers are numbered from 1.
class LayerSchedule {
public:
    LayerSchedule(std::size_t layers, double alpha, double lambda, double gamma)
        : alpha_(layers, alpha), lambda_(lambda), gamma_(gamma) {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("LayerSchedule: alpha must lie in [0, 1]");
        if (!(gamma >= 0.0)) throw std::invalid_argument("LayerSchedule: gamma must be >= 0");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("LayerSchedule: lambda must be >= 0");
        beta_.reserve(layers);
        for (std::size_t l = 1; l <= layers; ++l) beta_.push_back(std::log(lambda / static_cast<double>(l) + 1.0));
    }

    std::size_t layers() const noexcept { return beta_.size(); }
    double alpha(std::size_t l) const { return alpha_.at(l - 1); }
    double beta(std::size_t l) const { return beta_.at(l - 1); }
    double lambda() const noexcept { return lambda_; }
    double gamma() const noexcept { return gamma_; }

private:
    std::vector<double> alpha_;
    std::vector<double> beta_;
    double lambda_;
    double gamma_;
};

inline constexpr double kFeatureRegCap = 1e8;

namespace ad {

/// Tensor form of FcParams: weight out x in, biases 1 x out.
struct FcTensors {
    Tensor weight;
    Tensor bias_time;
    Tensor bias_space;

    static FcTensors from(const FcParams& p, bool requires_grad = false) {
        return {Tensor::from_matrix(p.weight, requires_grad),
                Tensor(1, p.out_dim(), p.bias_time, requires_grad),
                Tensor(1, p.out_dim(), p.bias_space, requires_grad)};
    }

    FcParams to_params() const {
        return FcParams(weight.to_matrix(), Vector(bias_time.data().begin(), bias_time.data().end()),
                        Vector(bias_space.data().begin(), bias_space.data().end()));
    }
};

/// Inverted-dropout mask: entries are 0 with probability p and 1/(1-p) otherwise.
inline Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
    std::bernoulli_distribution keep(1.0 - p);
    std::vector<double> m(rows * cols);
    for (double& v : m) v = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
    return Tensor(rows, cols, std::move(m));
}

/// The Euclidean pre-activation phi(h) per row, N x out.
inline Tensor phi(const Tensor& h, const FcTensors& p, const Curvature& k) {
    dhgcn::detail::require_same_dim(h.cols(), p.weight.cols(), "phi");
    // [b1 | W] applied to the hyperboloid lift of h, scaling the narrow side first
    Tensor inv = 1.0 / (1.0 + k.kappa() * row_sqnorm(h));
    Tensor time = (2.0 * inv - 1.0) * (1.0 / k.sqrt_c());
    return matmul_t(mul(h, 2.0 * inv), p.weight) + mul(time, p.bias_time) + p.bias_space;
}

/// Maps any real rows into the ball: w / (1 + sqrt(c |w|^2 + 1)).
inline Tensor ball_from_omega(const Tensor& omega, const Curvature& k) {
    Tensor out = div(omega, 1.0 + sqrt(k.c() * row_sqnorm(omega) + 1.0));
    return clip_ball(out, k.kappa());
}

/// Ball-to-ball linear layer. A mask, when given, multiplies phi(h) before the ball map.
inline Tensor fc_transform(const Tensor& h, const FcTensors& p, const Curvature& k,
                           const std::optional<Tensor>& mask = std::nullopt) {
    Tensor omega = phi(h, p, k);
    if (mask) omega = mul(omega, *mask);
    return ball_from_omega(omega, k);
}

/// exp_0(W log_0(h)) (+) b with b a ball point (1 x out).
inline Tensor hnn_transform(const Tensor& h, const Tensor& weight, const Tensor& bias, const Curvature& k) {
    Tensor mapped = clip_ball(expmap0(matmul_t(logmap0(h, k), weight), k), k.kappa());
    return clip_ball(mobius_add(mapped, bias, k), k.kappa());
}

inline Tensor initial_residual(const Tensor& h0, const Tensor& h_agg, double alpha, const Curvature& k) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("initial_residual: alpha must lie in [0, 1]");
    return two_point_midpoint(h0, h_agg, alpha, 1.0 - alpha, k);
}

inline Tensor weight_alignment(const Tensor& h_hat, const FcTensors& p, double beta, const Curvature& k,
                               const std::optional<Tensor>& mask = std::nullopt) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("weight_alignment: beta must lie in [0, 1]");
    return two_point_midpoint(fc_transform(h_hat, p, k, mask), h_hat, beta, 1.0 - beta, k);
}

/// Inverse quadratic mean of the root-aligned norms, capped when every point sits at the root.
inline Tensor feature_reg_loss(const Tensor& h, const Curvature& k) {
    if (h.rows() == 0) throw degenerate_input("feature_reg_loss: empty batch");
    Tensor root = gyromidpoint_rows(h, k);
    Tensor aligned = mobius_add(h, neg(root), k);
    Tensor ms = mean(row_sqnorm(aligned));
    if (ms.item() * kFeatureRegCap * kFeatureRegCap <= 1.0) return Tensor::scalar(kFeatureRegCap);
    return 1.0 / sqrt(ms);
}

}  // namespace ad

namespace detail {

inline ad::Tensor batch_tensor(const PoincareBatch& b) { return ad::Tensor::from_matrix(b.matrix()); }

inline ad::Tensor point_tensor(const PoincarePoint& p) { return ad::Tensor::row_vector(p.coords()); }

inline void require_same_shape(const PoincareBatch& a, const PoincareBatch& b, const char* what) {
    require_same_dim(a.size(), b.size(), what);
    require_same_dim(a.dim(), b.dim(), what);
    require_same_curvature(a.curvature(), b.curvature(), what);
}

}  // namespace detail

inline Vector phi(const PoincarePoint& h, const FcParams& p) {
    ad::NoGradGuard ng;
    auto out = ad::phi(detail::point_tensor(h), ad::FcTensors::from(p), h.curvature());
    return Vector(out.data().begin(), out.data().end());
}

/// Dropout (inverted, rate dropout_p) acts on phi(h) when training; rng is required then.
inline PoincarePoint fc_transform(const PoincarePoint& h, const FcParams& p, double dropout_p = 0.0,
                                  bool training = false, Rng* rng = nullptr) {
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("fc_transform: dropout must lie in [0, 1)");
    ad::NoGradGuard ng;
    std::optional<ad::Tensor> mask;
    if (training && dropout_p > 0.0) {
        if (rng == nullptr) throw std::invalid_argument("fc_transform: training dropout needs an rng");
        mask = ad::dropout_mask(1, p.out_dim(), dropout_p, *rng);
    }
    auto out = ad::fc_transform(detail::point_tensor(h), ad::FcTensors::from(p), h.curvature(), mask);
    return PoincarePoint(Vector(out.data().begin(), out.data().end()), h.curvature());
}

inline PoincarePoint hnn_transform(const PoincarePoint& h, const Matrix& weight, const PoincarePoint& bias) {
    detail::require_same_dim(weight.cols(), h.dim(), "hnn_transform");
    detail::require_same_dim(weight.rows(), bias.dim(), "hnn_transform");
    detail::require_same_curvature(h.curvature(), bias.curvature(), "hnn_transform");
    ad::NoGradGuard ng;
    auto out = ad::hnn_transform(detail::point_tensor(h), ad::Tensor::from_matrix(weight),
                                 detail::point_tensor(bias), h.curvature());
    return PoincarePoint(Vector(out.data().begin(), out.data().end()), h.curvature());
}

/// Rowwise two-point gyromidpoint of h1 and h2 with weights (w1, w2).
inline PoincareBatch residual(const PoincareBatch& h1, const PoincareBatch& h2, double w1, double w2) {
    detail::require_same_shape(h1, h2, "residual");
    ad::NoGradGuard ng;
    auto out = ad::two_point_midpoint(detail::batch_tensor(h1), detail::batch_tensor(h2), w1, w2, h1.curvature());
    return PoincareBatch(out.to_matrix(), h1.curvature());
}

inline PoincareBatch initial_residual(const PoincareBatch& h0, const PoincareBatch& h_agg, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("initial_residual: alpha must lie in [0, 1]");
    return residual(h0, h_agg, alpha, 1.0 - alpha);
}

inline PoincareBatch weight_alignment(const PoincareBatch& h_hat, const FcParams& p, double beta,
                                      double dropout_p = 0.0, bool training = false, Rng* rng = nullptr) {
    detail::require_same_dim(h_hat.dim(), p.in_dim(), "weight_alignment");
    detail::require_same_dim(p.out_dim(), p.in_dim(), "weight_alignment");
    ad::NoGradGuard ng;
    std::optional<ad::Tensor> mask;
    if (training && dropout_p > 0.0) {
        if (rng == nullptr) throw std::invalid_argument("weight_alignment: training dropout needs an rng");
        mask = ad::dropout_mask(h_hat.size(), p.out_dim(), dropout_p, *rng);
    }
    auto out = ad::weight_alignment(detail::batch_tensor(h_hat), ad::FcTensors::from(p), beta, h_hat.curvature(), mask);
    return PoincareBatch(out.to_matrix(), h_hat.curvature());
}

/// Unweighted gyromidpoint of all rows.
inline PoincarePoint root_node(const PoincareBatch& h) {
    if (h.size() == 0) throw degenerate_input("root_node: empty batch");
    return gyromidpoint(WeightedPointSet(h));
}

inline double feature_reg_loss(const PoincareBatch& h) {
    ad::NoGradGuard ng;
    return ad::feature_reg_loss(detail::batch_tensor(h), h.curvature()).item();
}

}  // namespace dhgcn
