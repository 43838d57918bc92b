#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dhgcn/autodiff/tensor.hpp"

namespace dhgcn::ad {

struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// A trainable tensor and whether decoupled weight decay applies to it.
struct Param {
    std::string name;
    Tensor value;
    bool decay = false;
};

/// Adam with bias correction and decoupled weight decay on the params flagged `decay`.
class Adam {
public:
    Adam(std::vector<Param> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) {
            m_.emplace_back(p.value.size(), 0.0);
            v_.emplace_back(p.value.size(), 0.0);
        }
    }

    /// Applies one update from the gradients currently stored on the params.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k].value;
            const std::vector<double> g = p.grad();
            update(k, p.mutable_data(), g, bc1, bc2);
        }
    }

    /// Update from explicitly supplied gradients (one vector per param).
    void step(const std::vector<std::vector<double>>& grads) {
        if (grads.size() != params_.size()) throw dimension_error("Adam::step: gradient count mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k)
            update(k, params_[k].value.mutable_data(), grads[k], bc1, bc2);
    }

    void zero_grad() {
        for (auto& p : params_) p.value.zero_grad();
    }

    const std::vector<Param>& params() const noexcept { return params_; }
    long steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }
    const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
    const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

private:
    void update(std::size_t k, std::span<double> w, const std::vector<double>& g, double bc1, double bc2) {
        dhgcn::detail::require_same_dim(w.size(), g.size(), "Adam::step");
        auto& m = m_[k];
        auto& v = v_[k];
        const double wd = params_[k].decay ? cfg_.weight_decay : 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + wd * w[i]);
        }
    }

    std::vector<Param> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    long t_ = 0;
};

}  // namespace dhgcn::ad
