#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dhgcn/autodiff/tensor.hpp"

namespace dhgcn::ad {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    bool passed = false;
};

/// Compares tape gradients of `loss_fn` with central differences, entry by entry.
/// Relative error is |g_tape - g_fd| / max(|g_tape|, |g_fd|, denom_floor).
/// `loss_fn` must rebuild the graph from the current parameter values on every call.
inline GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                         std::vector<std::pair<std::string, Tensor>> params,
                                         double step, double tol, double denom_floor = 1e-6) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
    for (auto& [name, p] : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    {
        Tape tape;
        TapeGuard guard(tape);
        Tensor loss = loss_fn();
        tape.backward(loss);
    }
    GradCheckReport report;
    for (auto& [name, p] : params) {
        const std::vector<double> analytic = p.grad();
        GradCheckEntry e{name};
        auto w = p.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            double fp, fm;
            {
                NoGradGuard ng;
                w[i] = orig + step;
                fp = loss_fn().item();
                w[i] = orig - step;
                fm = loss_fn().item();
                w[i] = orig;
            }
            const double numeric = (fp - fm) / (2.0 * step);
            const double abs_err = std::abs(numeric - analytic[i]);
            const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic[i]), denom_floor});
            e.max_abs_error = std::max(e.max_abs_error, abs_err);
            if (rel > e.max_rel_error) {
                e.max_rel_error = rel;
                e.worst_index = i;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
        report.entries.push_back(std::move(e));
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

}  // namespace dhgcn::ad
