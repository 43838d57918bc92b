#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dhgcn/autodiff/adam.hpp"
#include "dhgcn/autodiff/hyperbolic.hpp"
#include "dhgcn/graphdata.hpp"
#include "dhgcn/hyplayers.hpp"
#include "dhgcn/midpoint.hpp"
#include "dhgcn/model.hpp"

namespace dhgcn::experiments {

struct Stat {
    double mean = 0.0;
    double std = 0.0;
};

/// Mean and population standard deviation.
inline Stat summarize(const std::vector<double>& v) {
    if (v.empty()) return {};
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / n)};
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
    return s;
}

inline std::string comment(const std::vector<std::pair<std::string, std::string>>& entries) {
    std::string s = "# config:";
    for (const auto& [k, v] : entries) s += " " + k + "=" + v;
    return s;
}

}  // namespace detail

// ---- averaging accuracy ----

struct MidpointBenchConfig {
    std::vector<std::size_t> dims{8, 16, 64};
    std::size_t n_points = 4000;
    std::size_t trials = 3;
    std::uint64_t seed = 0;
    double kappa = -1.0;
    int oracle_iters = 1000;

    std::vector<std::pair<std::string, std::string>> entries() const {
        using dhgcn::detail::format_double;
        return {{"dims", detail::join(dims)},        {"n_points", std::to_string(n_points)},
                {"trials", std::to_string(trials)},  {"seed", std::to_string(seed)},
                {"kappa", format_double(kappa)},     {"oracle_iters", std::to_string(oracle_iters)}};
    }
};

struct MidpointBenchRow {
    std::string method;  // tangential, gyro or frechet_oracle
    std::size_t dim = 0;
    Stat mse;  // mean squared coordinate error against the oracle
    Stat wall_ms;
};

/// Unweighted means of uniform ball points (within 0.9 of the radius), compared with the
/// iterative Frechet mean.
inline std::vector<MidpointBenchRow> bench_midpoint(const MidpointBenchConfig& cfg) {
    if (cfg.dims.empty() || cfg.n_points == 0 || cfg.trials == 0)
        throw std::invalid_argument("bench_midpoint: dims, n_points and trials must be nonempty");
    const Curvature k(cfg.kappa);
    std::vector<MidpointBenchRow> rows;
    for (std::size_t dim : cfg.dims) {
        if (dim == 0) throw std::invalid_argument("bench_midpoint: dims must be positive");
        std::vector<double> mse_tan, mse_gyro, t_tan, t_gyro, t_oracle;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
            SyntheticSpec spec;
            spec.kind = SyntheticKind::Uniform;
            spec.n_points = cfg.n_points;
            spec.dim = dim;
            spec.kappa = cfg.kappa;
            spec.seed = cfg.seed * 1000003ULL + dim * 1009ULL + trial;
            const WeightedPointSet set(PoincareBatch(gen_points(spec).points, k));

            auto t0 = detail::Clock::now();
            const FrechetResult oracle = frechet_mean_oracle(set, cfg.oracle_iters);
            t_oracle.push_back(detail::ms_since(t0));
            t0 = detail::Clock::now();
            const PoincarePoint gyro = gyromidpoint(set);
            t_gyro.push_back(detail::ms_since(t0));
            t0 = detail::Clock::now();
            const PoincarePoint tan = tangential_midpoint(set);
            t_tan.push_back(detail::ms_since(t0));

            auto mse = [&](const PoincarePoint& p) {
                double e = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double d = p.coords()[j] - oracle.point.coords()[j];
                    e += d * d;
                }
                return e / static_cast<double>(dim);
            };
            mse_gyro.push_back(mse(gyro));
            mse_tan.push_back(mse(tan));
        }
        rows.push_back({"tangential", dim, summarize(mse_tan), summarize(t_tan)});
        rows.push_back({"gyro", dim, summarize(mse_gyro), summarize(t_gyro)});
        rows.push_back({"frechet_oracle", dim, {}, summarize(t_oracle)});
    }
    return rows;
}

inline void write_midpoint_csv(std::ostream& os, const std::vector<MidpointBenchRow>& rows,
                               const MidpointBenchConfig& cfg) {
    using dhgcn::detail::format_double;
    os << detail::comment(cfg.entries()) << "\n";
    os << "method,dim,mse_vs_oracle,mse_std,wall_ms,wall_ms_std\n";
    for (const auto& r : rows)
        os << r.method << ',' << r.dim << ',' << format_double(r.mse.mean) << ',' << format_double(r.mse.std) << ','
           << format_double(r.wall_ms.mean) << ',' << format_double(r.wall_ms.std) << '\n';
}

// ---- ball-to-ball layers ----

enum class TransformLayer { Euclidean, Hnn, Ours };

inline std::string to_string(TransformLayer l) {
    switch (l) {
        case TransformLayer::Euclidean: return "euclidean";
        case TransformLayer::Hnn: return "hnn";
        case TransformLayer::Ours: return "ours";
    }
    return "?";
}

struct TransformBenchConfig {
    std::size_t batch = 2000;  // points per task, half per class
    std::size_t in_dim = 2;
    std::size_t out_dim = 16;
    std::size_t steps = 1000;
    double lr = 1e-2;
    double kappa = -1.0;
    std::uint64_t seed = 0;
    std::size_t timing_repeats = 3;

    std::vector<std::pair<std::string, std::string>> entries() const {
        using dhgcn::detail::format_double;
        return {{"batch", std::to_string(batch)},   {"in_dim", std::to_string(in_dim)},
                {"out_dim", std::to_string(out_dim)}, {"steps", std::to_string(steps)},
                {"lr", format_double(lr)},          {"kappa", format_double(kappa)},
                {"seed", std::to_string(seed)},     {"timing_repeats", std::to_string(timing_repeats)}};
    }
};

struct TransformBenchRow {
    TransformLayer layer = TransformLayer::Ours;
    int task = 1;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wall_ms = 0.0;  // forward + backward of the layer alone, `steps` times
};

/// One layer in_dim -> out_dim followed by a Euclidean read-out to two logits. The hyperbolic
/// layers are read out through log_0.
class TransformClassifier {
public:
    TransformClassifier(TransformLayer layer, std::size_t in, std::size_t out, const Curvature& k, Rng& rng)
        : layer_(layer), k_(k), fc_(ad::FcTensors::from(FcParams::glorot(in, out, rng), true)),
          ball_bias_(ad::Tensor::zeros(1, out, true)), readout_bias_(ad::Tensor::zeros(1, 2, true)) {
        const double a = std::sqrt(6.0 / static_cast<double>(out + 2));
        std::uniform_real_distribution<double> u(-a, a);
        std::vector<double> w(2 * out);
        for (double& v : w) v = u(rng);
        readout_ = ad::Tensor(2, out, std::move(w), true);
    }

    ad::Tensor transform(const ad::Tensor& x) const {
        switch (layer_) {
            case TransformLayer::Euclidean: return ad::matmul_t(x, fc_.weight) + fc_.bias_space;
            case TransformLayer::Hnn: return ad::hnn_transform(x, fc_.weight, ball_bias_, k_);
            case TransformLayer::Ours: return ad::fc_transform(x, fc_, k_);
        }
        throw std::logic_error("unknown layer");
    }

    ad::Tensor logits(const ad::Tensor& x) const {
        ad::Tensor h = transform(x);
        if (layer_ != TransformLayer::Euclidean) h = ad::logmap0(h, k_);
        return ad::matmul_t(h, readout_) + readout_bias_;
    }

    std::vector<ad::Param> params() const {
        std::vector<ad::Param> p{{"weight", fc_.weight}, {"readout", readout_}, {"readout_bias", readout_bias_}};
        if (layer_ == TransformLayer::Ours) {
            p.push_back({"bias_time", fc_.bias_time});
            p.push_back({"bias_space", fc_.bias_space});
        } else if (layer_ == TransformLayer::Hnn) {
            p.push_back({"ball_bias", ball_bias_});
        } else {
            p.push_back({"bias", fc_.bias_space});
        }
        return p;
    }

private:
    TransformLayer layer_;
    Curvature k_;
    ad::FcTensors fc_;
    ad::Tensor ball_bias_;
    ad::Tensor readout_;
    ad::Tensor readout_bias_;
};

/// Minimum over repeats of the time for `steps` forward+backward passes through the layer.
inline double time_transform(const TransformClassifier& c, const ad::Tensor& x, std::size_t steps,
                             std::size_t repeats) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
        const auto t0 = detail::Clock::now();
        for (std::size_t s = 0; s < steps; ++s) {
            ad::Tape tape;
            ad::TapeGuard guard(tape);
            tape.backward(ad::sum(c.transform(x)));
        }
        best = std::min(best, detail::ms_since(t0));
    }
    return best;
}

inline std::vector<TransformBenchRow> bench_transform(const TransformBenchConfig& cfg) {
    if (cfg.batch < 2 || cfg.batch % 2 != 0) throw std::invalid_argument("bench_transform: batch must be even and >= 2");
    if (cfg.in_dim == 0 || cfg.out_dim == 0 || cfg.steps == 0)
        throw std::invalid_argument("bench_transform: dims and steps must be positive");
    const Curvature k(cfg.kappa);
    std::vector<TransformBenchRow> rows;
    for (int task : {1, 2}) {
        SyntheticSpec spec;
        spec.kind = task == 1 ? SyntheticKind::TwoBlob1 : SyntheticKind::TwoBlob2;
        spec.n_points = cfg.batch / 2;
        spec.dim = cfg.in_dim;
        spec.kappa = cfg.kappa;
        spec.seed = cfg.seed * 2 + static_cast<std::uint64_t>(task) * 7919ULL;
        const PointSet train = gen_points(spec);
        spec.seed += 1;
        const PointSet test = gen_points(spec);
        const ad::Tensor xtr = ad::Tensor::from_matrix(train.points);
        const ad::Tensor xte = ad::Tensor::from_matrix(test.points);
        std::vector<std::size_t> idx(cfg.batch);
        std::iota(idx.begin(), idx.end(), 0);

        for (auto layer : {TransformLayer::Euclidean, TransformLayer::Hnn, TransformLayer::Ours}) {
            Rng rng(cfg.seed + 17);
            TransformClassifier clf(layer, cfg.in_dim, cfg.out_dim, k, rng);
            ad::Adam adam(clf.params(), ad::AdamConfig{.lr = cfg.lr});
            for (std::size_t s = 0; s < cfg.steps; ++s) {
                adam.zero_grad();
                ad::Tape tape;
                ad::TapeGuard guard(tape);
                tape.backward(cross_entropy(clf.logits(xtr), train.labels, idx));
                adam.step();
            }
            TransformBenchRow row{layer, task};
            {
                ad::NoGradGuard ng;
                row.train_accuracy = accuracy(clf.logits(xtr).to_matrix(), train.labels, idx);
                row.test_accuracy = accuracy(clf.logits(xte).to_matrix(), test.labels, idx);
            }
            row.wall_ms = time_transform(clf, xtr, cfg.steps, cfg.timing_repeats);
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_transform_csv(std::ostream& os, const std::vector<TransformBenchRow>& rows,
                                const TransformBenchConfig& cfg) {
    using dhgcn::detail::format_double;
    os << detail::comment(cfg.entries()) << "\n";
    os << "layer,task,train_accuracy,test_accuracy,wall_ms\n";
    for (const auto& r : rows)
        os << to_string(r.layer) << ',' << r.task << ',' << format_double(r.train_accuracy) << ','
           << format_double(r.test_accuracy) << ',' << format_double(r.wall_ms) << '\n';
}

// ---- energy through depth ----

enum class AggregationOp { Propagate, Gyromidpoint };

/// Energies of h and of `layers` successive aggregations of it (layers + 1 values).
inline EnergyTrace pure_aggregation_trace(const ModelInput& in, ad::Tensor h, std::size_t layers,
                                          const Curvature& k, AggregationOp op = AggregationOp::Propagate) {
    ad::NoGradGuard ng;
    EnergyTrace t;
    for (std::size_t l = 0;; ++l) {
        t.layers.push_back(l);
        t.values.push_back(dirichlet_energy(h.to_matrix(), in.edges, in.degrees, k.kappa()));
        if (l == layers) break;
        h = op == AggregationOp::Propagate ? ad::mobius_propagate(in.adj, h, k)
                                           : ad::gyromidpoint_aggregate(in.adj, in.adj_abs, h, k);
    }
    return t;
}

/// Largest increase between consecutive entries (<= 0 for a nonincreasing trace).
inline double max_increase(const EnergyTrace& t) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < t.values.size(); ++i) worst = std::max(worst, t.values[i] - t.values[i - 1]);
    return worst;
}

using ParamSource = std::function<ModelParams(const ModelConfig&)>;

inline ParamSource fresh_params() {
    return [](const ModelConfig& c) {
        Rng rng(c.seed);
        return ModelParams::init(c, rng);
    };
}

inline ParamSource trained_params(const Graph& g, const NcSplit& split, TrainOptions opt = {}) {
    return [&g, &split, opt](const ModelConfig& c) { return train(g, split, c, opt).params; };
}

struct EnergyTraces {
    EnergyTrace pure_aggregation;  // propagation only, from the model's first hidden state
    EnergyTrace full;
    EnergyTrace gamma_zero;
    EnergyTrace no_mechanisms;
};

inline EnergyTraces energy_traces(const ModelInput& in, const ModelConfig& cfg, const ParamSource& source) {
    cfg.validate();
    const Curvature k = cfg.curvature();
    auto trace = [&](const ModelConfig& c, const ModelParams& p) {
        ad::NoGradGuard ng;
        return forward(in, c, p, {.energy = EnergyMode::All}).energy;
    };
    EnergyTraces out;
    const ModelParams full = source(cfg);
    out.full = trace(cfg, full);
    {
        ad::NoGradGuard ng;
        // row l of every trace has been aggregated l + 1 times
        EnergyTrace pure =
            pure_aggregation_trace(in, ad::fc_transform(in.embedded, full.transforms[0], k), cfg.layers + 1, k);
        out.pure_aggregation.layers = out.full.layers;
        out.pure_aggregation.values.assign(pure.values.begin() + 1, pure.values.end());
    }
    ModelConfig g0 = cfg;
    g0.gamma = 0.0;
    out.gamma_zero = trace(g0, source(g0));
    const ModelConfig off = without_mechanisms(cfg);
    out.no_mechanisms = trace(off, source(off));
    return out;
}

inline void write_energy_traces_csv(std::ostream& os, const EnergyTraces& t, const std::string& comment) {
    using dhgcn::detail::format_double;
    os << comment << "\n";
    os << "layer,pure_aggregation,full,gamma0,no_mechanisms\n";
    for (std::size_t i = 0; i < t.full.values.size(); ++i)
        os << t.full.layers[i] << ',' << format_double(t.pure_aggregation.values.at(i)) << ','
           << format_double(t.full.values[i]) << ',' << format_double(t.gamma_zero.values.at(i)) << ','
           << format_double(t.no_mechanisms.values.at(i)) << '\n';
}

inline void write_energy_traces_csv(std::ostream& os, const EnergyTraces& t, const ModelConfig& cfg) {
    write_energy_traces_csv(os, t, config_comment(cfg));
}

}  // namespace dhgcn::experiments
