#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dhgcn/autodiff/adam.hpp"
#include "dhgcn/autodiff/hyperbolic.hpp"
#include "dhgcn/autodiff/tensor.hpp"
#include "dhgcn/errors.hpp"
#include "dhgcn/graphdata.hpp"
#include "dhgcn/hyplayers.hpp"
#include "dhgcn/manifold.hpp"
#include "dhgcn/sampling.hpp"

namespace dhgcn {

enum class Task { NodeClassification, LinkPrediction };
enum class ResidualTarget { Initial, Previous };

inline std::string to_string(Task t) { return t == Task::NodeClassification ? "nc" : "lp"; }
inline std::string to_string(ResidualTarget r) { return r == ResidualTarget::Initial ? "initial" : "previous"; }

inline Task parse_task(const std::string& s) {
    if (s == "nc") return Task::NodeClassification;
    if (s == "lp") return Task::LinkPrediction;
    throw parse_error("unknown task '" + s + "' (expected nc or lp)");
}

inline ResidualTarget parse_residual_target(const std::string& s) {
    if (s == "initial") return ResidualTarget::Initial;
    if (s == "previous") return ResidualTarget::Previous;
    throw parse_error("unknown residual target '" + s + "' (expected initial or previous)");
}

/// Link decoder p = 1 / (exp((d^2 - r) / t) + 1).
struct FermiDiracParams {
    double r = 2.0;
    double t = 1.0;

    void validate() const {
        if (!std::isfinite(r)) throw std::invalid_argument("FermiDiracParams: r must be finite");
        if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("FermiDiracParams: t must be positive");
    }
};

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t feature_dim = 0;
    std::size_t hidden_dim = 16;
    std::size_t num_classes = 0;
    double kappa = -1.0;
    double alpha = 0.1;
    double lambda = 0.5;
    double gamma = 1e-4;
    double dropout = 0.1;
    double weight_decay = 5e-4;
    double lr = 1e-2;
    std::size_t epochs = 5000;
    std::size_t patience = 200;
    Task task = Task::NodeClassification;
    bool use_relu = true;
    /// Off means every layer takes the plain transform output (beta = 1).
    bool weight_alignment = true;
    ResidualTarget residual_target = ResidualTarget::Initial;
    std::uint64_t seed = 0;
    FermiDiracParams fermi_dirac;

    void validate() const {
        if (layers < 1) throw std::invalid_argument("ModelConfig: layers must be >= 1");
        if (feature_dim == 0 || hidden_dim == 0) throw std::invalid_argument("ModelConfig: dims must be positive");
        if (task == Task::NodeClassification && num_classes == 0)
            throw std::invalid_argument("ModelConfig: node classification needs num_classes > 0");
        if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("ModelConfig: alpha must lie in [0, 1)");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("ModelConfig: dropout must lie in [0, 1)");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("ModelConfig: gamma must be >= 0");
        if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
            throw std::invalid_argument("ModelConfig: weight_decay must be >= 0");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("ModelConfig: lambda must be >= 0");
        if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("ModelConfig: lr must be positive");
        Curvature{kappa};
        fermi_dirac.validate();
    }

    Curvature curvature() const { return Curvature(kappa); }
    LayerSchedule schedule() const { return LayerSchedule(layers, alpha, lambda, gamma); }
    double beta(std::size_t l) const { return weight_alignment ? schedule().beta(l) : 1.0; }
};

/// Residual, weight alignment and the regularizer all switched off.
inline ModelConfig without_mechanisms(ModelConfig cfg) {
    cfg.alpha = 0.0;
    cfg.weight_alignment = false;
    cfg.gamma = 0.0;
    return cfg;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
    T out{};
    const char* end = s.data() + s.size();
    auto res = std::from_chars(s.data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end)
        throw parse_error("config key '" + key + "': cannot parse '" + s + "'");
    return out;
}

inline bool parse_flag(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    throw parse_error("config key '" + key + "': expected a boolean, got '" + s + "'");
}

}  // namespace detail

/// Every ModelConfig field as key/value text, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& c) {
    using detail::format_double;
    return {{"layers", std::to_string(c.layers)},
            {"feature_dim", std::to_string(c.feature_dim)},
            {"hidden_dim", std::to_string(c.hidden_dim)},
            {"num_classes", std::to_string(c.num_classes)},
            {"kappa", format_double(c.kappa)},
            {"alpha", format_double(c.alpha)},
            {"lambda", format_double(c.lambda)},
            {"gamma", format_double(c.gamma)},
            {"dropout", format_double(c.dropout)},
            {"weight_decay", format_double(c.weight_decay)},
            {"lr", format_double(c.lr)},
            {"epochs", std::to_string(c.epochs)},
            {"patience", std::to_string(c.patience)},
            {"task", to_string(c.task)},
            {"use_relu", c.use_relu ? "true" : "false"},
            {"weight_alignment", c.weight_alignment ? "true" : "false"},
            {"residual_target", to_string(c.residual_target)},
            {"seed", std::to_string(c.seed)},
            {"fd_r", format_double(c.fermi_dirac.r)},
            {"fd_t", format_double(c.fermi_dirac.t)}};
}

/// Sets one field by key. Returns false for keys that are not ModelConfig fields.
inline bool apply_config_entry(ModelConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "layers") c.layers = parse_number<std::size_t>(key, value);
    else if (key == "feature_dim") c.feature_dim = parse_number<std::size_t>(key, value);
    else if (key == "hidden_dim") c.hidden_dim = parse_number<std::size_t>(key, value);
    else if (key == "num_classes") c.num_classes = parse_number<std::size_t>(key, value);
    else if (key == "kappa") c.kappa = parse_number<double>(key, value);
    else if (key == "alpha") c.alpha = parse_number<double>(key, value);
    else if (key == "lambda") c.lambda = parse_number<double>(key, value);
    else if (key == "gamma") c.gamma = parse_number<double>(key, value);
    else if (key == "dropout") c.dropout = parse_number<double>(key, value);
    else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, value);
    else if (key == "lr") c.lr = parse_number<double>(key, value);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
    else if (key == "patience") c.patience = parse_number<std::size_t>(key, value);
    else if (key == "task") c.task = parse_task(value);
    else if (key == "use_relu") c.use_relu = detail::parse_flag(key, value);
    else if (key == "weight_alignment") c.weight_alignment = detail::parse_flag(key, value);
    else if (key == "residual_target") c.residual_target = parse_residual_target(value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "fd_r") c.fermi_dirac.r = parse_number<double>(key, value);
    else if (key == "fd_t") c.fermi_dirac.t = parse_number<double>(key, value);
    else return false;
    return true;
}

inline std::string config_comment(const ModelConfig& c) {
    std::string s = "# config:";
    for (const auto& [k, v] : config_entries(c)) s += " " + k + "=" + v;
    return s;
}

/// Dirichlet energies of selected layers; `layers[i]` is the layer index of `values[i]`.
struct EnergyTrace {
    std::vector<std::size_t> layers;
    std::vector<double> values;

    bool empty() const noexcept { return values.empty(); }
    double first() const { return values.at(0); }
    double last() const { return values.at(values.size() - 1); }
};

/// Sum over undirected edges of d(z_i, z_j)^2 with z_i = exp_0(log_0(h_i) / sqrt(1 + deg_i)).
inline double dirichlet_energy(const Matrix& h, const std::vector<Edge>& edges,
                               const std::vector<std::size_t>& degrees, double kappa) {
    detail::require_same_dim(h.rows(), degrees.size(), "dirichlet_energy");
    Matrix z(h.rows(), h.cols());
    for (std::size_t i = 0; i < h.rows(); ++i) {
        Vector v = raw::log0(h.row(i), kappa);
        const double s = 1.0 / std::sqrt(1.0 + static_cast<double>(degrees[i]));
        for (double& x : v) x *= s;
        Vector zi = raw::exp0(v, kappa);
        std::copy(zi.begin(), zi.end(), z.row(i).begin());
    }
    double e = 0.0;
    for (auto [i, j] : edges) {
        const double d = raw::distance(z.row(i), z.row(j), kappa);
        e += d * d;
    }
    return e;
}

inline double dirichlet_energy(const PoincareBatch& h, const Graph& g) {
    return dirichlet_energy(h.matrix(), g.edges(), g.degrees(), h.curvature().kappa());
}

/// Graph quantities the forward pass reads; built once per graph.
struct ModelInput {
    ad::Tensor embedded;  // clipped exp_0 of the L1-normalized features
    std::shared_ptr<const CsrMatrix> adj;
    std::shared_ptr<const CsrMatrix> adj_abs;
    std::vector<Edge> edges;
    std::vector<std::size_t> degrees;

    std::size_t num_nodes() const noexcept { return degrees.size(); }

    static ModelInput from(const Graph& g, const Curvature& k) {
        Matrix f = g.features();
        row_normalize_l1(f);
        Matrix e(f.rows(), f.cols());
        for (std::size_t i = 0; i < f.rows(); ++i) {
            Vector r = raw::clip(raw::exp0(f.row(i), k.kappa()), k.kappa());
            std::copy(r.begin(), r.end(), e.row(i).begin());
        }
        return {ad::Tensor::from_matrix(e), g.adj_norm(), g.adj_norm_abs(), g.edges(), g.degrees()};
    }
};

/// Trainable state. transforms[0] maps d_f to d_h; transforms[l] is layer l's weight.
struct ModelParams {
    std::vector<ad::FcTensors> transforms;
    ad::Tensor decoder_weight;  // d_c x d_h, node classification only
    ad::Tensor decoder_bias;    // 1 x d_c

    static ModelParams init(const ModelConfig& cfg, Rng& rng) {
        ModelParams p;
        p.transforms.push_back(ad::FcTensors::from(FcParams::glorot(cfg.feature_dim, cfg.hidden_dim, rng), true));
        for (std::size_t l = 1; l <= cfg.layers; ++l)
            p.transforms.push_back(ad::FcTensors::from(FcParams::glorot(cfg.hidden_dim, cfg.hidden_dim, rng), true));
        if (cfg.task == Task::NodeClassification) {
            const double a = std::sqrt(6.0 / static_cast<double>(cfg.hidden_dim + cfg.num_classes));
            std::uniform_real_distribution<double> u(-a, a);
            std::vector<double> w(cfg.num_classes * cfg.hidden_dim);
            for (double& v : w) v = u(rng);
            p.decoder_weight = ad::Tensor(cfg.num_classes, cfg.hidden_dim, std::move(w), true);
            p.decoder_bias = ad::Tensor::zeros(1, cfg.num_classes, true);
        }
        return p;
    }

    bool has_decoder() const noexcept { return decoder_weight.size() > 0; }

    /// Named views sharing storage with this object; decay applies to weight matrices.
    std::vector<ad::Param> trainable() const {
        std::vector<ad::Param> out;
        for (std::size_t l = 0; l < transforms.size(); ++l) {
            const std::string pre = "fc" + std::to_string(l) + ".";
            out.push_back({pre + "weight", transforms[l].weight, true});
            out.push_back({pre + "bias_time", transforms[l].bias_time, false});
            out.push_back({pre + "bias_space", transforms[l].bias_space, false});
        }
        if (has_decoder()) {
            out.push_back({"decoder.weight", decoder_weight, true});
            out.push_back({"decoder.bias", decoder_bias, false});
        }
        return out;
    }

    ModelParams clone() const {
        ModelParams p;
        for (const auto& t : transforms) p.transforms.push_back({t.weight.clone(), t.bias_time.clone(), t.bias_space.clone()});
        if (has_decoder()) {
            p.decoder_weight = decoder_weight.clone();
            p.decoder_bias = decoder_bias.clone();
        }
        return p;
    }

    void check_shapes(const ModelConfig& cfg) const {
        if (transforms.size() != cfg.layers + 1)
            throw dimension_error("ModelParams: expected " + std::to_string(cfg.layers + 1) + " transforms, got " +
                                  std::to_string(transforms.size()));
        for (std::size_t l = 0; l < transforms.size(); ++l) {
            const auto& t = transforms[l];
            const std::size_t in = l == 0 ? cfg.feature_dim : cfg.hidden_dim;
            if (t.weight.rows() != cfg.hidden_dim || t.weight.cols() != in || t.bias_time.rows() != 1 ||
                t.bias_time.cols() != cfg.hidden_dim || t.bias_space.rows() != 1 ||
                t.bias_space.cols() != cfg.hidden_dim)
                throw dimension_error("ModelParams: transform " + std::to_string(l) + " has the wrong shape");
        }
        if (cfg.task == Task::NodeClassification) {
            if (decoder_weight.rows() != cfg.num_classes || decoder_weight.cols() != cfg.hidden_dim ||
                decoder_bias.rows() != 1 || decoder_bias.cols() != cfg.num_classes)
                throw dimension_error("ModelParams: decoder has the wrong shape");
        }
    }
};

enum class EnergyMode { None, Endpoints, All };

struct ForwardOptions {
    bool training = false;
    Rng* rng = nullptr;  // dropout masks; required when training with dropout > 0
    EnergyMode energy = EnergyMode::None;
    bool check_membership = true;
    bool keep_hidden = false;
};

struct ForwardResult {
    ad::Tensor output;                // H^(L)
    std::vector<ad::Tensor> hidden;   // aggregated + residual state of every layer, when kept
    EnergyTrace energy;
};

namespace detail {

inline void check_layer(const ad::Tensor& h, std::size_t layer, const Curvature& k, bool membership) {
    const std::size_t d = h.cols();
    for (std::size_t i = 0; i < h.rows(); ++i) {
        double n2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = h(i, j);
            if (!std::isfinite(v))
                throw numeric_fault("forward: non-finite activation at layer " + std::to_string(layer) + ", node " +
                                    std::to_string(i));
            n2 += v * v;
        }
        if (membership && !(std::sqrt(n2) < k.radius()))
            throw numeric_fault("forward: node " + std::to_string(i) + " left the ball at layer " +
                                std::to_string(layer));
    }
}

}  // namespace detail

/// Forward propagation. h^(1) = fc(exp_0(x)); then for l = 0..L the state is aggregated and
/// blended with the residual target, and for l < L passed through ReLU, the layer transform
/// and weight alignment with beta_{l+1}. Returns the blended state of layer L.
inline ForwardResult forward(const ModelInput& in, const ModelConfig& cfg, const ModelParams& params,
                             const ForwardOptions& opt = {}) {
    params.check_shapes(cfg);
    if (in.embedded.cols() != cfg.feature_dim)
        throw dimension_error("forward: feature dim " + std::to_string(in.embedded.cols()) + " != config " +
                              std::to_string(cfg.feature_dim));
    const Curvature k = cfg.curvature();
    const bool drop = opt.training && cfg.dropout > 0.0;
    if (drop && opt.rng == nullptr) throw std::invalid_argument("forward: training dropout needs an rng");
    auto mask = [&](std::size_t cols) -> std::optional<ad::Tensor> {
        if (!drop) return std::nullopt;
        return ad::dropout_mask(in.num_nodes(), cols, cfg.dropout, *opt.rng);
    };

    ForwardResult res;
    ad::Tensor first = ad::fc_transform(in.embedded, params.transforms[0], k, mask(cfg.hidden_dim));
    detail::check_layer(first, 0, k, opt.check_membership);
    ad::Tensor h = first;
    for (std::size_t l = 0;; ++l) {
        try {
            ad::Tensor agg = ad::gyromidpoint_aggregate(in.adj, in.adj_abs, h, k);
            const ad::Tensor& target = cfg.residual_target == ResidualTarget::Initial ? first : h;
            ad::Tensor blended = cfg.alpha > 0.0 ? ad::initial_residual(target, agg, cfg.alpha, k) : agg;
            detail::check_layer(blended, l, k, opt.check_membership);
            if (opt.energy == EnergyMode::All || (opt.energy == EnergyMode::Endpoints && (l == 0 || l == cfg.layers))) {
                res.energy.layers.push_back(l);
                res.energy.values.push_back(dirichlet_energy(blended.to_matrix(), in.edges, in.degrees, cfg.kappa));
            }
            if (opt.keep_hidden) res.hidden.push_back(blended);
            if (l == cfg.layers) {
                res.output = blended;
                break;
            }
            ad::Tensor act = cfg.use_relu ? ad::relu(blended) : blended;
            h = ad::weight_alignment(act, params.transforms[l + 1], cfg.beta(l + 1), k, mask(cfg.hidden_dim));
        } catch (const numeric_fault& e) {
            const std::string what = e.what();
            if (what.rfind("forward:", 0) == 0) throw;
            throw numeric_fault("forward: layer " + std::to_string(l) + ": " + what);
        }
    }
    return res;
}

inline ForwardResult forward(const Graph& g, const ModelConfig& cfg, const ModelParams& params,
                             const ForwardOptions& opt = {}) {
    return forward(ModelInput::from(g, cfg.curvature()), cfg, params, opt);
}

// ---- decoders and losses ----

inline ad::Tensor nc_logits(const ad::Tensor& out, const ModelParams& params, const Curvature& k) {
    if (!params.has_decoder()) throw std::invalid_argument("nc_logits: model has no classification decoder");
    return ad::matmul_t(ad::logmap0(out, k), params.decoder_weight) + params.decoder_bias;
}

/// Mean cross-entropy of the rows `idx` against `labels`.
inline ad::Tensor cross_entropy(const ad::Tensor& logits, const std::vector<int>& labels,
                                const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw degenerate_input("cross_entropy: empty index set");
    std::vector<std::size_t> cls;
    cls.reserve(idx.size());
    for (std::size_t i : idx) {
        if (i >= labels.size() || labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.cols())
            throw std::invalid_argument("cross_entropy: invalid label for node " + std::to_string(i));
        cls.push_back(static_cast<std::size_t>(labels[i]));
    }
    ad::Tensor z = ad::gather_rows(logits, idx);
    ad::Tensor shifted = z - ad::row_max_detached(z);
    ad::Tensor lse = ad::log(ad::row_sum(ad::exp(shifted)));
    return ad::mean(lse - ad::pick(shifted, cls));
}

inline ad::Tensor nc_loss(const ad::Tensor& out, const std::vector<int>& labels,
                          const std::vector<std::size_t>& train_idx, const ModelConfig& cfg,
                          const ModelParams& params) {
    const Curvature k = cfg.curvature();
    ad::Tensor loss = cross_entropy(nc_logits(out, params, k), labels, train_idx);
    if (cfg.gamma > 0.0) loss = loss + cfg.gamma * ad::feature_reg_loss(out, k);
    return loss;
}

/// (d^2 - r) / t per edge; the decoder probability is sigmoid of its negation.
inline ad::Tensor fermi_dirac_logit(const ad::Tensor& out, const std::vector<Edge>& edges,
                                    const FermiDiracParams& fd, const Curvature& k) {
    std::vector<std::size_t> a, b;
    a.reserve(edges.size());
    b.reserve(edges.size());
    for (auto [u, v] : edges) {
        if (u >= out.rows() || v >= out.rows()) throw std::invalid_argument("fermi_dirac_logit: node id out of range");
        a.push_back(u);
        b.push_back(v);
    }
    ad::Tensor d2 = ad::sqdist(ad::gather_rows(out, a), ad::gather_rows(out, b), k);
    return (d2 - fd.r) * (1.0 / fd.t);
}

inline double lp_score(const PoincareBatch& h, Edge e, const FermiDiracParams& fd) {
    fd.validate();
    if (e.first >= h.size() || e.second >= h.size()) throw std::invalid_argument("lp_score: node id out of range");
    const double d = raw::distance(h.row(e.first), h.row(e.second), h.curvature().kappa());
    return 1.0 / (std::exp((d * d - fd.r) / fd.t) + 1.0);
}

/// Mean binary cross-entropy of the decoder over positive and negative pairs.
inline ad::Tensor lp_loss(const ad::Tensor& out, const std::vector<Edge>& pos, const std::vector<Edge>& neg,
                          const ModelConfig& cfg) {
    if (pos.empty() || neg.empty()) throw degenerate_input("lp_loss: need positive and negative pairs");
    const Curvature k = cfg.curvature();
    ad::Tensor lp = ad::sum(ad::softplus(fermi_dirac_logit(out, pos, cfg.fermi_dirac, k)));
    ad::Tensor ln = ad::sum(ad::softplus(ad::neg(fermi_dirac_logit(out, neg, cfg.fermi_dirac, k))));
    ad::Tensor loss = (lp + ln) * (1.0 / static_cast<double>(pos.size() + neg.size()));
    if (cfg.gamma > 0.0) loss = loss + cfg.gamma * ad::feature_reg_loss(out, k);
    return loss;
}

// ---- metrics ----

inline double accuracy(const Matrix& logits, const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw degenerate_input("accuracy: empty index set");
    std::size_t hit = 0;
    for (std::size_t i : idx) {
        auto r = logits.row(i);
        const auto best = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
        if (best == labels.at(i)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(idx.size());
}

/// Area under the ROC curve by the trapezoid rule; tied scores form one diagonal segment.
inline double roc_auc(std::span<const double> pos, std::span<const double> neg) {
    if (pos.empty() || neg.empty()) throw degenerate_input("roc_auc: need positive and negative scores");
    std::vector<std::pair<double, bool>> s;
    s.reserve(pos.size() + neg.size());
    for (double v : pos) s.emplace_back(v, true);
    for (double v : neg) s.emplace_back(v, false);
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const double np = static_cast<double>(pos.size());
    const double nn = static_cast<double>(neg.size());
    double tp = 0.0, fp = 0.0, area = 0.0;
    for (std::size_t i = 0; i < s.size();) {
        double dtp = 0.0, dfp = 0.0;
        std::size_t j = i;
        for (; j < s.size() && s[j].first == s[i].first; ++j) (s[j].second ? dtp : dfp) += 1.0;
        area += (dfp / nn) * (tp + 0.5 * dtp) / np;
        tp += dtp;
        fp += dfp;
        i = j;
    }
    return area;
}

inline std::vector<double> lp_probabilities(const ad::Tensor& out, const std::vector<Edge>& edges,
                                            const FermiDiracParams& fd, const Curvature& k) {
    ad::NoGradGuard ng;
    ad::Tensor x = fermi_dirac_logit(out, edges, fd, k);
    std::vector<double> p(x.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (std::exp(x.data()[i]) + 1.0);
    return p;
}

// ---- training ----

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_metric = 0.0;
    double test_metric = 0.0;
    double energy_first = 0.0;
    double energy_last = 0.0;
};

struct TrainOptions {
    bool check_membership = true;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct EvalResult {
    double val_metric = 0.0;
    double test_metric = 0.0;
    EnergyTrace energy;
};

struct TrainResult {
    ModelParams params;  // best-validation checkpoint
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    EvalResult final;  // evaluation of `params`
};

namespace detail {

inline void require_finite_loss(const ad::Tensor& loss, std::size_t epoch) {
    if (!std::isfinite(loss.item()))
        throw divergence_error("train: non-finite loss at epoch " + std::to_string(epoch));
}

/// Shared loop: one optimizer step per epoch, evaluation after it, early stopping on val.
template <class StepFn, class EvalFn>
TrainResult run_training(const ModelConfig& cfg, ModelParams params, const TrainOptions& opt, Rng& rng,
                         StepFn&& step_loss, EvalFn&& eval) {
    ad::Adam adam(params.trainable(), ad::AdamConfig{.lr = cfg.lr, .weight_decay = cfg.weight_decay});
    TrainResult res;
    res.params = params.clone();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_value = 0.0;
        try {
            adam.zero_grad();
            ad::Tape tape;
            ad::TapeGuard guard(tape);
            ad::Tensor loss = step_loss(params, rng);
            require_finite_loss(loss, epoch);
            tape.backward(loss);
            loss_value = loss.item();
        } catch (const numeric_fault& e) {
            throw divergence_error("train: epoch " + std::to_string(epoch) + ": " + e.what());
        }
        adam.step();
        EvalResult ev;
        try {
            ev = eval(params);
        } catch (const numeric_fault& e) {
            throw divergence_error("train: evaluation after epoch " + std::to_string(epoch) + ": " + e.what());
        }
        EpochRecord rec{epoch, loss_value, ev.val_metric, ev.test_metric,
                        ev.energy.empty() ? 0.0 : ev.energy.first(), ev.energy.empty() ? 0.0 : ev.energy.last()};
        res.history.push_back(rec);
        if (opt.on_epoch) opt.on_epoch(rec);
        if (ev.val_metric > res.best_val) {
            res.best_val = ev.val_metric;
            res.best_epoch = epoch;
            res.params = params.clone();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return res;
}

}  // namespace detail

inline EvalResult evaluate_nc(const ModelInput& in, const Graph& g, const NcSplit& split, const ModelConfig& cfg,
                              const ModelParams& params, EnergyMode energy = EnergyMode::Endpoints,
                              bool check_membership = true) {
    if (!g.labels()) throw std::invalid_argument("evaluate: graph has no labels");
    ad::NoGradGuard ng;
    ForwardResult fr = forward(in, cfg, params, {.energy = energy, .check_membership = check_membership});
    Matrix logits = nc_logits(fr.output, params, cfg.curvature()).to_matrix();
    return {split.val.empty() ? 0.0 : accuracy(logits, *g.labels(), split.val),
            split.test.empty() ? 0.0 : accuracy(logits, *g.labels(), split.test), std::move(fr.energy)};
}

inline EvalResult evaluate_lp(const ModelInput& in, const LpSplit& split, const ModelConfig& cfg,
                              const ModelParams& params, EnergyMode energy = EnergyMode::Endpoints,
                              bool check_membership = true) {
    ad::NoGradGuard ng;
    ForwardResult fr = forward(in, cfg, params, {.energy = energy, .check_membership = check_membership});
    const Curvature k = cfg.curvature();
    auto auc = [&](const std::vector<Edge>& p, const std::vector<Edge>& n) {
        if (p.empty() || n.empty()) return 0.0;
        return roc_auc(lp_probabilities(fr.output, p, cfg.fermi_dirac, k),
                       lp_probabilities(fr.output, n, cfg.fermi_dirac, k));
    };
    return {auc(split.val_pos, split.val_neg), auc(split.test_pos, split.test_neg), std::move(fr.energy)};
}

/// Graph used for link prediction: only the training edges are visible to aggregation.
inline Graph lp_training_graph(const Graph& g, const LpSplit& split) { return g.with_edges(split.train_pos); }

inline TrainResult train(const Graph& g, const NcSplit& split, const ModelConfig& cfg, const TrainOptions& opt = {}) {
    cfg.validate();
    if (cfg.task != Task::NodeClassification) throw std::invalid_argument("train: config task is not nc");
    if (!g.labels()) throw std::invalid_argument("train: graph has no labels");
    if (split.train.empty()) throw degenerate_input("train: empty training set");
    Rng rng(cfg.seed);
    const ModelInput in = ModelInput::from(g, cfg.curvature());
    ModelParams params = ModelParams::init(cfg, rng);
    auto step = [&](const ModelParams& p, Rng& r) {
        ForwardResult fr = forward(in, cfg, p, {.training = true, .rng = &r, .check_membership = opt.check_membership});
        return nc_loss(fr.output, *g.labels(), split.train, cfg, p);
    };
    auto eval = [&](const ModelParams& p) {
        return evaluate_nc(in, g, split, cfg, p, EnergyMode::Endpoints, opt.check_membership);
    };
    TrainResult res = detail::run_training(cfg, std::move(params), opt, rng, step, eval);
    res.final = evaluate_nc(in, g, split, cfg, res.params, EnergyMode::All, opt.check_membership);
    return res;
}

/// Link prediction; negatives for the loss are resampled every epoch from pairs that are not
/// edges of `g` and not held-out negatives.
inline TrainResult train(const Graph& g, const LpSplit& split, const ModelConfig& cfg, const TrainOptions& opt = {}) {
    cfg.validate();
    if (cfg.task != Task::LinkPrediction) throw std::invalid_argument("train: config task is not lp");
    if (split.train_pos.empty()) throw degenerate_input("train: no training edges");
    Rng rng(cfg.seed);
    const Graph tg = lp_training_graph(g, split);
    const ModelInput in = ModelInput::from(tg, cfg.curvature());
    std::set<Edge> known(g.edges().begin(), g.edges().end());
    for (const auto* v : {&split.val_neg, &split.test_neg})
        for (auto e : *v) known.insert(canonical_edges({e}).front());
    ModelParams params = ModelParams::init(cfg, rng);
    auto step = [&](const ModelParams& p, Rng& r) {
        std::set<Edge> taken = known;
        std::vector<Edge> neg = sample_non_edges(g.num_nodes(), taken, split.train_pos.size(), r);
        ForwardResult fr = forward(in, cfg, p, {.training = true, .rng = &r, .check_membership = opt.check_membership});
        return lp_loss(fr.output, split.train_pos, neg, cfg);
    };
    auto eval = [&](const ModelParams& p) {
        return evaluate_lp(in, split, cfg, p, EnergyMode::Endpoints, opt.check_membership);
    };
    TrainResult res = detail::run_training(cfg, std::move(params), opt, rng, step, eval);
    res.final = evaluate_lp(in, split, cfg, res.params, EnergyMode::All, opt.check_membership);
    return res;
}

// ---- persistence ----

inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history, const std::string& comment) {
    using detail::format_double;
    os << comment << "\n";
    os << "epoch,train_loss,val_metric,test_metric,energy_first,energy_last\n";
    for (const auto& r : history)
        os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_metric) << ','
           << format_double(r.test_metric) << ',' << format_double(r.energy_first) << ','
           << format_double(r.energy_last) << '\n';
}

inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history, const ModelConfig& cfg) {
    write_history_csv(os, history, config_comment(cfg));
}

inline void write_energy_csv(std::ostream& os, const EnergyTrace& trace, const std::string& comment) {
    os << comment << "\n" << "layer,energy\n";
    for (std::size_t i = 0; i < trace.values.size(); ++i)
        os << trace.layers[i] << ',' << detail::format_double(trace.values[i]) << '\n';
}

inline void write_energy_csv(std::ostream& os, const EnergyTrace& trace, const ModelConfig& cfg) {
    write_energy_csv(os, trace, config_comment(cfg));
}

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
    nlohmann::json j;
    j["format"] = "dhgcn-checkpoint";
    j["version"] = kCheckpointVersion;
    for (const auto& [k, v] : config_entries(cfg)) j["config"][k] = v;
    for (const auto& p : params.trainable()) {
        const auto d = p.value.data();
        j["tensors"][p.name] = {{"rows", p.value.rows()},
                                {"cols", p.value.cols()},
                                {"data", std::vector<double>(d.begin(), d.end())}};
    }
    std::ofstream out(path);
    if (!out) throw io_error("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
    if (!out) throw io_error("write failed for checkpoint " + path.string());
}

inline std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        if (j.at("format").get<std::string>() != "dhgcn-checkpoint")
            throw parse_error("checkpoint " + path.string() + ": not a dhgcn checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw parse_error("checkpoint " + path.string() + ": unsupported version");
        ModelConfig cfg;
        for (const auto& [k, v] : j.at("config").items())
            if (!apply_config_entry(cfg, k, v.get<std::string>()))
                throw parse_error("checkpoint " + path.string() + ": unknown config key '" + k + "'");
        cfg.validate();
        Rng rng(0);
        ModelParams params = ModelParams::init(cfg, rng);
        const auto& tensors = j.at("tensors");
        for (auto& p : params.trainable()) {
            const auto& t = tensors.at(p.name);
            const auto data = t.at("data").get<std::vector<double>>();
            if (t.at("rows").get<std::size_t>() != p.value.rows() || t.at("cols").get<std::size_t>() != p.value.cols() ||
                data.size() != p.value.size())
                throw parse_error("checkpoint " + path.string() + ": tensor '" + p.name + "' has the wrong shape");
            std::copy(data.begin(), data.end(), p.value.mutable_data().begin());
        }
        if (tensors.size() != params.trainable().size())
            throw parse_error("checkpoint " + path.string() + ": unexpected tensors");
        return {cfg, std::move(params)};
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("checkpoint " + path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw parse_error("checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace dhgcn
