#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dhgcn/errors.hpp"
#include "dhgcn/linalg.hpp"
#include "dhgcn/manifold.hpp"
#include "dhgcn/sampling.hpp"
#include "dhgcn/sparse.hpp"

namespace dhgcn {

using Edge = std::pair<std::size_t, std::size_t>;

/// Sorted (u < v) unique edges without self-loops.
inline std::vector<Edge> canonical_edges(std::vector<Edge> edges) {
    std::vector<Edge> out;
    out.reserve(edges.size());
    for (auto [u, v] : edges) {
        if (u == v) continue;
        out.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
inline CsrMatrix normalized_adjacency(std::size_t n, const std::vector<Edge>& edges) {
    std::vector<double> deg(n, 1.0);
    for (auto [u, v] : edges) {
        deg.at(u) += 1.0;
        deg.at(v) += 1.0;
    }
    std::vector<CsrMatrix::Entry> e;
    e.reserve(n + 2 * edges.size());
    for (std::size_t i = 0; i < n; ++i) e.push_back({i, i, 1.0 / deg[i]});
    for (auto [u, v] : edges) {
        const double w = 1.0 / std::sqrt(deg[u] * deg[v]);
        e.push_back({u, v, w});
        e.push_back({v, u, w});
    }
    return CsrMatrix::from_triplets(n, n, e);
}

/// Scales every row to unit L1 norm; zero rows stay zero.
inline void row_normalize_l1(Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        double s = 0.0;
        for (double v : r) s += std::abs(v);
        if (s > 0.0)
            for (double& v : r) v /= s;
    }
}

/// Undirected graph with node features, optional labels and the normalized propagation matrix.
class Graph {
public:
    Graph(std::size_t num_nodes, std::vector<Edge> edges, Matrix features,
          std::optional<std::vector<int>> labels = std::nullopt)
        : n_(num_nodes), features_(std::move(features)), labels_(std::move(labels)) {
        for (auto [u, v] : edges)
            if (u >= n_ || v >= n_)
                throw parse_error("Graph: node id " + std::to_string(std::max(u, v)) + " out of range");
        edges_ = canonical_edges(std::move(edges));
        if (features_.rows() != n_)
            throw parse_error("Graph: feature rows " + std::to_string(features_.rows()) + " != nodes " +
                              std::to_string(n_));
        if (labels_ && labels_->size() != n_)
            throw parse_error("Graph: label count " + std::to_string(labels_->size()) + " != nodes " +
                              std::to_string(n_));
        if (labels_)
            for (int l : *labels_)
                if (l < 0) throw parse_error("Graph: labels must be nonnegative");
        degrees_.assign(n_, 0);
        for (auto [u, v] : edges_) {
            ++degrees_[u];
            ++degrees_[v];
        }
        adj_norm_ = std::make_shared<const CsrMatrix>(normalized_adjacency(n_, edges_));
        adj_abs_ = std::make_shared<const CsrMatrix>(adj_norm_->abs());
    }

    std::size_t num_nodes() const noexcept { return n_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const Matrix& features() const noexcept { return features_; }
    const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }
    const std::vector<std::size_t>& degrees() const noexcept { return degrees_; }
    const std::shared_ptr<const CsrMatrix>& adj_norm() const noexcept { return adj_norm_; }
    const std::shared_ptr<const CsrMatrix>& adj_norm_abs() const noexcept { return adj_abs_; }

    std::size_t num_classes() const {
        if (!labels_ || labels_->empty()) return 0;
        return static_cast<std::size_t>(*std::max_element(labels_->begin(), labels_->end())) + 1;
    }

    /// Same nodes, features and labels over a different edge set.
    Graph with_edges(std::vector<Edge> edges) const { return Graph(n_, std::move(edges), features_, labels_); }

private:
    std::size_t n_;
    std::vector<Edge> edges_;
    Matrix features_;
    std::optional<std::vector<int>> labels_;
    std::vector<std::size_t> degrees_;
    std::shared_ptr<const CsrMatrix> adj_norm_;
    std::shared_ptr<const CsrMatrix> adj_abs_;
};

// ---- file input/output ----

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw io_error("cannot open " + p.string());
    return in;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw io_error("cannot write " + p.string());
    out.precision(17);
    return out;
}

inline std::string where(const std::filesystem::path& p, std::size_t line) {
    return p.string() + ":" + std::to_string(line);
}

template <class T>
T parse_number(std::string_view tok, const std::filesystem::path& p, std::size_t line) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
    T v{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw parse_error(where(p, line) + ": cannot parse '" + std::string(tok) + "'");
    return v;
}

inline bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace detail

/// Whitespace-separated "u v" pairs, one per line; blank lines and '#' comments are skipped.
inline std::vector<Edge> read_edges(const std::filesystem::path& p) {
    auto in = detail::open_in(p);
    std::vector<Edge> edges;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (detail::blank(line) || line.front() == '#') continue;
        std::istringstream ss(line);
        std::string a, b, extra;
        if (!(ss >> a >> b) || (ss >> extra)) throw parse_error(detail::where(p, no) + ": expected 'u v'");
        edges.emplace_back(detail::parse_number<std::size_t>(a, p, no), detail::parse_number<std::size_t>(b, p, no));
    }
    return edges;
}

/// Headerless CSV of reals with a constant column count.
inline Matrix read_csv_matrix(const std::filesystem::path& p) {
    auto in = detail::open_in(p);
    std::vector<double> data;
    std::size_t cols = 0, rows = 0, no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++no;
        if (detail::blank(line) || line.front() == '#') continue;
        std::size_t count = 0, start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            const auto end = comma == std::string::npos ? line.size() : comma;
            data.push_back(detail::parse_number<double>(std::string_view(line).substr(start, end - start), p, no));
            ++count;
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (rows == 0) cols = count;
        if (count != cols) throw parse_error(detail::where(p, no) + ": expected " + std::to_string(cols) + " columns");
        ++rows;
    }
    return Matrix(rows, cols, std::move(data));
}

inline std::vector<int> read_labels(const std::filesystem::path& p) {
    auto in = detail::open_in(p);
    std::vector<int> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (detail::blank(line) || line.front() == '#') continue;
        out.push_back(detail::parse_number<int>(line, p, no));
    }
    return out;
}

inline std::vector<std::size_t> read_indices(const std::filesystem::path& p) {
    auto in = detail::open_in(p);
    std::vector<std::size_t> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (detail::blank(line) || line.front() == '#') continue;
        out.push_back(detail::parse_number<std::size_t>(line, p, no));
    }
    return out;
}

/// Builds a graph from an edge list, a feature CSV and an optional label CSV. The node count is
/// the number of feature rows.
inline Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                        const std::optional<std::filesystem::path>& label_path = std::nullopt) {
    Matrix features = read_csv_matrix(feature_path);
    std::optional<std::vector<int>> labels;
    if (label_path) labels = read_labels(*label_path);
    return Graph(features.rows(), read_edges(edge_path), std::move(features), std::move(labels));
}

/// Loads edges.txt, features.csv and labels.csv (if present) from a dataset directory.
inline Graph load_dataset_dir(const std::filesystem::path& dir) {
    const auto labels = dir / "labels.csv";
    return load_graph(dir / "edges.txt", dir / "features.csv",
                      std::filesystem::exists(labels) ? std::optional(labels) : std::nullopt);
}

inline void write_graph(const Graph& g, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
    {
        auto out = detail::open_out(dir / "edges.txt");
        for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
    }
    {
        auto out = detail::open_out(dir / "features.csv");
        out.precision(std::numeric_limits<double>::max_digits10);
        for (std::size_t i = 0; i < g.num_nodes(); ++i) {
            auto r = g.features().row(i);
            for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
            out << '\n';
        }
    }
    if (g.labels()) {
        auto out = detail::open_out(dir / "labels.csv");
        for (int l : *g.labels()) out << l << '\n';
    }
    if (!std::filesystem::exists(dir / "edges.txt")) throw io_error("write failed in " + dir.string());
}

// ---- node classification splits ----

struct NcSplit {
    std::vector<std::size_t> train, val, test;
};

namespace detail {

/// Splits `total` into integer parts proportional to `weights` (largest remainder).
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> out(weights.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = wsum > 0.0 ? static_cast<double>(total) * weights[i] / wsum : 0.0;
        out[i] = static_cast<std::size_t>(std::floor(exact));
        used += out[i];
        rem.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < total && k < rem.size(); ++k, ++used) ++out[rem[k].second];
    return out;
}

inline std::vector<std::vector<std::size_t>> nodes_by_class(const Graph& g) {
    if (!g.labels()) throw std::invalid_argument("split_nc: graph has no labels");
    std::vector<std::vector<std::size_t>> by(g.num_classes());
    for (std::size_t i = 0; i < g.num_nodes(); ++i) by[static_cast<std::size_t>((*g.labels())[i])].push_back(i);
    return by;
}

}  // namespace detail

/// Class-stratified percentage split, e.g. (0.7, 0.15, 0.15). Train and validation totals are
/// rounded to the nearest node; test takes the rest.
inline NcSplit split_nc(const Graph& g, double train_frac, double val_frac, std::uint64_t seed) {
    if (!(train_frac >= 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0 + 1e-12))
        throw std::invalid_argument("split_nc: fractions must be nonnegative and sum to at most 1");
    auto by = detail::nodes_by_class(g);
    Rng rng(seed);
    std::vector<double> sizes;
    for (auto& c : by) {
        std::shuffle(c.begin(), c.end(), rng);
        sizes.push_back(static_cast<double>(c.size()));
    }
    const auto n = static_cast<double>(g.num_nodes());
    auto train_n = detail::apportion(static_cast<std::size_t>(std::llround(train_frac * n)), sizes);
    auto val_n = detail::apportion(static_cast<std::size_t>(std::llround(val_frac * n)), sizes);
    NcSplit s;
    for (std::size_t c = 0; c < by.size(); ++c) {
        const std::size_t tr = std::min(train_n[c], by[c].size());
        const std::size_t va = std::min(val_n[c], by[c].size() - tr);
        s.train.insert(s.train.end(), by[c].begin(), by[c].begin() + static_cast<std::ptrdiff_t>(tr));
        s.val.insert(s.val.end(), by[c].begin() + static_cast<std::ptrdiff_t>(tr),
                     by[c].begin() + static_cast<std::ptrdiff_t>(tr + va));
        s.test.insert(s.test.end(), by[c].begin() + static_cast<std::ptrdiff_t>(tr + va), by[c].end());
    }
    for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

/// Fixed per-class training count, then fixed-size validation and test sets from the rest.
inline NcSplit split_nc_per_class(const Graph& g, std::size_t per_class, std::size_t n_val, std::size_t n_test,
                                  std::uint64_t seed) {
    auto by = detail::nodes_by_class(g);
    Rng rng(seed);
    NcSplit s;
    std::vector<std::size_t> rest;
    for (std::size_t c = 0; c < by.size(); ++c) {
        if (by[c].size() < per_class)
            throw degenerate_input("split_nc_per_class: class " + std::to_string(c) + " has " +
                                   std::to_string(by[c].size()) + " nodes, fewer than " + std::to_string(per_class));
        std::shuffle(by[c].begin(), by[c].end(), rng);
        s.train.insert(s.train.end(), by[c].begin(), by[c].begin() + static_cast<std::ptrdiff_t>(per_class));
        rest.insert(rest.end(), by[c].begin() + static_cast<std::ptrdiff_t>(per_class), by[c].end());
    }
    std::shuffle(rest.begin(), rest.end(), rng);
    if (rest.size() < n_val + n_test) throw degenerate_input("split_nc_per_class: not enough nodes for val/test");
    s.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val),
                  rest.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

/// Reads splits/{train,val,test}.txt index files.
inline NcSplit read_nc_split(const Graph& g, const std::filesystem::path& dir) {
    NcSplit s{read_indices(dir / "train.txt"), read_indices(dir / "val.txt"), read_indices(dir / "test.txt")};
    std::vector<char> seen(g.num_nodes(), 0);
    for (auto* v : {&s.train, &s.val, &s.test})
        for (std::size_t i : *v) {
            if (i >= g.num_nodes()) throw parse_error("split index " + std::to_string(i) + " out of range");
            if (seen[i]++) throw parse_error("split index " + std::to_string(i) + " appears twice");
        }
    return s;
}

// ---- link prediction splits ----

struct LpSplit {
    std::vector<Edge> train_pos, val_pos, test_pos;
    std::vector<Edge> val_neg, test_neg;
};

/// Uniform sample of `count` distinct non-edges (u < v) avoiding `taken`, which grows with the sample.
inline std::vector<Edge> sample_non_edges(std::size_t n, std::set<Edge>& taken, std::size_t count, Rng& rng) {
    const std::size_t pool = n * (n - (n > 0 ? 1 : 0)) / 2;
    if (pool < taken.size() + count)
        throw degenerate_input("sample_non_edges: graph too dense to draw " + std::to_string(count) + " negatives");
    std::uniform_int_distribution<std::size_t> node(0, n - 1);
    std::vector<Edge> out;
    out.reserve(count);
    while (out.size() < count) {
        std::size_t u = node(rng), v = node(rng);
        if (u == v) continue;
        Edge e{std::min(u, v), std::max(u, v)};
        if (taken.insert(e).second) out.push_back(e);
    }
    return out;
}

/// Shuffled edge split by ratios (train, val, test), with equal-count negatives for val and test.
inline LpSplit split_lp(const Graph& g, double train, double val, double test, std::uint64_t seed) {
    if (std::abs(train + val + test - 1.0) > 1e-9 || train < 0.0 || val < 0.0 || test < 0.0)
        throw std::invalid_argument("split_lp: ratios must be nonnegative and sum to 1");
    Rng rng(seed);
    std::vector<Edge> e = g.edges();
    std::shuffle(e.begin(), e.end(), rng);
    const auto m = static_cast<double>(e.size());
    const auto n_val = static_cast<std::size_t>(std::llround(val * m));
    const auto n_test = std::min(static_cast<std::size_t>(std::llround(test * m)), e.size() - n_val);
    LpSplit s;
    s.val_pos.assign(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.test_pos.assign(e.begin() + static_cast<std::ptrdiff_t>(n_val),
                      e.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    s.train_pos.assign(e.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), e.end());
    std::sort(s.train_pos.begin(), s.train_pos.end());
    std::set<Edge> taken(g.edges().begin(), g.edges().end());
    s.val_neg = sample_non_edges(g.num_nodes(), taken, s.val_pos.size(), rng);
    s.test_neg = sample_non_edges(g.num_nodes(), taken, s.test_pos.size(), rng);
    return s;
}

// ---- synthetic data ----

enum class SyntheticKind { TwoBlob1, TwoBlob2, Uniform, Sbm };

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
    if (s == "two-blob" || s == "two-blob-1") return SyntheticKind::TwoBlob1;
    if (s == "two-blob-2") return SyntheticKind::TwoBlob2;
    if (s == "uniform") return SyntheticKind::Uniform;
    if (s == "sbm") return SyntheticKind::Sbm;
    throw std::invalid_argument("unknown synthetic kind '" + s + "'");
}

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::TwoBlob1;
    std::size_t n_points = 0;
    std::size_t dim = 2;
    double kappa = -1.0;
    std::uint64_t seed = 0;
    // stochastic block model
    std::size_t blocks = 2;
    double p_in = 0.1;
    double p_out = 0.01;
    double feature_noise = 1.0;
};

struct PointSet {
    Matrix points;
    std::vector<int> labels;
};

namespace detail {

/// Gaussian blob in the tangent space at the origin, mapped into the ball. Centers and spreads
/// are in units of the ball radius.
inline void tangent_blob(Matrix& out, std::size_t first, std::size_t count, double center, double sd,
                         const Curvature& k, Rng& rng) {
    std::normal_distribution<double> nd(0.0, sd * k.radius());
    for (std::size_t i = first; i < first + count; ++i) {
        Vector v(out.cols());
        for (double& x : v) x = nd(rng);
        v[0] += center * k.radius();
        Vector p = raw::clip(raw::exp0(v, k.kappa()), k.kappa());
        std::copy(p.begin(), p.end(), out.row(i).begin());
    }
}

}  // namespace detail

/// Labeled two-blob sets (n_points per class, so 2n in total) or unlabeled uniform ball points
/// within 0.9 of the radius.
inline PointSet gen_points(const SyntheticSpec& spec) {
    const Curvature k(spec.kappa);
    Rng rng(spec.seed);
    if (spec.dim == 0) throw std::invalid_argument("gen_points: dim must be positive");
    PointSet s;
    switch (spec.kind) {
        case SyntheticKind::Uniform: {
            s.points = Matrix(spec.n_points, spec.dim);
            for (std::size_t i = 0; i < spec.n_points; ++i) {
                Vector p = uniform_in_ball(spec.dim, 0.9 * k.radius(), rng);
                std::copy(p.begin(), p.end(), s.points.row(i).begin());
            }
            return s;
        }
        case SyntheticKind::TwoBlob1:
        case SyntheticKind::TwoBlob2: {
            const std::size_t n = spec.n_points;
            s.points = Matrix(2 * n, spec.dim);
            if (spec.kind == SyntheticKind::TwoBlob1) {
                detail::tangent_blob(s.points, 0, n, -1.0, 0.4, k, rng);
                detail::tangent_blob(s.points, n, n, 1.0, 0.4, k, rng);
            } else {
                // a tight blob inside a broad one: the class boundary is curved
                detail::tangent_blob(s.points, 0, n, 0.3, 0.08, k, rng);
                detail::tangent_blob(s.points, n, n, -0.5, 1.0, k, rng);
            }
            s.labels.assign(2 * n, 0);
            std::fill(s.labels.begin() + static_cast<std::ptrdiff_t>(n), s.labels.end(), 1);
            return s;
        }
        case SyntheticKind::Sbm:
            break;
    }
    throw std::invalid_argument("gen_points: use gen_sbm for graph kinds");
}

/// Stochastic block model with Gaussian features centered on a per-block one-hot direction.
inline Graph gen_sbm(const SyntheticSpec& spec) {
    if (spec.blocks == 0 || spec.dim == 0) throw std::invalid_argument("gen_sbm: blocks and dim must be positive");
    Rng rng(spec.seed);
    const std::size_t n = spec.n_points;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % spec.blocks);
    std::bernoulli_distribution in(spec.p_in), out(spec.p_out);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (labels[i] == labels[j] ? in(rng) : out(rng)) edges.emplace_back(i, j);
    std::normal_distribution<double> nd(0.0, spec.feature_noise);
    Matrix f(n, spec.dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : f.row(i)) v = nd(rng);
        f(i, static_cast<std::size_t>(labels[i]) % spec.dim) += 1.0;
    }
    return Graph(n, std::move(edges), std::move(f), std::move(labels));
}

/// Graph over synthetic points with no edges; features are the ball coordinates.
inline Graph points_as_graph(const PointSet& s) {
    return Graph(s.points.rows(), {}, s.points,
                 s.labels.empty() ? std::nullopt : std::optional<std::vector<int>>(s.labels));
}

}  // namespace dhgcn
