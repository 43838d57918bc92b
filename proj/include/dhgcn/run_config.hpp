#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dhgcn/errors.hpp"
#include "dhgcn/graphdata.hpp"
#include "dhgcn/model.hpp"

namespace dhgcn {

enum class SplitMode { Auto, Files, PerClass, Random };

inline std::string to_string(SplitMode m) {
    switch (m) {
        case SplitMode::Auto: return "auto";
        case SplitMode::Files: return "files";
        case SplitMode::PerClass: return "per-class";
        case SplitMode::Random: return "random";
    }
    return "?";
}

inline SplitMode parse_split_mode(const std::string& s) {
    if (s == "auto") return SplitMode::Auto;
    if (s == "files") return SplitMode::Files;
    if (s == "per-class") return SplitMode::PerClass;
    if (s == "random") return SplitMode::Random;
    throw parse_error("unknown split mode '" + s + "' (expected auto, files, per-class or random)");
}

/// Everything a run needs: the model settings, where the data lives, where outputs go and how
/// the data is split.
struct RunConfig {
    ModelConfig model;
    std::filesystem::path dataset_dir;
    std::string dataset;  // optional subdirectory of dataset_dir
    std::filesystem::path out_dir = "out";

    SplitMode split = SplitMode::Auto;
    std::size_t per_class = 20;
    std::size_t n_val = 500;
    std::size_t n_test = 1000;
    double train_frac = 0.7;
    double val_frac = 0.15;
    double lp_val = 0.05;
    double lp_test = 0.1;

    std::filesystem::path data_path() const { return dataset.empty() ? dataset_dir : dataset_dir / dataset; }
};

inline std::vector<std::pair<std::string, std::string>> run_entries(const RunConfig& r) {
    using detail::format_double;
    auto out = config_entries(r.model);
    out.insert(out.end(), {{"dataset_dir", r.dataset_dir.string()},
                           {"dataset", r.dataset},
                           {"out_dir", r.out_dir.string()},
                           {"split", to_string(r.split)},
                           {"per_class", std::to_string(r.per_class)},
                           {"n_val", std::to_string(r.n_val)},
                           {"n_test", std::to_string(r.n_test)},
                           {"train_frac", format_double(r.train_frac)},
                           {"val_frac", format_double(r.val_frac)},
                           {"lp_val", format_double(r.lp_val)},
                           {"lp_test", format_double(r.lp_test)}});
    return out;
}

/// Provenance line for output files. out_dir is left out so reruns into another directory
/// produce identical files.
inline std::string run_comment(const RunConfig& r) {
    std::string s = "# config:";
    for (const auto& [k, v] : run_entries(r))
        if (k != "out_dir") s += " " + k + "=" + v;
    return s;
}

/// Returns false for an unknown key.
inline bool apply_run_entry(RunConfig& r, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (apply_config_entry(r.model, key, value)) return true;
    if (key == "dataset_dir") r.dataset_dir = value;
    else if (key == "dataset") r.dataset = value;
    else if (key == "out_dir") r.out_dir = value;
    else if (key == "split") r.split = parse_split_mode(value);
    else if (key == "per_class") r.per_class = parse_number<std::size_t>(key, value);
    else if (key == "n_val") r.n_val = parse_number<std::size_t>(key, value);
    else if (key == "n_test") r.n_test = parse_number<std::size_t>(key, value);
    else if (key == "train_frac") r.train_frac = parse_number<double>(key, value);
    else if (key == "val_frac") r.val_frac = parse_number<double>(key, value);
    else if (key == "lp_val") r.lp_val = parse_number<double>(key, value);
    else if (key == "lp_test") r.lp_test = parse_number<double>(key, value);
    else return false;
    return true;
}

struct ConfigLine {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// Reads `key = value` lines. Blank lines and lines starting with '#' are skipped; a key may
/// appear once.
inline std::vector<ConfigLine> read_config_lines(std::istream& is, const std::string& source) {
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    std::vector<ConfigLine> out;
    std::set<std::string> seen;
    std::string raw;
    for (std::size_t no = 1; std::getline(is, raw); ++no) {
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error(source + ":" + std::to_string(no) + ": expected key = value");
        ConfigLine c{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), no};
        if (c.key.empty()) throw parse_error(source + ":" + std::to_string(no) + ": empty key");
        if (!seen.insert(c.key).second)
            throw parse_error(source + ":" + std::to_string(no) + ": duplicate key '" + c.key + "'");
        out.push_back(std::move(c));
    }
    return out;
}

/// Builds a RunConfig from defaults, then a config file, then command-line values. Every value
/// that replaces a default or a file value is recorded in `log`.
class ConfigResolver {
public:
    void apply_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw io_error("cannot open config " + path.string());
        for (const auto& c : read_config_lines(is, path.string()))
            set(c.key, c.value, path.string() + ":" + std::to_string(c.line));
    }

    void apply_stream(std::istream& is, const std::string& source) {
        for (const auto& c : read_config_lines(is, source))
            set(c.key, c.value, source + ":" + std::to_string(c.line));
    }

    void apply_override(const std::string& key, const std::string& value) { set(key, value, "command line"); }

    /// Fills keys nobody set from the data; a set value that disagrees with the data is an error.
    void fill_from_data(const std::string& key, std::size_t value) {
        const std::string v = std::to_string(value);
        if (auto it = origin_.find(key); it != origin_.end()) {
            const auto current = lookup(key);
            if (current != v)
                throw parse_error("config key '" + key + "' is " + current + " but the data has " + v + " (" +
                                  it->second + ")");
            return;
        }
        set(key, v, "data");
    }

    /// Keys left at their built-in defaults.
    std::vector<std::pair<std::string, std::string>> defaulted() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (auto& [k, v] : run_entries(cfg_))
            if (!origin_.contains(k)) out.emplace_back(k, v);
        return out;
    }

    const RunConfig& config() const { return cfg_; }
    RunConfig& config() { return cfg_; }
    const std::vector<std::string>& log() const { return log_; }

private:
    void set(const std::string& key, const std::string& value, const std::string& origin) {
        const auto before = known(key) ? lookup(key) : std::string();
        if (!apply_run_entry(cfg_, key, value)) throw parse_error("unknown config key '" + key + "' (" + origin + ")");
        std::string msg = key + "=" + lookup(key) + " (" + origin;
        if (auto it = origin_.find(key); it != origin_.end()) msg += ", overrides " + before + " from " + it->second;
        log_.push_back(msg + ")");
        origin_[key] = origin;
    }

    bool known(const std::string& key) const {
        for (auto& [k, v] : run_entries(cfg_))
            if (k == key) return true;
        return false;
    }

    std::string lookup(const std::string& key) const {
        for (auto& [k, v] : run_entries(cfg_))
            if (k == key) return v;
        return {};
    }

    RunConfig cfg_;
    std::map<std::string, std::string> origin_;
    std::vector<std::string> log_;
};

/// Loads the graph named by the run config and sets feature_dim and num_classes from it.
inline Graph load_run_graph(ConfigResolver& res) {
    const RunConfig& r = res.config();
    if (r.dataset_dir.empty()) throw parse_error("no dataset: set dataset_dir in the config or pass --dataset-dir");
    const auto path = r.data_path();
    if (!std::filesystem::is_directory(path)) throw io_error("dataset directory " + path.string() + " not found");
    Graph g = load_dataset_dir(path);
    res.fill_from_data("feature_dim", g.features().cols());
    if (g.labels()) {
        int top = -1;
        for (int l : *g.labels()) top = std::max(top, l);
        res.fill_from_data("num_classes", static_cast<std::size_t>(top + 1));
    }
    return g;
}

inline NcSplit make_nc_split(const Graph& g, const RunConfig& r) {
    const auto files = r.data_path() / "splits";
    SplitMode mode = r.split;
    if (mode == SplitMode::Auto)
        mode = std::filesystem::exists(files / "train.txt") ? SplitMode::Files : SplitMode::Random;
    switch (mode) {
        case SplitMode::Files: return read_nc_split(g, files);
        case SplitMode::PerClass: return split_nc_per_class(g, r.per_class, r.n_val, r.n_test, r.model.seed);
        default: return split_nc(g, r.train_frac, r.val_frac, r.model.seed);
    }
}

inline LpSplit make_lp_split(const Graph& g, const RunConfig& r) {
    return split_lp(g, 1.0 - r.lp_val - r.lp_test, r.lp_val, r.lp_test, r.model.seed);
}

}  // namespace dhgcn
