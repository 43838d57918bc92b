#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dhgcn/errors.hpp"
#include "dhgcn/experiments.hpp"
#include "dhgcn/graphdata.hpp"
#include "dhgcn/model.hpp"
#include "dhgcn/run_config.hpp"

namespace dhgcn::cli {

enum ExitCode : int { kOk = 0, kParse = 1, kDivergence = 2, kIo = 3, kInternal = 4 };

namespace detail {

namespace fs = std::filesystem;

inline const std::map<std::string, std::string>& key_help() {
    static const std::map<std::string, std::string> help{
        {"layers", "number of layers L"},
        {"feature_dim", "input feature width (taken from the data when unset)"},
        {"hidden_dim", "hidden width"},
        {"num_classes", "class count (taken from the labels when unset)"},
        {"kappa", "curvature, negative"},
        {"alpha", "initial residual weight in [0, 1)"},
        {"lambda", "weight alignment strength"},
        {"gamma", "feature regularizer weight"},
        {"dropout", "dropout rate on transform outputs"},
        {"weight_decay", "decoupled weight decay on weight matrices"},
        {"lr", "Adam learning rate"},
        {"epochs", "maximum training epochs"},
        {"patience", "early stopping patience in epochs"},
        {"task", "nc or lp"},
        {"use_relu", "apply the manifold ReLU between layers (true/false)"},
        {"weight_alignment", "blend transformed and untransformed states (true/false)"},
        {"residual_target", "initial or previous"},
        {"seed", "random seed"},
        {"fd_r", "Fermi-Dirac radius r"},
        {"fd_t", "Fermi-Dirac temperature t"},
        {"dataset_dir", "directory holding edges.txt, features.csv, labels.csv"},
        {"dataset", "subdirectory of the dataset directory"},
        {"out_dir", "directory for every output file"},
        {"split", "auto, files, per-class or random"},
        {"per_class", "training nodes per class for per-class splits"},
        {"n_val", "validation nodes for per-class splits"},
        {"n_test", "test nodes for per-class splits"},
        {"train_frac", "training fraction for random splits"},
        {"val_frac", "validation fraction for random splits"},
        {"lp_val", "validation edge fraction for link prediction"},
        {"lp_test", "test edge fraction for link prediction"},
    };
    return help;
}

inline std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return "--" + key;
}

/// Registers --config and one flag per run-config key on a subcommand.
struct RunFlags {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
        for (const auto& [key, def] : run_entries(RunConfig{})) {
            std::string help = key_help().at(key);
            if (!def.empty()) help += " [default " + def + "]";
            options[key] = app->add_option(flag_name(key), values[key], help);
        }
    }

    ConfigResolver resolve() const {
        ConfigResolver res;
        if (!config_path.empty()) res.apply_file(config_path);
        for (const auto& [key, opt] : options)
            if (opt->count() > 0) res.apply_override(key, values.at(key));
        return res;
    }
};

inline void report(const ConfigResolver& res, std::ostream& err) {
    for (const auto& line : res.log()) err << "config: " << line << '\n';
    std::string s;
    for (const auto& [k, v] : res.defaulted()) s += " " + k + "=" + (v.empty() ? "\"\"" : v);
    if (!s.empty()) err << "config: defaults:" << s << '\n';
}

inline fs::path output_path(const RunConfig& r, const std::string& name) {
    std::error_code ec;
    fs::create_directories(r.out_dir, ec);
    if (ec) throw io_error("cannot create " + r.out_dir.string() + ": " + ec.message());
    return r.out_dir / name;
}

inline void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    body(os);
    os.flush();
    if (!os) throw io_error("write to " + path.string() + " failed");
}

inline std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

inline std::string metric_name(Task t) { return t == Task::NodeClassification ? "accuracy" : "roc_auc"; }

// ---- subcommands ----

inline int cmd_train(const RunFlags& flags, bool progress, std::ostream& out, std::ostream& err) {
    ConfigResolver res = flags.resolve();
    const Graph g = load_run_graph(res);
    report(res, err);
    const RunConfig& r = res.config();
    const ModelConfig& cfg = r.model;
    TrainOptions opt;
    if (progress)
        opt.on_epoch = [&err](const EpochRecord& e) {
            if (e.epoch % 50 == 0)
                err << "epoch " << e.epoch << " loss " << fixed(e.train_loss, 4) << " val " << fixed(e.val_metric, 4)
                    << '\n';
        };
    const TrainResult tr = cfg.task == Task::NodeClassification ? train(g, make_nc_split(g, r), cfg, opt)
                                                                  : train(g, make_lp_split(g, r), cfg, opt);
    const std::string comment = run_comment(r);
    write_file(output_path(r, "metrics.csv"), [&](std::ostream& os) { write_history_csv(os, tr.history, comment); });
    write_file(output_path(r, "energy.csv"), [&](std::ostream& os) { write_energy_csv(os, tr.final.energy, comment); });
    save_checkpoint(output_path(r, "checkpoint.json"), cfg, tr.params);
    out << "best_epoch=" << tr.best_epoch << '\n';
    out << "val_" << metric_name(cfg.task) << '=' << fixed(tr.final.val_metric, 4) << '\n';
    out << "test_" << metric_name(cfg.task) << '=' << fixed(tr.final.test_metric, 4) << '\n';
    return kOk;
}

inline int cmd_eval(const RunFlags& flags, const std::string& checkpoint, std::ostream& out, std::ostream& err) {
    ConfigResolver res = flags.resolve();
    const fs::path ckpt = checkpoint.empty() ? res.config().out_dir / "checkpoint.json" : fs::path(checkpoint);
    auto [cfg, params] = load_checkpoint(ckpt);
    // the checkpoint decides the model; the run config only supplies data and split settings
    for (const auto& [k, v] : config_entries(cfg))
        if (k != "feature_dim" && k != "num_classes" && flags.options.at(k)->count() > 0)
            err << "config: " << k << " ignored, the checkpoint fixes it to " << v << '\n';
    res.config().model.seed = cfg.seed;
    res.config().model.task = cfg.task;
    const Graph g = load_run_graph(res);
    report(res, err);
    const RunConfig& r = res.config();
    if (r.model.feature_dim != cfg.feature_dim)
        throw parse_error("checkpoint expects " + std::to_string(cfg.feature_dim) + " features, data has " +
                          std::to_string(r.model.feature_dim));
    EvalResult ev;
    if (cfg.task == Task::NodeClassification) {
        ev = evaluate_nc(ModelInput::from(g, cfg.curvature()), g, make_nc_split(g, r), cfg, params, EnergyMode::All);
    } else {
        const LpSplit split = make_lp_split(g, r);
        ev = evaluate_lp(ModelInput::from(lp_training_graph(g, split), cfg.curvature()), split, cfg, params,
                         EnergyMode::All);
    }
    write_file(output_path(r, "eval_energy.csv"), [&](std::ostream& os) { write_energy_csv(os, ev.energy, cfg); });
    out << "val_" << metric_name(cfg.task) << '=' << fixed(ev.val_metric, 4) << '\n';
    out << "test_" << metric_name(cfg.task) << '=' << fixed(ev.test_metric, 4) << '\n';
    return kOk;
}

inline int cmd_energy_trace(const RunFlags& flags, const std::string& params, std::ostream& out,
                            std::ostream& err) {
    ConfigResolver res = flags.resolve();
    const Graph g = load_run_graph(res);
    report(res, err);
    const RunConfig& r = res.config();
    experiments::ParamSource source = experiments::fresh_params();
    NcSplit split;
    if (params == "trained") {
        if (r.model.task != Task::NodeClassification) throw parse_error("energy-trace --params trained needs task nc");
        split = make_nc_split(g, r);
        source = experiments::trained_params(g, split);
    }
    const auto traces = experiments::energy_traces(ModelInput::from(g, r.model.curvature()), r.model, source);
    const std::string comment = run_comment(r) + " params=" + params;
    write_file(output_path(r, "energy_trace.csv"),
               [&](std::ostream& os) { experiments::write_energy_traces_csv(os, traces, comment); });
    auto ratio = [](const EnergyTrace& t) { return t.first() > 0.0 ? t.last() / t.first() : 0.0; };
    out << "final/first energy: pure_aggregation=" << ratio(traces.pure_aggregation)
        << " full=" << ratio(traces.full) << " gamma0=" << ratio(traces.gamma_zero)
        << " no_mechanisms=" << ratio(traces.no_mechanisms) << '\n';
    return kOk;
}

}  // namespace detail

/// Runs the command line `args` (without the program name). Reports go to `out`, config logs and
/// errors to `err`.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    using namespace detail;
    CLI::App app{"Deep hyperbolic graph convolution toolkit"};
    app.require_subcommand(1);

    RunFlags train_flags, eval_flags, trace_flags;
    bool progress = false;
    auto* train_cmd = app.add_subcommand("train", "train a model; writes metrics.csv, energy.csv, checkpoint.json");
    train_flags.attach(train_cmd);
    train_cmd->add_flag("--progress", progress, "print the loss every 50 epochs");

    std::string checkpoint;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint; writes eval_energy.csv");
    eval_flags.attach(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file [default <out-dir>/checkpoint.json]");

    std::string params = "fresh";
    auto* trace_cmd = app.add_subcommand("energy-trace", "per-layer Dirichlet energy; writes energy_trace.csv");
    trace_flags.attach(trace_cmd);
    trace_cmd->add_option("--params", params, "fresh or trained parameters")
        ->check(CLI::IsMember({"fresh", "trained"}))
        ->capture_default_str();

    experiments::MidpointBenchConfig mid;
    std::string mid_out = "out";
    auto* mid_cmd = app.add_subcommand("bench-midpoint", "averaging accuracy against the Frechet mean; writes midpoint.csv");
    mid_cmd->add_option("--dims", mid.dims, "comma separated dimensions")->delimiter(',')->capture_default_str();
    mid_cmd->add_option("--n-points", mid.n_points, "points per set")->capture_default_str();
    mid_cmd->add_option("--trials", mid.trials, "point sets per dimension")->capture_default_str();
    mid_cmd->add_option("--oracle-iters", mid.oracle_iters, "Frechet oracle iteration cap")->capture_default_str();
    mid_cmd->add_option("--seed", mid.seed, "random seed")->capture_default_str();
    mid_cmd->add_option("--kappa", mid.kappa, "curvature")->capture_default_str();
    mid_cmd->add_option("--out-dir", mid_out, "output directory")->capture_default_str();

    experiments::TransformBenchConfig tb;
    std::string tb_out = "out";
    auto* tb_cmd = app.add_subcommand("bench-transform", "ball-to-ball layer accuracy and speed; writes transform.csv");
    tb_cmd->add_option("--batch", tb.batch, "points per task, half per class")->capture_default_str();
    tb_cmd->add_option("--in-dim", tb.in_dim, "input width")->capture_default_str();
    tb_cmd->add_option("--out-dim", tb.out_dim, "output width")->capture_default_str();
    tb_cmd->add_option("--steps", tb.steps, "training and timing steps")->capture_default_str();
    tb_cmd->add_option("--lr", tb.lr, "Adam learning rate")->capture_default_str();
    tb_cmd->add_option("--repeats", tb.timing_repeats, "timing repeats, the fastest counts")->capture_default_str();
    tb_cmd->add_option("--seed", tb.seed, "random seed")->capture_default_str();
    tb_cmd->add_option("--kappa", tb.kappa, "curvature")->capture_default_str();
    tb_cmd->add_option("--out-dir", tb_out, "output directory")->capture_default_str();

    SyntheticSpec syn;
    std::string kind = "two-blob", syn_out = "out";
    std::size_t total = 4000;
    auto* syn_cmd = app.add_subcommand("gen-synthetic", "write a synthetic dataset directory");
    syn_cmd->add_option("--kind", kind, "two-blob, two-blob-2, uniform or sbm")
        ->check(CLI::IsMember({"two-blob", "two-blob-1", "two-blob-2", "uniform", "sbm"}))
        ->capture_default_str();
    syn_cmd->add_option("--n", total, "total number of points or nodes")->capture_default_str();
    syn_cmd->add_option("--dim", syn.dim, "feature width")->capture_default_str();
    syn_cmd->add_option("--seed", syn.seed, "random seed")->capture_default_str();
    syn_cmd->add_option("--kappa", syn.kappa, "curvature")->capture_default_str();
    syn_cmd->add_option("--blocks", syn.blocks, "sbm: number of blocks")->capture_default_str();
    syn_cmd->add_option("--p-in", syn.p_in, "sbm: edge probability within a block")->capture_default_str();
    syn_cmd->add_option("--p-out", syn.p_out, "sbm: edge probability across blocks")->capture_default_str();
    syn_cmd->add_option("--noise", syn.feature_noise, "sbm: feature noise scale")->capture_default_str();
    syn_cmd->add_option("--out-dir", syn_out, "output directory")->capture_default_str();

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kParse;
    }

    try {
        if (*train_cmd) return cmd_train(train_flags, progress, out, err);
        if (*eval_cmd) return cmd_eval(eval_flags, checkpoint, out, err);
        if (*trace_cmd) return cmd_energy_trace(trace_flags, params, out, err);
        if (*mid_cmd) {
            const auto rows = experiments::bench_midpoint(mid);
            RunConfig r;
            r.out_dir = mid_out;
            write_file(output_path(r, "midpoint.csv"),
                       [&](std::ostream& os) { experiments::write_midpoint_csv(os, rows, mid); });
            for (const auto& row : rows)
                out << row.method << " dim=" << row.dim << " mse=" << row.mse.mean << " wall_ms=" << fixed(row.wall_ms.mean, 2)
                    << '\n';
            return kOk;
        }
        if (*tb_cmd) {
            const auto rows = experiments::bench_transform(tb);
            RunConfig r;
            r.out_dir = tb_out;
            write_file(output_path(r, "transform.csv"),
                       [&](std::ostream& os) { experiments::write_transform_csv(os, rows, tb); });
            double hnn = 0.0, ours = 0.0;
            for (const auto& row : rows) {
                out << to_string(row.layer) << " task=" << row.task << " test_accuracy=" << fixed(row.test_accuracy, 4)
                    << " wall_ms=" << fixed(row.wall_ms, 1) << '\n';
                if (row.task == 1 && row.layer == experiments::TransformLayer::Hnn) hnn = row.wall_ms;
                if (row.task == 1 && row.layer == experiments::TransformLayer::Ours) ours = row.wall_ms;
            }
            if (hnn > 0.0) out << "time ratio ours/hnn=" << fixed(ours / hnn, 3) << '\n';
            return kOk;
        }
        if (*syn_cmd) {
            syn.kind = parse_synthetic_kind(kind);
            Graph g = [&] {
                if (syn.kind == SyntheticKind::Sbm) {
                    syn.n_points = total;
                    return gen_sbm(syn);
                }
                if (syn.kind != SyntheticKind::Uniform) {
                    if (total % 2 != 0) throw parse_error("--n must be even for two-blob data");
                    syn.n_points = total / 2;
                } else {
                    syn.n_points = total;
                }
                return points_as_graph(gen_points(syn));
            }();
            write_graph(g, syn_out);
            out << "wrote " << g.num_nodes() << " nodes, " << g.edges().size() << " edges to " << syn_out << '\n';
            return kOk;
        }
    } catch (const divergence_error& e) {
        err << "error: " << e.what() << '\n';
        return kDivergence;
    } catch (const io_error& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const parse_error& e) {
        err << "error: " << e.what() << '\n';
        return kParse;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kParse;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInternal;
    }
    return kParse;
}

}  // namespace dhgcn::cli
