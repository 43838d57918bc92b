#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using namespace dhgcn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("dhgcn_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& s) const { return (path / s).string(); }
};

struct CliRun {
    int code;
    std::string out, err;
};

CliRun run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

std::vector<std::string> sbm_data(const TempDir& d) {
    return {"gen-synthetic", "--kind", "sbm", "--n", "80", "--dim", "6", "--p-in", "0.25",
            "--p-out", "0.02", "--noise", "0.5", "--seed", "3", "--out-dir", d / "data/sbm"};
}

std::vector<std::string> train_args(const TempDir& d, const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> a{"train", "--dataset-dir", d / "data", "--dataset", "sbm", "--out-dir", d / out};
    if (std::find(extra.begin(), extra.end(), "--epochs") == extra.end()) extra.insert(extra.end(), {"--epochs", "30"});
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
}

}  // namespace

TEST(RunConfigFile, ParsesKeyValueLines) {
    std::istringstream is("# comment\n\nlayers = 4\n  alpha=0.2  \r\n");
    const auto lines = read_config_lines(is, "t");
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0].key, "layers");
    EXPECT_EQ(lines[1].value, "0.2");
    EXPECT_EQ(lines[1].line, 4u);
}

TEST(RunConfigFile, RejectsMalformedLines) {
    std::istringstream dup("seed = 1\nseed = 2\n"), noeq("layers 3\n"), nokey(" = 3\n");
    EXPECT_THROW(read_config_lines(dup, "t"), parse_error);
    EXPECT_THROW(read_config_lines(noeq, "t"), parse_error);
    EXPECT_THROW(read_config_lines(nokey, "t"), parse_error);
}

TEST(RunConfigFile, UnknownKeysAndBadValuesAreRejected) {
    ConfigResolver res;
    std::istringstream unknown("laryers = 3\n"), bad("alpha = much\n");
    EXPECT_THROW(res.apply_stream(unknown, "t"), parse_error);
    EXPECT_THROW(res.apply_stream(bad, "t"), parse_error);
    EXPECT_THROW(res.apply_override("split", "sideways"), parse_error);
}

TEST(RunConfigFile, CommandLineBeatsFileBeatsDefaults) {
    ConfigResolver res;
    std::istringstream is("layers = 3\nalpha = 0.3\n");
    res.apply_stream(is, "f.cfg");
    res.apply_override("layers", "5");
    EXPECT_EQ(res.config().model.layers, 5u);
    EXPECT_EQ(res.config().model.alpha, 0.3);
    EXPECT_EQ(res.config().model.lambda, ModelConfig{}.lambda);
    ASSERT_EQ(res.log().size(), 3u);
    EXPECT_EQ(res.log()[2], "layers=5 (command line, overrides 3 from f.cfg:1)");
    bool lambda_defaulted = false;
    for (auto& [k, v] : res.defaulted()) lambda_defaulted |= k == "lambda";
    EXPECT_TRUE(lambda_defaulted);
}

TEST(RunConfigFile, DataFillsDimsAndCatchesMismatch) {
    ConfigResolver res;
    res.fill_from_data("feature_dim", 7);
    EXPECT_EQ(res.config().model.feature_dim, 7u);
    ConfigResolver clash;
    clash.apply_override("num_classes", "3");
    EXPECT_THROW(clash.fill_from_data("num_classes", 4), parse_error);
    EXPECT_NO_THROW(clash.fill_from_data("num_classes", 3));
}

TEST(RunConfigFile, EveryKeyRoundTrips) {
    RunConfig r;
    r.model.layers = 9;
    r.dataset = "x";
    r.split = SplitMode::PerClass;
    r.lp_test = 0.2;
    RunConfig back;
    for (auto& [k, v] : run_entries(r)) ASSERT_TRUE(apply_run_entry(back, k, v)) << k;
    EXPECT_EQ(run_entries(back), run_entries(r));
}

TEST(Cli, GenSyntheticTwoBlob) {
    TempDir d;
    auto args = [&](const std::string& out) {
        return std::vector<std::string>{"gen-synthetic", "--kind", "two-blob", "--n", "4000", "--dim", "2",
                                        "--seed", "5", "--out-dir", d / out};
    };
    ASSERT_EQ(run(args("a")).code, 0);
    ASSERT_EQ(run(args("b")).code, 0);
    const Graph g = load_dataset_dir(d / "a");
    EXPECT_EQ(g.num_nodes(), 4000u);
    ASSERT_TRUE(g.labels().has_value());
    const Curvature k(-1.0);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) EXPECT_NO_THROW(PoincarePoint(Vector(g.features().row(i).begin(), g.features().row(i).end()), k));
    for (auto f : {"edges.txt", "features.csv", "labels.csv"})
        EXPECT_EQ(slurp(d / ("a/" + std::string(f))), slurp(d / ("b/" + std::string(f)))) << f;
    EXPECT_EQ(run({"gen-synthetic", "--n", "3", "--out-dir", d / "c"}).code, cli::kParse);
}

TEST(Cli, TrainWritesArtifactsAndIsDeterministic) {
    TempDir d;
    ASSERT_EQ(run(sbm_data(d)).code, 0);
    const CliRun a = run(train_args(d, "r1", {"--seed", "7", "--layers", "2"}));
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out.find("test_accuracy="), std::string::npos);
    const std::string metrics = slurp(d / "r1/metrics.csv");
    EXPECT_EQ(metrics.rfind("# config: layers=2 ", 0), 0u);
    EXPECT_NE(metrics.find("\nepoch,train_loss,val_metric,test_metric,energy_first,energy_last\n1,"), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "r1/energy.csv"));
    EXPECT_TRUE(fs::exists(d / "r1/checkpoint.json"));

    ASSERT_EQ(run(train_args(d, "r2", {"--seed", "7", "--layers", "2"})).code, 0);
    EXPECT_EQ(metrics, slurp(d / "r2/metrics.csv"));

    const CliRun e = run({"eval", "--dataset-dir", d / "data", "--dataset", "sbm", "--out-dir", d / "r1"});
    ASSERT_EQ(e.code, 0) << e.err;
    const auto test_line = [](const std::string& s) { return s.substr(s.find("test_accuracy=")); };
    EXPECT_EQ(test_line(e.out), test_line(a.out));
}

TEST(Cli, ConfigFileAndOverridesReachTheModel) {
    TempDir d;
    ASSERT_EQ(run(sbm_data(d)).code, 0);
    std::ofstream(d / "run.cfg") << "layers = 3\nhidden_dim = 5\nepochs = 3\n";
    const CliRun r = run({"train", "--config", d / "run.cfg", "--layers", "4", "--dataset-dir", d / "data", "--dataset",
                       "sbm", "--out-dir", d / "o"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("layers=4 (command line, overrides 3 from"), std::string::npos);
    const auto [cfg, params] = load_checkpoint(d / "o/checkpoint.json");
    EXPECT_EQ(cfg.layers, 4u);
    EXPECT_EQ(cfg.hidden_dim, 5u);
    EXPECT_EQ(cfg.feature_dim, 6u);
}

TEST(Cli, LinkPredictionTrainAndEval) {
    TempDir d;
    ASSERT_EQ(run(sbm_data(d)).code, 0);
    const CliRun a = run(train_args(d, "lp", {"--task", "lp", "--seed", "2"}));
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out.find("test_roc_auc="), std::string::npos);
    const CliRun e = run({"eval", "--dataset-dir", d / "data", "--dataset", "sbm", "--out-dir", d / "lp"});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_EQ(e.out.substr(e.out.find("test_roc_auc=")), a.out.substr(a.out.find("test_roc_auc=")));
}

TEST(Cli, ExitCodes) {
    TempDir d;
    ASSERT_EQ(run(sbm_data(d)).code, 0);
    EXPECT_EQ(run({"train", "--no-such-flag"}).code, cli::kParse);
    EXPECT_EQ(run({}).code, cli::kParse);
    EXPECT_EQ(run(train_args(d, "x", {"--alpha", "1.5"})).code, cli::kParse);
    std::ofstream(d / "bad.cfg") << "layers = 2\nfoo = 1\n";
    EXPECT_EQ(run(train_args(d, "x", {"--config", d / "bad.cfg"})).code, cli::kParse);
    EXPECT_EQ(run({"train", "--dataset-dir", d / "missing", "--out-dir", d / "x"}).code, cli::kIo);
    EXPECT_EQ(run({"eval", "--dataset-dir", d / "data", "--dataset", "sbm", "--checkpoint", d / "none.json"}).code,
              cli::kIo);
    const CliRun div = run(train_args(d, "x", {"--lr", "1e300", "--epochs", "5"}));
    EXPECT_EQ(div.code, cli::kDivergence);
    EXPECT_NE(div.err.find("epoch"), std::string::npos);
    EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

TEST(Cli, WritesOnlyIntoOutDir) {
    TempDir d;
    ASSERT_EQ(run(sbm_data(d)).code, 0);
    auto snapshot = [&] {
        std::set<std::string> s;
        for (auto& e : fs::recursive_directory_iterator(d.path)) s.insert(e.path().string());
        return s;
    };
    const auto before = snapshot();
    ASSERT_EQ(run(train_args(d, "only", {"--epochs", "2"})).code, 0);
    ASSERT_EQ(run({"energy-trace", "--dataset-dir", d / "data", "--dataset", "sbm", "--layers", "3", "--out-dir",
                   d / "only"})
                  .code,
              0);
    ASSERT_EQ(run({"bench-midpoint", "--dims", "3", "--n-points", "50", "--trials", "1", "--out-dir", d / "only"}).code,
              0);
    for (const auto& p : snapshot()) {
        if (!before.contains(p)) {
            EXPECT_EQ(p.rfind(d / "only", 0), 0u) << p;
        }
    }
    const std::string trace = slurp(d / "only/energy_trace.csv");
    EXPECT_NE(trace.find("\nlayer,pure_aggregation,full,gamma0,no_mechanisms\n"), std::string::npos);
    EXPECT_NE(slurp(d / "only/midpoint.csv").find("\nmethod,dim,mse_vs_oracle,"), std::string::npos);
}

TEST(Cli, HelpListsEveryFlag) {
    const CliRun h = run({"train", "--help"});
    EXPECT_EQ(h.code, 0);
    for (auto& [key, v] : run_entries(RunConfig{}))
        EXPECT_NE(h.out.find(cli::detail::flag_name(key) + " "), std::string::npos) << key;
    for (auto flag : {"--config", "--dataset-dir", "--out-dir", "--layers", "--seed", "--task", "--alpha", "--lambda",
                      "--gamma", "--dropout", "--lr", "--epochs", "--kappa"})
        EXPECT_NE(h.out.find(flag), std::string::npos) << flag;
}
