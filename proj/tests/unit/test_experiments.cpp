#include <gtest/gtest.h>

#include <sstream>

#include "dhgcn/experiments.hpp"

using namespace dhgcn;
using namespace dhgcn::experiments;

TEST(Experiments, SummarizeIsPopulationStatistics) {
    const Stat s = summarize({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
    EXPECT_EQ(summarize({}).mean, 0.0);
}

TEST(Experiments, MidpointBenchRowsAndOrdering) {
    MidpointBenchConfig cfg;
    cfg.dims = {4, 8};
    cfg.n_points = 300;
    cfg.trials = 2;
    const auto rows = bench_midpoint(cfg);
    ASSERT_EQ(rows.size(), 6u);
    for (std::size_t i = 0; i < rows.size(); i += 3) {
        EXPECT_EQ(rows[i].method, "tangential");
        EXPECT_EQ(rows[i + 1].method, "gyro");
        EXPECT_EQ(rows[i + 2].method, "frechet_oracle");
        EXPECT_GT(rows[i].mse.mean, rows[i + 1].mse.mean);
        EXPECT_EQ(rows[i + 2].mse.mean, 0.0);
    }
    std::ostringstream os;
    write_midpoint_csv(os, rows, cfg);
    EXPECT_EQ(os.str().rfind("# config: dims=4;8 ", 0), 0u);
    EXPECT_NE(os.str().find("\nmethod,dim,mse_vs_oracle,"), std::string::npos);
}

TEST(Experiments, MidpointBenchIsDeterministicApartFromTiming) {
    MidpointBenchConfig cfg;
    cfg.dims = {3};
    cfg.n_points = 100;
    cfg.trials = 1;
    cfg.seed = 4;
    const auto a = bench_midpoint(cfg), b = bench_midpoint(cfg);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].mse.mean, b[i].mse.mean);
}

TEST(Experiments, TransformBenchShortRun) {
    TransformBenchConfig cfg;
    cfg.batch = 200;
    cfg.steps = 150;
    cfg.timing_repeats = 1;
    const auto rows = bench_transform(cfg);
    ASSERT_EQ(rows.size(), 6u);
    for (const auto& r : rows) {
        EXPECT_GE(r.test_accuracy, 0.0);
        EXPECT_LE(r.test_accuracy, 1.0);
        EXPECT_GT(r.wall_ms, 0.0);
    }
    // task 1 is linearly separable enough for every layer after a short run
    for (std::size_t i = 0; i < 3; ++i) EXPECT_GT(rows[i].test_accuracy, 0.9) << to_string(rows[i].layer);
    TransformBenchConfig odd = cfg;
    odd.batch = 7;
    EXPECT_THROW(bench_transform(odd), std::invalid_argument);
}

TEST(Experiments, PureAggregationTraceIsNonincreasing) {
    SyntheticSpec s;
    s.kind = SyntheticKind::Sbm;
    s.n_points = 50;
    s.dim = 6;
    s.p_in = 0.15;
    s.p_out = 0.05;
    s.seed = 9;
    const Graph g = gen_sbm(s);
    const Curvature k(-1.0);
    const ModelInput in = ModelInput::from(g, k);
    Rng rng(2);
    Matrix h(50, 6);
    for (std::size_t i = 0; i < 50; ++i) {
        auto p = uniform_in_ball(6, 0.9, rng);
        std::copy(p.begin(), p.end(), h.row(i).begin());
    }
    const EnergyTrace t = pure_aggregation_trace(in, ad::Tensor::from_matrix(h), 32, k);
    ASSERT_EQ(t.values.size(), 33u);
    EXPECT_LE(max_increase(t), 1e-10);
    EXPECT_LT(t.last(), 1e-2 * t.first());
}

TEST(Experiments, EnergyTracesHaveOneRowPerLayer) {
    SyntheticSpec s;
    s.kind = SyntheticKind::Sbm;
    s.n_points = 40;
    s.dim = 5;
    s.seed = 3;
    const Graph g = gen_sbm(s);
    ModelConfig cfg;
    cfg.layers = 6;
    cfg.feature_dim = 5;
    cfg.hidden_dim = 4;
    cfg.num_classes = 2;
    const ModelInput in = ModelInput::from(g, cfg.curvature());
    const EnergyTraces t = energy_traces(in, cfg, fresh_params());
    for (const auto* tr : {&t.pure_aggregation, &t.full, &t.gamma_zero, &t.no_mechanisms}) {
        ASSERT_EQ(tr->values.size(), 7u);
        for (double v : tr->values) EXPECT_GE(v, 0.0);
    }
    // fresh parameters do not depend on gamma
    EXPECT_EQ(t.full.values, t.gamma_zero.values);
    std::ostringstream os;
    write_energy_traces_csv(os, t, cfg);
    EXPECT_NE(os.str().find("\nlayer,pure_aggregation,full,gamma0,no_mechanisms\n"), std::string::npos);
}

TEST(Experiments, TrainedTracesOnBlockGraph) {
    SyntheticSpec s;
    s.kind = SyntheticKind::Sbm;
    s.n_points = 120;
    s.blocks = 3;
    s.dim = 8;
    s.p_in = 0.1;
    s.p_out = 0.01;
    s.seed = 4;
    const Graph g = gen_sbm(s);
    const NcSplit split = split_nc_per_class(g, 10, 30, 60, 0);
    ModelConfig cfg;
    cfg.layers = 8;
    cfg.feature_dim = 8;
    cfg.num_classes = 3;
    cfg.epochs = 150;
    cfg.patience = 150;
    cfg.gamma = 1e-3;
    const EnergyTraces t =
        energy_traces(ModelInput::from(g, cfg.curvature()), cfg, trained_params(g, split));
    EXPECT_LE(max_increase(t.pure_aggregation), 1e-10);
    EXPECT_GE(t.full.last(), 0.1 * t.full.first());
    EXPECT_GE(t.full.last(), t.gamma_zero.last());
}
