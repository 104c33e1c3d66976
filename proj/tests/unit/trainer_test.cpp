#include <gtest/gtest.h>

#include <cmath>

#include "fipgraph/error.hpp"
#include "fipgraph/trainer.hpp"

using namespace fipgraph;

namespace {

ModelConfig tiny_model() {
    ModelConfig c;
    c.d = 8;
    c.heads = 2;
    c.spatial_layers = 1;
    c.temporal_layers = 1;
    c.time_dim = 2;
    c.m = 3;
    c.s = 2;
    c.p = 2;
    c.q = 2;
    return c;
}

Dataset tiny_dataset(std::size_t circuits, std::size_t total_cycles = 6) {
    Dataset d;
    d.mode = FeatureMode::FIP;
    d.m = 3;
    d.s = 2;
    d.p = 2;
    d.q = 2;
    ConvertConfig cc;
    cc.total_cycles = total_cycles;
    cc.m = 3;
    cc.s = 2;
    cc.n_patterns = 128;
    cc.observe.include_ppos = true;
    for (std::size_t i = 0; i < circuits; ++i) {
        GeneratorConfig g;
        g.seed = 100 + i;
        g.inputs = 3;
        g.dffs = 2;
        g.gates = 8 + 3 * i;
        g.name = "toy" + std::to_string(i);
        d.circuits.push_back(convert_circuit(generate_circuit(g), cc));
    }
    return d;
}

std::vector<CircuitSize> named(std::size_t n) {
    std::vector<CircuitSize> out;
    // Listed out of order to exercise the gate-count sort.
    for (std::size_t i = n; i-- > 0;) out.push_back({"c" + std::to_string(i), 10 * (i + 1)});
    return out;
}

std::vector<std::string> names(const std::vector<CircuitSize>& c, const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(c[i].name);
    return out;
}

}  // namespace

TEST(Split, UniformAndSparse) {
    const auto c = named(6);
    auto u = split_circuits(c, SplitStrategy::Uniform);
    EXPECT_EQ(names(c, u.train), (std::vector<std::string>{"c0", "c2", "c4"}));
    EXPECT_EQ(names(c, u.test), (std::vector<std::string>{"c1", "c3", "c5"}));
    auto s = split_circuits(c, SplitStrategy::Sparse);
    EXPECT_EQ(names(c, s.train), (std::vector<std::string>{"c0", "c3"}));
    EXPECT_EQ(names(c, s.test), (std::vector<std::string>{"c1", "c2", "c4", "c5"}));
    EXPECT_THROW((void)split_circuits(named(1), SplitStrategy::Uniform), ConfigError);
    EXPECT_THROW((void)split_from_string("dense"), ConfigError);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
    auto d = tiny_dataset(2);
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.epochs = 3;
    cfg.lr = 0;
    cfg.seed = 4;
    auto r = train(d, cfg);
    Model init(cfg.model, cfg.seed);
    for (const auto& [name, p] : init.params.entries()) EXPECT_EQ(r.model.params.at(name).value, p.value) << name;
}

TEST(Train, SeededRerunIsBitIdentical) {
    auto d = tiny_dataset(3);
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.epochs = 4;
    cfg.lr = 0.01;
    auto a = train(d, cfg);
    auto b = train(d, cfg);
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
    EXPECT_EQ(checkpoint_bytes(a.model.params, a.model.config.to_json()),
              checkpoint_bytes(b.model.params, b.model.config.to_json()));
    EXPECT_EQ(a.train_circuits, (std::vector<std::string>{"toy0", "toy2"}));
    EXPECT_EQ(a.test_circuits, (std::vector<std::string>{"toy1"}));
    cfg.seed = 2;
    EXPECT_NE(train(d, cfg).epoch_loss, a.epoch_loss);
}

TEST(Train, SingleSampleIsMemorized) {
    // 5 + 5 cycles hold exactly one FIP-5 window.
    ConvertConfig cc;
    cc.total_cycles = 10;
    cc.n_patterns = 256;
    cc.observe.include_ppos = true;
    GeneratorConfig g;
    g.seed = 7;
    g.gates = 15;
    auto samples = convert_circuit(generate_circuit(g), cc);
    ASSERT_EQ(samples.samples.size(), 1u);
    TrainConfig cfg;
    cfg.model.d = 16;
    cfg.model.heads = 4;
    cfg.model.m = 5;
    cfg.model.s = 5;
    cfg.epochs = 200;
    cfg.lr = 0.05;
    auto r = train_samples({&samples.samples[0]}, cfg);
    ASSERT_EQ(r.epoch_loss.size(), 200u);
    EXPECT_GE(r.epoch_loss.front() / r.epoch_loss.back(), 10.0)
        << "first " << r.epoch_loss.front() << " last " << r.epoch_loss.back();
}

TEST(Train, ShapeMismatchIsRejected) {
    auto d = tiny_dataset(2);
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.model.s = 3;
    EXPECT_THROW((void)train(d, cfg), ConfigError);
    cfg.model = tiny_model();
    cfg.epochs = 0;
    EXPECT_THROW((void)train(d, cfg), ConfigError);
}

TEST(LossCsv, Layout) { EXPECT_EQ(loss_csv({0.5, 0.25}), "epoch,mse\n1,0.5\n2,0.25\n"); }

TEST(Evaluate, AverageRowsAndTags) {
    auto d = tiny_dataset(4);
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.epochs = 2;
    cfg.lr = 0.01;
    auto r = train(d, cfg);
    auto t1 = evaluate(r.model, d, SplitStrategy::Uniform, 1);
    auto t4 = evaluate(r.model, d, SplitStrategy::Uniform, 4);
    EXPECT_EQ(t1.to_csv(), t4.to_csv());
    EXPECT_EQ(t1.tag, "FIP-2-U");
    ASSERT_EQ(t1.rows.size(), 4u);
    double rmse = 0, mae = 0;
    int tests = 0;
    for (const auto& row : t1.rows) {
        EXPECT_EQ(row.windows, 2u);
        if (row.split != "test") continue;
        rmse += row.rmse;
        mae += row.mae;
        ++tests;
    }
    EXPECT_EQ(tests, 2);
    EXPECT_NEAR(t1.average("test").rmse, rmse / 2, 1e-12);
    EXPECT_NEAR(t1.average("test").mae, mae / 2, 1e-12);
    EXPECT_EQ(t1.rows[1].split, "test");
    EXPECT_EQ(t1.rows[2].split, "train");
}

TEST(Evaluate, ConstantHalfOnZeroLabels) {
    Tensor y = Tensor::Zero(3, 4);
    auto m = compute_metrics(y, Tensor::Constant(3, 4, 0.5));
    EXPECT_EQ(m.rmse, 0.5);
    EXPECT_EQ(m.mae, 0.5);
}

TEST(Ablation, EveryVariantFiniteAndFullIsBaseline) {
    auto d = tiny_dataset(3);
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.epochs = 2;
    cfg.lr = 0.01;
    cfg.threads = 4;
    auto rows = run_ablation(d, cfg, {1, 2});
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0].variant, Variant::Full);
    EXPECT_EQ(rows[0].delta_rmse, 0.0);
    EXPECT_EQ(rows[0].delta_mae, 0.0);
    for (const auto& r : rows) {
        EXPECT_TRUE(std::isfinite(r.median_rmse) && std::isfinite(r.median_mae)) << to_string(r.variant);
        EXPECT_EQ(r.rmse.size(), 2u);
    }
    cfg.threads = 1;
    EXPECT_EQ(ablation_csv(run_ablation(d, cfg, {1, 2})), ablation_csv(rows));
}
