#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fipgraph/autodiff.hpp"
#include "fipgraph/error.hpp"

using namespace fipgraph;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(r, c);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
    return t;
}

// Projects an op output onto fixed random weights so every output entry matters.
Var project(Tape& tape, Var out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(hadamard(out, tape.constant(random_tensor(rng, out.rows(), out.cols()))));
}

double check(ParamStore& store, const LossFn& fn) {
    GradCheckOptions opt;
    opt.floor = 1e-8;
    return grad_check(fn, store, opt).max_rel_error;
}

}  // namespace

TEST(Ops, ForwardConventions) {
    Tape tape;
    Tensor zero = Tensor::Zero(1, 1);
    EXPECT_EQ(sigmoid(tape.constant(zero)).value()(0, 0), 0.5);
    EXPECT_EQ(row_softmax(tape.constant(Tensor::Constant(1, 1, 3.7))).value()(0, 0), 1.0);
    auto ln = layer_norm(tape.constant(Tensor::Constant(2, 4, 2.5)), tape.constant(Tensor::Ones(1, 4)),
                         tape.constant(Tensor::Zero(1, 4)));
    EXPECT_TRUE(ln.value().isZero(0.0));
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
    Tape tape;
    auto a = tape.constant(Tensor::Zero(2, 3));
    auto b = tape.constant(Tensor::Zero(2, 3));
    try {
        (void)matmul(a, b);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("vs [2x3]"), std::string::npos);
    }
    EXPECT_THROW((void)add(a, tape.constant(Tensor::Zero(3, 3))), ShapeError);
    EXPECT_THROW((void)hadamard(a, tape.constant(Tensor::Zero(3, 2))), ShapeError);
}

TEST(Backward, SumGivesOnes) {
    ParamStore store;
    store.add("W", Tensor::Constant(3, 2, 0.7));
    Tape tape;
    tape.backward(sum(tape.param(store, "W")));
    EXPECT_TRUE(store.at("W").grad.isOnes(0.0));
}

TEST(Backward, UnreachedParameterGetsZero) {
    ParamStore store;
    store.add("used", Tensor::Constant(1, 1, 2.0));
    store.add("unused", Tensor::Constant(1, 1, 2.0));
    Tape tape;
    (void)tape.param(store, "unused");
    tape.backward(sum(tape.param(store, "used")));
    EXPECT_EQ(store.at("unused").grad(0, 0), 0.0);
}

TEST(Backward, NonScalarLossIsAnError) {
    ParamStore store;
    store.add("W", Tensor::Zero(2, 2));
    Tape tape;
    EXPECT_THROW(tape.backward(tape.param(store, "W")), ShapeError);
}

TEST(Backward, SigmoidSlopeAtZero) {
    ParamStore store;
    store.add("x", Tensor::Zero(1, 1));
    Tape tape;
    tape.backward(sigmoid(tape.param(store, "x")));
    const double analytic = store.at("x").grad(0, 0);
    EXPECT_EQ(analytic, 0.25);
    const double h = 1e-5;
    const double fd = (1.0 / (1.0 + std::exp(-h)) - 1.0 / (1.0 + std::exp(h))) / (2 * h);
    EXPECT_NEAR(analytic, fd, 1e-8);
}

TEST(Backward, EveryPrimitiveMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    ParamStore store;
    store.add("A", random_tensor(rng, 4, 3));
    store.add("B", random_tensor(rng, 3, 5));
    store.add("C", random_tensor(rng, 4, 3));
    store.add("row", random_tensor(rng, 1, 3));
    store.add("gamma", random_tensor(rng, 1, 3, 0.5, 1.5));
    store.add("beta", random_tensor(rng, 1, 3));
    store.add("alpha", random_tensor(rng, 6, 2));
    store.add("V", random_tensor(rng, 6, 4));
    const Index gather{0, 2, 2, 3, 1, 0};
    const Index seg{1, 0, 1, 2, 2, 2};
    Tensor target = random_tensor(rng, 4, 3, 0, 1);

    std::vector<std::pair<std::string, LossFn>> cases{
        {"matmul", [&](Tape& t) { return project(t, matmul(t.param(store, "A"), t.param(store, "B")), 1); }},
        {"add", [&](Tape& t) { return project(t, add(t.param(store, "A"), t.param(store, "C")), 2); }},
        {"add_row", [&](Tape& t) { return project(t, add(t.param(store, "A"), t.param(store, "row")), 3); }},
        {"hadamard", [&](Tape& t) { return project(t, hadamard(t.param(store, "A"), t.param(store, "C")), 4); }},
        {"concat", [&](Tape& t) { return project(t, concat({t.param(store, "A"), t.param(store, "C")}), 5); }},
        {"sigmoid", [&](Tape& t) { return project(t, sigmoid(t.param(store, "A")), 6); }},
        {"row_softmax", [&](Tape& t) { return project(t, row_softmax(t.param(store, "A")), 7); }},
        {"layer_norm",
         [&](Tape& t) {
             return project(t, layer_norm(t.param(store, "A"), t.param(store, "gamma"), t.param(store, "beta")), 8);
         }},
        {"scale", [&](Tape& t) { return project(t, scale(t.param(store, "A"), -1.7), 9); }},
        {"mse", [&](Tape& t) { return mse(t.param(store, "A"), target, {1, 0, 1, 1}); }},
        {"gather_rows", [&](Tape& t) { return project(t, gather_rows(t.param(store, "A"), gather), 10); }},
        {"scatter_add_rows", [&](Tape& t) { return project(t, scatter_add_rows(t.param(store, "V"), seg, 3), 11); }},
        {"segment_softmax", [&](Tape& t) { return project(t, segment_softmax(t.param(store, "alpha"), seg, 3), 12); }},
        {"rowdot_heads",
         [&](Tape& t) {
             auto v = t.param(store, "V");
             return project(t, rowdot_heads(v, sigmoid(v), 2), 13);
         }},
        {"head_mul", [&](Tape& t) { return project(t, head_mul(t.param(store, "alpha"), t.param(store, "V")), 14); }},
        {"slice_cols", [&](Tape& t) { return project(t, slice_cols(t.param(store, "V"), 1, 2), 15); }},
        {"mean_of", [&](Tape& t) { return project(t, mean_of({t.param(store, "A"), t.param(store, "C")}), 16); }},
        {"relu", [&](Tape& t) { return project(t, relu(t.param(store, "A")), 17); }},
    };
    for (const auto& [name, fn] : cases) EXPECT_LE(check(store, fn), 1e-6) << name;
}

TEST(Backward, TwoLayerNetwork) {
    std::mt19937_64 rng(11);
    ParamStore store;
    store.add_xavier("W1", 6, 8, rng);
    store.add_xavier("b1", 1, 8, rng);
    store.add_xavier("W2", 8, 3, rng);
    const Tensor x = random_tensor(rng, 5, 6);
    const Tensor y = random_tensor(rng, 5, 3, 0, 1);
    auto fn = [&](Tape& t) {
        auto h = sigmoid(add(matmul(t.constant(x), t.param(store, "W1")), t.param(store, "b1")));
        return mse(sigmoid(matmul(h, t.param(store, "W2"))), y);
    };
    EXPECT_LE(check(store, fn), 1e-4);
}

TEST(GradCheck, LinearModelIsExact) {
    std::mt19937_64 rng(2);
    ParamStore store;
    store.add_xavier("W", 4, 3, rng);
    const Tensor x = random_tensor(rng, 6, 4);
    const Tensor y = random_tensor(rng, 6, 3);
    auto fn = [&](Tape& t) { return mse(matmul(t.constant(x), t.param(store, "W")), y); };
    EXPECT_LE(check(store, fn), 1e-9);
}

TEST(GradCheck, ZeroStepIsAnError) {
    ParamStore store;
    store.add("W", Tensor::Zero(1, 1));
    GradCheckOptions opt;
    opt.eps = 0;
    try {
        (void)grad_check([&](Tape& t) { return sum(t.param(store, "W")); }, store, opt);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_STREQ(e.what(), "step must be positive");
    }
}

TEST(GradCheck, SubsamplesLargeTensors) {
    std::mt19937_64 rng(3);
    ParamStore store;
    store.add_xavier("big", 20, 20, rng);
    store.add_xavier("small", 2, 3, rng);
    auto r = grad_check([&](Tape& t) { return project(t, sigmoid(t.param(store, "big")), 1); }, store);
    EXPECT_EQ(r.probes, 64u + 6u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    std::mt19937_64 rng(1);
    ParamStore store;
    store.add_xavier("W", 3, 3, rng);
    const Tensor before = store.at("W").value;
    adam_step(store, {});
    EXPECT_EQ(store.at("W").value, before);
    EXPECT_EQ(store.at("W").step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParamStore store;
    store.add("x", Tensor::Constant(1, 1, 1.0));
    store.at("x").grad(0, 0) = 1.0;
    AdamOptions opt;
    opt.lr = 0.05;
    adam_step(store, opt);
    // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
    EXPECT_NEAR(1.0 - store.at("x").value(0, 0), 0.05 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, Deterministic) {
    auto run = [] {
        std::mt19937_64 rng(9);
        ParamStore store;
        store.add_xavier("W", 4, 4, rng);
        for (int i = 0; i < 5; ++i) {
            store.zero_grad();
            Tape t;
            t.backward(project(t, sigmoid(t.param(store, "W")), 3));
            adam_step(store, {});
        }
        return store.at("W").value;
    };
    EXPECT_EQ(run(), run());
}

TEST(Init, XavierBoundsAndSeed) {
    std::mt19937_64 a(4), b(4);
    ParamStore s1, s2;
    s1.add_xavier("W", 10, 6, a);
    s2.add_xavier("W", 10, 6, b);
    EXPECT_EQ(s1.at("W").value, s2.at("W").value);
    const double bound = std::sqrt(6.0 / 16.0);
    EXPECT_LE(s1.at("W").value.cwiseAbs().maxCoeff(), bound);
}

TEST(Checkpoint, RoundTripAndHashGuard) {
    std::mt19937_64 rng(8);
    ParamStore store;
    store.add_xavier("a", 3, 4, rng);
    store.add_xavier("b", 1, 2, rng);
    const nlohmann::json config = {{"d", 4}};
    const auto path = std::filesystem::temp_directory_path() / "fipgraph_ckpt_test.bin";
    save_checkpoint(path, store, config);
    ParamStore back;
    auto cfg = load_checkpoint(path, back, config_hash(config));
    EXPECT_EQ(cfg, config);
    EXPECT_EQ(back.at("a").value, store.at("a").value);
    EXPECT_EQ(back.at("b").value, store.at("b").value);
    EXPECT_EQ(checkpoint_bytes(back, cfg), checkpoint_bytes(store, config));
    EXPECT_THROW((void)load_checkpoint(path, back, config_hash({{"d", 8}})), ConfigError);
    auto bytes = checkpoint_bytes(store, config);
    bytes[0] = 'X';
    EXPECT_THROW((void)parse_checkpoint(bytes, back), SchemaError);
    std::filesystem::remove(path);
}
