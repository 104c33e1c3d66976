#include <gtest/gtest.h>

#include "fipgraph/error.hpp"
#include "fipgraph/testability.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace fipgraph;

using fixtures::random_tree;

namespace {

const char* kReference = fixtures::kScoapReference;
const auto& kHand = fixtures::kScoapHand;

}  // namespace

TEST(Scoap, ReferenceCircuitMatchesHandDerivation) {
    auto c = parse_bench(kReference);
    for (std::size_t frames : {1u, 3u}) {
        auto s = compute_scoap(c, frames);
        for (std::size_t t = 0; t < frames; ++t)
            for (const auto& [name, e] : kHand) {
                const auto l = *c.find_line(name);
                EXPECT_EQ(s.cc0[s.index(t, l)], e.cc0) << name;
                EXPECT_EQ(s.cc1[s.index(t, l)], e.cc1) << name;
                EXPECT_EQ(s.co[s.index(t, l)], e.co) << name;
            }
    }
}

TEST(Scoap, PrimaryInputConvention) {
    auto c = parse_bench(kReference);
    auto s = compute_scoap(c, 4);
    for (std::size_t t = 0; t < 4; ++t)
        for (auto pi : c.primary_inputs()) {
            EXPECT_EQ(s.cc0[s.index(t, pi)], 1u);
            EXPECT_EQ(s.cc1[s.index(t, pi)], 1u);
        }
}

TEST(Scoap, AndOfInputs) {
    auto c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(c)\nc = AND(a, b)\n");
    auto s = compute_scoap(c, 2);
    const auto l = *c.find_line("c");
    EXPECT_EQ(s.cc1[s.index(0, l)], 3u);
    EXPECT_EQ(s.cc0[s.index(0, l)], 2u);
    EXPECT_EQ(s.co[s.index(1, l)], 0u);
}

TEST(Scoap, FlipFlopResetAndDelay) {
    auto c = parse_bench("INPUT(a)\nOUTPUT(d)\nq = DFF(d)\nd = AND(a, q)\n");
    auto s = compute_scoap(c, 3);
    const auto q = *c.find_line("q"), d = *c.find_line("d"), a = *c.find_line("a");
    EXPECT_EQ(s.cc0[s.index(0, q)], 1u);
    EXPECT_EQ(s.cc1[s.index(0, q)], kScoapUnreachable);
    EXPECT_EQ(s.cc0[s.index(0, d)], 2u);
    EXPECT_EQ(s.cc1[s.index(0, d)], kScoapUnreachable);
    EXPECT_EQ(s.cc0[s.index(1, q)], 3u);
    EXPECT_EQ(s.cc0[s.index(2, q)], 3u);
    EXPECT_EQ(s.co[s.index(2, q)], 2u);
    EXPECT_EQ(s.co[s.index(2, a)], kScoapUnreachable);
}

TEST(Scoap, FlipFlopInputInheritsNextFrameObservability) {
    auto c = parse_bench("INPUT(a)\nOUTPUT(y)\nq = DFF(a)\ny = BUFF(q)\n");
    auto s = compute_scoap(c, 3);
    const auto q = *c.find_line("q"), a = *c.find_line("a");
    EXPECT_EQ(s.co[s.index(2, q)], 1u);
    EXPECT_EQ(s.co[s.index(2, a)], kScoapUnreachable);
    EXPECT_EQ(s.co[s.index(1, a)], 2u);
    EXPECT_EQ(s.co[s.index(0, a)], 2u);
}

TEST(Scoap, ControllabilityIsPrefixStable) {
    GeneratorConfig cfg;
    cfg.seed = 3;
    cfg.gates = 80;
    cfg.dffs = 8;
    auto c = generate_circuit(cfg);
    auto short_run = compute_scoap(c, 4);
    auto long_run = compute_scoap(c, 9);
    auto cop_short = compute_cop(c, 4);
    auto cop_long = compute_cop(c, 9);
    for (std::size_t i = 0; i < short_run.cc0.size(); ++i) {
        EXPECT_EQ(short_run.cc0[i], long_run.cc0[i]);
        EXPECT_EQ(short_run.cc1[i], long_run.cc1[i]);
        EXPECT_EQ(cop_short.c1[i], cop_long.c1[i]);
    }
}

TEST(Scoap, ZeroFramesIsAnError) {
    auto c = parse_bench(kReference);
    EXPECT_THROW((void)compute_scoap(c, 0), ConfigError);
    EXPECT_THROW((void)compute_cop(c, 0), ConfigError);
}

TEST(Cop, Conventions) {
    auto c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(c)\nc = AND(a, b)\n");
    auto p = compute_cop(c, 1);
    EXPECT_EQ(p.c1[*c.find_line("a")], 0.5);
    EXPECT_EQ(p.c1[*c.find_line("c")], 0.25);
    EXPECT_EQ(p.o[*c.find_line("c")], 1.0);
    EXPECT_EQ(p.o[*c.find_line("a")], 0.5);
}

TEST(Cop, FlipFlopCarriesProbabilityWithResetAtFrameZero) {
    auto c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nd = OR(a, b)\nq = DFF(d)\ny = BUFF(q)\n");
    auto p = compute_cop(c, 3);
    const auto q = *c.find_line("q");
    EXPECT_EQ(p.c1[p.index(0, q)], 0.0);
    EXPECT_EQ(p.c1[p.index(1, q)], 0.75);
    EXPECT_EQ(p.o[p.index(2, *c.find_line("d"))], 0.0);
    EXPECT_EQ(p.o[p.index(1, *c.find_line("d"))], 1.0);
}

TEST(Cop, TreesMatchExhaustiveProbabilities) {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        auto c = random_tree(seed, 2 + seed % 8);
        auto p = compute_cop(c, 1);
        const auto pis = c.primary_inputs().size();
        const auto po = c.primary_outputs()[0];
        const double total = static_cast<double>(1ULL << pis);
        for (LineId l = 0; l < c.size(); ++l) {
            std::uint64_t ones = 0, flips = 0;
            for (std::uint64_t idx = 0; idx < (1ULL << pis); ++idx) {
                auto stim = oracle::sequence_from_index(idx, 1, pis);
                auto good = oracle::naive_run(c, stim, {});
                ones += good[0][l];
                // Observability: does forcing the complement change the output?
                auto forced = oracle::naive_run(c, stim, {}, Fault{l, good[0][l] ? FaultKind::SA0 : FaultKind::SA1});
                flips += forced[0][po] != good[0][po];
            }
            EXPECT_NEAR(p.c1[l], ones / total, 1e-12) << "seed " << seed << " line " << c.line(l).name;
            EXPECT_NEAR(p.o[l], flips / total, 1e-12) << "seed " << seed << " line " << c.line(l).name;
        }
    }
}

TEST(Cop, XorRule) {
    auto c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nn = AND(a, b)\ny = XOR(n, a)\n");
    auto p = compute_cop(c, 1);
    // Independence assumption: 0.25*0.5 + 0.5*0.75.
    EXPECT_DOUBLE_EQ(p.c1[*c.find_line("y")], 0.25 * 0.5 + 0.5 * 0.75);
}

TEST(Normalize, MinMaxFormula) {
    const std::vector<double> v{2, 3, 4};
    MinMax used;
    EXPECT_EQ(minmax_normalize(v, &used), (std::vector<double>{0, 0.5, 1}));
    EXPECT_EQ(used.min, 2);
    EXPECT_EQ(used.max, 4);
    const std::vector<double> flat{7, 7, 7};
    EXPECT_EQ(minmax_normalize(flat), (std::vector<double>{0, 0, 0}));
}

TEST(Normalize, UnreachableMapsToMaxAndCopPassesThrough) {
    auto c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nq = DFF(d)\nd = AND(a, b)\ny = OR(q, d)\n");
    auto t = compute_testability(c, 3);
    const auto q = *c.find_line("q");
    // Frame-0 CC1 of q is unreachable and takes the largest reachable value, CC1(q) at frame 1 = 3 + 1.
    EXPECT_EQ(t.cc1n[t.index(0, q)], 1.0);
    EXPECT_EQ(t.cc1n[t.index(1, q)], 1.0);
    EXPECT_EQ(t.cc1_range.max, 4.0);
    EXPECT_LT(t.cc1_range.max, static_cast<double>(kScoapUnreachable));
    for (std::size_t i = 0; i < t.cc0n.size(); ++i) {
        for (double v : {t.cc0n[i], t.cc1n[i], t.con[i]}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    auto cop = compute_cop(c, 3);
    EXPECT_EQ(t.cop.c1, cop.c1);
    EXPECT_EQ(t.cop.o, cop.o);
}

TEST(Testability, CsvLayout) {
    auto c = parse_bench(kReference);
    auto csv = testability_csv(c, compute_testability(c, 2));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "line,cycle,cc0n,cc1n,con,c1,o");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(1 + c.size() * 2));
}

TEST(Testability, ObservingMoreLinesLowersObservabilityCost) {
    GeneratorConfig cfg;
    cfg.seed = 12;
    cfg.gates = 60;
    cfg.dffs = 6;
    auto c = generate_circuit(cfg);
    ObservationSet po, both;
    both.include_ppos = true;
    auto a = compute_scoap(c, 5, po);
    auto b = compute_scoap(c, 5, both);
    auto pa = compute_cop(c, 5, po);
    auto pb = compute_cop(c, 5, both);
    for (std::size_t i = 0; i < a.co.size(); ++i) {
        EXPECT_LE(b.co[i], a.co[i]);
        EXPECT_GE(pb.o[i] + 1e-15, pa.o[i]);
    }
}
