#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fipgraph/error.hpp"
#include "fipgraph/netlist.hpp"

using namespace fipgraph;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kS27 = std::string(FIPGRAPH_TEST_DATA) + "/bench/s27.bench";

}  // namespace

TEST(GateKind, OneHotIndexIsStable) {
    EXPECT_EQ(kGateKindCount, 9u);
    const char* expected[] = {"INPUT", "AND", "NAND", "OR", "NOR", "NOT", "BUFF", "XOR", "DFF"};
    for (int i = 0; i < 9; ++i) {
        auto kind = gate_kind_from_index(i);
        ASSERT_TRUE(kind.has_value());
        EXPECT_EQ(static_cast<int>(*kind), i);
        EXPECT_EQ(to_string(*kind), expected[i]);
    }
    EXPECT_FALSE(gate_kind_from_index(9).has_value());
    EXPECT_FALSE(gate_kind_from_index(-1).has_value());
}

TEST(ParseBench, MinimalNotCircuit) {
    auto c = parse_bench("INPUT(G0)\nOUTPUT(G1)\nG1 = NOT(G0)\n");
    EXPECT_EQ(circuit_stats(c), (CircuitStats{1, 0, 1, 1, 2}));
    EXPECT_EQ(c.gate(*c.find_line("G1")).kind, GateKind::Not);
    EXPECT_TRUE(c.warnings().empty());
}

TEST(ParseBench, S27MatchesDeclarationCounts) {
    const auto text = read_file(kS27);
    // Count declarations straight from the text.
    std::size_t inputs = 0, outputs = 0, dffs = 0, assigns = 0;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        if (line.rfind("INPUT(", 0) == 0) ++inputs;
        if (line.rfind("OUTPUT(", 0) == 0) ++outputs;
        if (line.find("= DFF(") != std::string::npos) ++dffs;
        if (line.find(" = ") != std::string::npos) ++assigns;
    }
    auto c = parse_bench(text, "s27");
    const auto stats = circuit_stats(c);
    EXPECT_EQ(stats.pis, inputs);
    EXPECT_EQ(stats.pos, outputs);
    EXPECT_EQ(stats.dffs, dffs);
    EXPECT_EQ(stats.gates + stats.dffs, assigns);
    EXPECT_EQ(stats.pis, 4u);
    EXPECT_EQ(stats.pos, 1u);
    EXPECT_EQ(stats.dffs, 3u);
    EXPECT_EQ(stats.lines, 17u);
}

TEST(ParseBench, UnknownGateNamesKeywordAndLine) {
    try {
        (void)parse_bench("INPUT(G0)\nOUTPUT(G1)\nG1 = FOO(G0)\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_NE(std::string(e.what()).find("FOO"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(ParseBench, UndefinedSignalIsRejected) {
    EXPECT_THROW((void)parse_bench("INPUT(a)\nOUTPUT(y)\ny = AND(a, b)\n"), ParseError);
}

TEST(ParseBench, DuplicateDriverIsRejected) {
    EXPECT_THROW((void)parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\ny = BUFF(a)\n"), ParseError);
    EXPECT_THROW((void)parse_bench("INPUT(a)\nINPUT(a)\nOUTPUT(a)\n"), ParseError);
}

TEST(ParseBench, CombinationalCycleIsRejected) {
    try {
        (void)parse_bench("INPUT(x)\nOUTPUT(a)\na = NOT(b)\nb = NOT(a)\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("cycle"), std::string::npos);
    }
}

TEST(ParseBench, DffBreaksCycle) {
    auto c = parse_bench("INPUT(x)\nOUTPUT(d)\nq = DFF(d)\nd = NOT(q)\n");
    const auto order = levelize(c);
    ASSERT_EQ(order.size(), 1u);
    EXPECT_EQ(order[0], *c.find_line("d"));
}

TEST(ParseBench, ChainOrder) {
    auto c = parse_bench("INPUT(a)\nOUTPUT(c)\nc = NOT(b)\nb = NOT(a)\n");
    const auto order = levelize(c);
    ASSERT_EQ(order.size(), 2u);
    EXPECT_EQ(order[0], *c.find_line("b"));
    EXPECT_EQ(order[1], *c.find_line("c"));
}

TEST(ParseBench, EmptyTextWarnsNoOutputs) {
    auto c = parse_bench("");
    EXPECT_EQ(circuit_stats(c), (CircuitStats{}));
    ASSERT_EQ(c.warnings().size(), 1u);
    EXPECT_EQ(c.warnings()[0], "no outputs");
}

TEST(ParseBench, KeywordsAreCaseInsensitiveNamesAreNot) {
    auto c = parse_bench("input(a)\nInput(A)\noutput(y)\ny = nand(a, A)\n");
    EXPECT_EQ(c.primary_inputs().size(), 2u);
    EXPECT_EQ(c.gate(*c.find_line("y")).kind, GateKind::Nand);
}

TEST(ParseBench, XnorBecomesXorThenNot) {
    auto c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = XNOR(a, b)\n");
    const auto y = *c.find_line("y");
    EXPECT_EQ(c.gate(y).kind, GateKind::Not);
    const auto inner = c.gate(y).fanins.at(0);
    EXPECT_EQ(c.gate(inner).kind, GateKind::Xor);
    for (std::uint64_t a : {0ULL, ~0ULL})
        for (std::uint64_t b : {0ULL, ~0ULL}) {
            const std::uint64_t x[] = {a, b};
            EXPECT_EQ(eval_gate(GateKind::Not, std::span<const std::uint64_t>(
                                                   std::vector<std::uint64_t>{eval_gate(GateKind::Xor, x)})),
                      ~(a ^ b));
        }
}

TEST(ParseBench, DeclarationOrderIsIrrelevant) {
    auto a = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nn = AND(a, b)\ny = NOT(n)\n");
    auto b = parse_bench("y = NOT(n)\nOUTPUT(y)\nn = AND(a, b)\nINPUT(a)\nINPUT(b)\n");
    EXPECT_TRUE(structurally_equal(a, b));
}

TEST(ParseBench, RoundTripIsIdentity) {
    auto c = load_bench(kS27);
    auto again = parse_bench(write_bench(c), c.name());
    EXPECT_TRUE(structurally_equal(c, again));
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        GeneratorConfig cfg;
        cfg.seed = seed;
        cfg.gates = 60;
        cfg.dffs = 6;
        cfg.inputs = 5;
        auto g = generate_circuit(cfg);
        EXPECT_TRUE(structurally_equal(g, parse_bench(write_bench(g))));
    }
}

TEST(ParseBench, StructuralEqualityDetectsChanges) {
    auto a = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n");
    auto b = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = OR(a, b)\n");
    auto c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(b, a)\n");
    EXPECT_FALSE(structurally_equal(a, b));
    EXPECT_FALSE(structurally_equal(a, c));
}

TEST(Levelize, PermutationWithFaninsFirst) {
    std::vector<Circuit> circuits{load_bench(kS27)};
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        GeneratorConfig cfg;
        cfg.seed = seed;
        cfg.gates = 150;
        cfg.dffs = 12;
        circuits.push_back(generate_circuit(cfg));
    }
    for (const auto& c : circuits) {
        const auto order = levelize(c);
        std::set<GateId> comb;
        for (GateId g = 0; g < c.size(); ++g)
            if (c.gate(g).kind != GateKind::Input && c.gate(g).kind != GateKind::Dff) comb.insert(g);
        EXPECT_EQ(std::set<GateId>(order.begin(), order.end()), comb);
        EXPECT_EQ(order.size(), comb.size());
        std::vector<std::size_t> pos(c.size(), 0);
        for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
        for (GateId g : order)
            for (LineId f : c.gate(g).fanins)
                if (comb.count(f)) EXPECT_LT(pos[f], pos[g]);
    }
}

TEST(Generator, IsSeededAndWellFormed) {
    GeneratorConfig cfg;
    cfg.seed = 7;
    cfg.gates = 80;
    cfg.dffs = 8;
    cfg.inputs = 6;
    cfg.outputs = 3;
    auto a = generate_circuit(cfg);
    auto b = generate_circuit(cfg);
    EXPECT_EQ(write_bench(a), write_bench(b));
    cfg.seed = 8;
    EXPECT_NE(write_bench(a), write_bench(generate_circuit(cfg)));

    const auto stats = circuit_stats(a);
    EXPECT_EQ(stats.pis, 6u);
    EXPECT_EQ(stats.dffs, 8u);
    EXPECT_EQ(stats.gates, 80u);
    EXPECT_GE(stats.pos, 3u);
    // Every PI and DFF output is consumed.
    for (auto pi : a.primary_inputs()) EXPECT_FALSE(a.line(pi).sinks.empty());
    for (auto d : a.dffs()) EXPECT_FALSE(a.line(d).sinks.empty());
}

TEST(EvalGate, TruthTables) {
    const std::uint64_t a = 0b1100, b = 0b1010;
    const std::uint64_t in[] = {a, b};
    EXPECT_EQ(eval_gate(GateKind::And, in) & 0xF, 0b1000u);
    EXPECT_EQ(eval_gate(GateKind::Nand, in) & 0xF, 0b0111u);
    EXPECT_EQ(eval_gate(GateKind::Or, in) & 0xF, 0b1110u);
    EXPECT_EQ(eval_gate(GateKind::Nor, in) & 0xF, 0b0001u);
    EXPECT_EQ(eval_gate(GateKind::Xor, in) & 0xF, 0b0110u);
}
