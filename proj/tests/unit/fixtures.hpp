#pragma once

// Small circuits with hand-derived or exhaustively checkable properties.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fipgraph/netlist.hpp"

namespace fixtures {

using fipgraph::Circuit;
using fipgraph::CircuitBuilder;
using fipgraph::GateKind;

// Six gates over three inputs, one output.
inline const char* kScoapReference =
    "INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(z)\n"
    "g1 = AND(a, b)\ng2 = OR(b, c)\ng3 = NOT(g1)\ng4 = NAND(g3, g2)\ng5 = XOR(g4, c)\nz = NOR(g5, a)\n";

struct ScoapValues {
    std::uint64_t cc0, cc1, co;
};

// Hand-derived with the textbook SCOAP rules.
inline const std::map<std::string, ScoapValues> kScoapHand{
    {"a", {1, 1, 7}},  {"b", {1, 1, 10}}, {"c", {1, 1, 7}},  {"g1", {2, 3, 8}}, {"g2", {3, 2, 8}},
    {"g3", {4, 3, 7}}, {"g4", {6, 4, 4}}, {"g5", {6, 6, 2}}, {"z", {2, 8, 0}},
};

// Random fanout-free circuit: every PI and gate output is used exactly once.
inline Circuit random_tree(std::uint64_t seed, std::size_t leaves) {
    std::mt19937_64 rng(seed);
    CircuitBuilder b("tree");
    std::vector<std::string> pool;
    for (std::size_t i = 0; i < leaves; ++i) {
        pool.push_back("x" + std::to_string(i));
        b.add_input(pool.back());
    }
    const GateKind binary[] = {GateKind::And, GateKind::Nand, GateKind::Or, GateKind::Nor, GateKind::Xor};
    int id = 0;
    while (pool.size() > 1) {
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::string name = "t" + std::to_string(id++);
        if (rng() % 4 == 0) {
            b.add_gate(name, rng() % 2 ? GateKind::Not : GateKind::Buff, {pool.back()});
            pool.back() = name;
            continue;
        }
        const std::size_t arity = std::min<std::size_t>(pool.size(), 2 + rng() % 2);
        std::vector<std::string> ins(pool.end() - static_cast<long>(arity), pool.end());
        pool.resize(pool.size() - arity);
        b.add_gate(name, binary[rng() % 5], ins);
        pool.push_back(name);
    }
    b.add_output(pool[0]);
    return std::move(b).build();
}

}  // namespace fixtures
