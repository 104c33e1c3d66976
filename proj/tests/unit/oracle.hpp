#pragma once

// Reference implementations used only as test oracles. They share no code
// with the library beyond the Circuit data structure.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fipgraph/fault_sim.hpp"
#include "fipgraph/netlist.hpp"

namespace oracle {

using fipgraph::Circuit;
using fipgraph::Fault;
using fipgraph::FaultKind;
using fipgraph::GateKind;
using fipgraph::LineId;

inline bool eval_scalar(GateKind kind, const std::vector<bool>& in) {
    bool all = true, any = false, parity = false;
    for (bool v : in) {
        all = all && v;
        any = any || v;
        parity = parity != v;
    }
    switch (kind) {
        case GateKind::And: return all;
        case GateKind::Nand: return !all;
        case GateKind::Or: return any;
        case GateKind::Nor: return !any;
        case GateKind::Not: return !in.at(0);
        case GateKind::Buff: return in.at(0);
        case GateKind::Xor: return parity;
        default: return in.at(0);
    }
}

/// Scalar multi-cycle simulator using memoized recursion instead of a
/// levelized order. values[t][line] for 0-based cycle t.
inline std::vector<std::vector<bool>> naive_run(const Circuit& c, const std::vector<std::vector<bool>>& stimulus,
                                                const std::vector<bool>& init, std::optional<Fault> fault = {}) {
    const std::size_t n = c.size();
    std::vector<std::vector<bool>> out;
    std::vector<int> pi_index(n, -1), dff_index(n, -1);
    for (std::size_t i = 0; i < c.primary_inputs().size(); ++i) pi_index[c.primary_inputs()[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < c.dffs().size(); ++i) dff_index[c.dffs()[i]] = static_cast<int>(i);
    bool prev_raw = false;
    for (std::size_t t = 0; t < stimulus.size(); ++t) {
        std::vector<int> val(n, -1);
        std::function<bool(LineId)> get = [&](LineId l) -> bool {
            if (val[l] >= 0) return val[l] != 0;
            const auto& g = c.gate(l);
            bool raw;
            if (g.kind == GateKind::Input) {
                raw = stimulus[t][pi_index[l]];
            } else if (g.kind == GateKind::Dff) {
                raw = t == 0 ? bool(init[dff_index[l]]) : bool(out[t - 1][g.fanins[0]]);
            } else {
                std::vector<bool> in;
                for (auto f : g.fanins) in.push_back(get(f));
                raw = eval_scalar(g.kind, in);
            }
            bool v = raw;
            if (fault && fault->line == l) {
                switch (fault->kind) {
                    case FaultKind::SA0: v = false; break;
                    case FaultKind::SA1: v = true; break;
                    case FaultKind::STR: v = t == 0 ? raw : (raw && prev_raw); break;
                    case FaultKind::STF: v = t == 0 ? raw : (raw || prev_raw); break;
                }
                prev_raw = raw;
            }
            val[l] = v ? 1 : 0;
            return v;
        };
        std::vector<bool> row(n);
        for (LineId l = 0; l < n; ++l) row[l] = get(l);
        out.push_back(std::move(row));
    }
    return out;
}

/// Brute-force detection counts per cycle over the given pattern stimuli.
inline std::vector<std::uint64_t> naive_counts(const Circuit& c, const Fault& fault, const fipgraph::PatternSet& ps,
                                               const std::vector<LineId>& observed) {
    std::vector<std::uint64_t> counts(ps.n_cycles(), 0);
    const std::vector<bool> init(c.dffs().size(), false);
    for (std::size_t p = 0; p < ps.n_patterns(); ++p) {
        std::vector<std::vector<bool>> stim(ps.n_cycles(), std::vector<bool>(ps.pi_count()));
        for (std::size_t t = 0; t < ps.n_cycles(); ++t)
            for (std::size_t i = 0; i < ps.pi_count(); ++i) stim[t][i] = ps.value(p, t, i);
        auto good = naive_run(c, stim, init);
        auto bad = naive_run(c, stim, init, fault);
        for (std::size_t t = 0; t < ps.n_cycles(); ++t)
            for (auto l : observed)
                if (good[t][l] != bad[t][l]) {
                    ++counts[t];
                    break;
                }
    }
    return counts;
}

/// Exhaustive stimulus: bit (t * pis + i) of the sequence index.
inline std::vector<std::vector<bool>> sequence_from_index(std::uint64_t index, std::size_t cycles, std::size_t pis) {
    std::vector<std::vector<bool>> stim(cycles, std::vector<bool>(pis));
    for (std::size_t t = 0; t < cycles; ++t)
        for (std::size_t i = 0; i < pis; ++i) stim[t][i] = (index >> (t * pis + i)) & 1U;
    return stim;
}

}  // namespace oracle
