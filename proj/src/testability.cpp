#include "fipgraph/testability.hpp"

#include <algorithm>
#include <sstream>

#include "fipgraph/error.hpp"
#include "fipgraph/io.hpp"

namespace fipgraph {

namespace {

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) { return std::min(a + b, kScoapUnreachable); }

void check_frames(std::size_t n_frames) {
    if (n_frames == 0) throw ConfigError("frame count must be at least 1");
}

std::vector<std::uint8_t> observed_flags(const Circuit& circuit, const ObservationSet& observe) {
    std::vector<std::uint8_t> flags(circuit.size(), 0);
    for (auto l : observe.resolve(circuit)) flags[l] = 1;
    return flags;
}

// Cost of driving the XOR of `ins` to even (first) and odd (second) parity.
std::pair<std::uint64_t, std::uint64_t> parity_cost(const std::vector<LineId>& ins, const std::uint64_t* cc0,
                                                    const std::uint64_t* cc1, std::size_t skip) {
    std::uint64_t even = 0, odd = kScoapUnreachable;
    for (std::size_t i = 0; i < ins.size(); ++i) {
        if (i == skip) continue;
        const auto a0 = cc0[ins[i]], a1 = cc1[ins[i]];
        const auto ne = std::min(sat_add(even, a0), sat_add(odd, a1));
        const auto no = std::min(sat_add(even, a1), sat_add(odd, a0));
        even = ne;
        odd = no;
    }
    return {even, odd};
}

}  // namespace

ScoapFrames compute_scoap(const Circuit& circuit, std::size_t n_frames, const ObservationSet& observe) {
    check_frames(n_frames);
    const auto n = circuit.size();
    ScoapFrames f;
    f.n_frames = n_frames;
    f.n_lines = n;
    f.cc0.assign(n_frames * n, kScoapUnreachable);
    f.cc1.assign(n_frames * n, kScoapUnreachable);
    f.co.assign(n_frames * n, kScoapUnreachable);

    for (std::size_t t = 0; t < n_frames; ++t) {
        auto* cc0 = f.cc0.data() + t * n;
        auto* cc1 = f.cc1.data() + t * n;
        for (auto pi : circuit.primary_inputs()) cc0[pi] = cc1[pi] = 1;
        for (auto d : circuit.dffs()) {
            if (t == 0) {
                cc0[d] = 1;
                cc1[d] = kScoapUnreachable;
            } else {
                const auto in = circuit.dff_input(d);
                cc0[d] = sat_add(f.cc0[(t - 1) * n + in], 1);
                cc1[d] = sat_add(f.cc1[(t - 1) * n + in], 1);
            }
        }
        for (GateId g : circuit.level_order()) {
            const auto& gate = circuit.gate(g);
            std::uint64_t sum0 = 0, sum1 = 0, min0 = kScoapUnreachable, min1 = kScoapUnreachable;
            for (auto in : gate.fanins) {
                sum0 = sat_add(sum0, cc0[in]);
                sum1 = sat_add(sum1, cc1[in]);
                min0 = std::min(min0, cc0[in]);
                min1 = std::min(min1, cc1[in]);
            }
            std::uint64_t v0 = 0, v1 = 0;
            switch (gate.kind) {
                case GateKind::And: v0 = min0; v1 = sum1; break;
                case GateKind::Nand: v0 = sum1; v1 = min0; break;
                case GateKind::Or: v0 = sum0; v1 = min1; break;
                case GateKind::Nor: v0 = min1; v1 = sum0; break;
                case GateKind::Not: v0 = cc1[gate.fanins[0]]; v1 = cc0[gate.fanins[0]]; break;
                case GateKind::Buff: v0 = cc0[gate.fanins[0]]; v1 = cc1[gate.fanins[0]]; break;
                case GateKind::Xor: std::tie(v0, v1) = parity_cost(gate.fanins, cc0, cc1, gate.fanins.size()); break;
                default: break;
            }
            cc0[g] = sat_add(v0, 1);
            cc1[g] = sat_add(v1, 1);
        }
    }

    const auto observed = observed_flags(circuit, observe);
    const auto order = circuit.level_order();
    for (std::size_t t = n_frames; t-- > 0;) {
        auto* co = f.co.data() + t * n;
        const auto* cc0 = f.cc0.data() + t * n;
        const auto* cc1 = f.cc1.data() + t * n;
        for (LineId l = 0; l < n; ++l)
            if (observed[l]) co[l] = 0;
        if (t + 1 < n_frames)
            for (auto d : circuit.dffs()) {
                const auto in = circuit.dff_input(d);
                co[in] = std::min(co[in], sat_add(f.co[(t + 1) * n + d], 1));
            }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const GateId g = *it;
            const auto& gate = circuit.gate(g);
            const auto out = co[g];
            for (std::size_t i = 0; i < gate.fanins.size(); ++i) {
                std::uint64_t side = 0;
                switch (gate.kind) {
                    case GateKind::And:
                    case GateKind::Nand:
                        for (std::size_t j = 0; j < gate.fanins.size(); ++j)
                            if (j != i) side = sat_add(side, cc1[gate.fanins[j]]);
                        break;
                    case GateKind::Or:
                    case GateKind::Nor:
                        for (std::size_t j = 0; j < gate.fanins.size(); ++j)
                            if (j != i) side = sat_add(side, cc0[gate.fanins[j]]);
                        break;
                    case GateKind::Xor: {
                        // Any fixed side value propagates; take the cheaper parity.
                        auto [even, odd] = parity_cost(gate.fanins, cc0, cc1, i);
                        side = std::min(even, odd);
                        break;
                    }
                    default: break;
                }
                const auto in = gate.fanins[i];
                co[in] = std::min(co[in], sat_add(sat_add(out, side), 1));
            }
        }
    }
    return f;
}

CopFrames compute_cop(const Circuit& circuit, std::size_t n_frames, const ObservationSet& observe) {
    check_frames(n_frames);
    const auto n = circuit.size();
    CopFrames f;
    f.n_frames = n_frames;
    f.n_lines = n;
    f.c1.assign(n_frames * n, 0.0);
    f.o.assign(n_frames * n, 0.0);

    for (std::size_t t = 0; t < n_frames; ++t) {
        auto* c1 = f.c1.data() + t * n;
        for (auto pi : circuit.primary_inputs()) c1[pi] = 0.5;
        for (auto d : circuit.dffs()) c1[d] = t == 0 ? 0.0 : f.c1[(t - 1) * n + circuit.dff_input(d)];
        for (GateId g : circuit.level_order()) {
            const auto& gate = circuit.gate(g);
            double all1 = 1.0, all0 = 1.0, parity = 0.0;
            for (auto in : gate.fanins) {
                all1 *= c1[in];
                all0 *= 1.0 - c1[in];
                parity = parity * (1.0 - c1[in]) + c1[in] * (1.0 - parity);
            }
            double v = 0.0;
            switch (gate.kind) {
                case GateKind::And: v = all1; break;
                case GateKind::Nand: v = 1.0 - all1; break;
                case GateKind::Or: v = 1.0 - all0; break;
                case GateKind::Nor: v = all0; break;
                case GateKind::Not: v = 1.0 - c1[gate.fanins[0]]; break;
                case GateKind::Buff: v = c1[gate.fanins[0]]; break;
                case GateKind::Xor: v = parity; break;
                default: break;
            }
            c1[g] = v;
        }
    }

    // miss[l] accumulates the product of (1 - O_branch) over the fanout of l.
    const auto observed = observed_flags(circuit, observe);
    const auto order = circuit.level_order();
    std::vector<double> miss(n);
    for (std::size_t t = n_frames; t-- > 0;) {
        auto* o = f.o.data() + t * n;
        const auto* c1 = f.c1.data() + t * n;
        std::fill(miss.begin(), miss.end(), 1.0);
        if (t + 1 < n_frames)
            for (auto d : circuit.dffs()) miss[circuit.dff_input(d)] *= 1.0 - f.o[(t + 1) * n + d];
        auto finish = [&](LineId l) { o[l] = observed[l] ? 1.0 : 1.0 - miss[l]; };
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const GateId g = *it;
            finish(g);
            const auto& gate = circuit.gate(g);
            for (std::size_t i = 0; i < gate.fanins.size(); ++i) {
                double pass = 1.0;
                for (std::size_t j = 0; j < gate.fanins.size(); ++j) {
                    if (j == i) continue;
                    const double side = c1[gate.fanins[j]];
                    if (gate.kind == GateKind::And || gate.kind == GateKind::Nand) pass *= side;
                    if (gate.kind == GateKind::Or || gate.kind == GateKind::Nor) pass *= 1.0 - side;
                }
                miss[gate.fanins[i]] *= 1.0 - o[g] * pass;
            }
        }
        for (auto pi : circuit.primary_inputs()) finish(pi);
        for (auto d : circuit.dffs()) finish(d);
    }
    return f;
}

std::vector<double> minmax_normalize(std::span<const double> values, MinMax* used) {
    std::vector<double> out(values.size(), 0.0);
    if (values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const MinMax range{*lo, *hi};
    if (used) *used = range;
    if (range.max == range.min) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - range.min) / (range.max - range.min);
    return out;
}

namespace {

std::vector<double> normalize_scoap(const std::vector<std::uint64_t>& raw, MinMax& used) {
    std::uint64_t reachable_max = 0;
    bool any = false;
    for (auto v : raw)
        if (v < kScoapUnreachable) {
            reachable_max = std::max(reachable_max, v);
            any = true;
        }
    std::vector<double> values(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        values[i] = static_cast<double>(raw[i] < kScoapUnreachable || !any ? raw[i] : reachable_max);
    return minmax_normalize(values, &used);
}

}  // namespace

TestabilityFrames normalize_minmax(ScoapFrames scoap, CopFrames cop) {
    if (scoap.n_frames != cop.n_frames || scoap.n_lines != cop.n_lines)
        throw ShapeError("SCOAP frames " + std::to_string(scoap.n_frames) + "x" + std::to_string(scoap.n_lines) +
                         " do not match COP frames " + std::to_string(cop.n_frames) + "x" +
                         std::to_string(cop.n_lines));
    TestabilityFrames t;
    t.cc0n = normalize_scoap(scoap.cc0, t.cc0_range);
    t.cc1n = normalize_scoap(scoap.cc1, t.cc1_range);
    t.con = normalize_scoap(scoap.co, t.co_range);
    t.scoap = std::move(scoap);
    t.cop = std::move(cop);
    return t;
}

TestabilityFrames compute_testability(const Circuit& circuit, std::size_t n_frames, const ObservationSet& observe) {
    return normalize_minmax(compute_scoap(circuit, n_frames, observe), compute_cop(circuit, n_frames, observe));
}

std::string testability_csv(const Circuit& circuit, const TestabilityFrames& frames) {
    std::ostringstream out;
    out << "line,cycle,cc0n,cc1n,con,c1,o\n";
    for (LineId l = 0; l < frames.n_lines(); ++l)
        for (std::size_t t = 0; t < frames.n_frames(); ++t) {
            const auto i = frames.index(t, l);
            out << circuit.line(l).name << ',' << (t + 1) << ',' << format_double(frames.cc0n[i]) << ','
                << format_double(frames.cc1n[i]) << ',' << format_double(frames.con[i]) << ','
                << format_double(frames.cop.c1[i]) << ',' << format_double(frames.cop.o[i]) << '\n';
        }
    return out.str();
}

}  // namespace fipgraph
