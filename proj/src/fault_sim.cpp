#include "fipgraph/fault_sim.hpp"

#include <algorithm>
#include <bit>
#include <memory>
#include <sstream>

#include "fipgraph/error.hpp"
#include "fipgraph/io.hpp"
#include "fipgraph/parallel.hpp"

namespace fipgraph {

namespace {

constexpr std::uint64_t kAllOnes = ~std::uint64_t{0};

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_indices(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix64(mix64(mix64(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL)) ^ (c * 0x85157af5ULL + 0x1d8e4e27c47d124fULL));
}

// Flat adjacency view used by the bit-parallel engines.
struct Compiled {
    explicit Compiled(const Circuit& c) : circuit(c), n(c.size()) {
        fanin_off.assign(n + 1, 0);
        for (GateId g = 0; g < n; ++g) fanin_off[g + 1] = fanin_off[g] + static_cast<std::uint32_t>(c.gate(g).fanins.size());
        fanin.reserve(fanin_off[n]);
        for (GateId g = 0; g < n; ++g) fanin.insert(fanin.end(), c.gate(g).fanins.begin(), c.gate(g).fanins.end());

        kind.resize(n);
        for (GateId g = 0; g < n; ++g) kind[g] = c.gate(g).kind;
        level.assign(c.levels().begin(), c.levels().end());
        max_level = level.empty() ? 0 : *std::max_element(level.begin(), level.end());

        sink_off.assign(n + 1, 0);
        dff_sink_off.assign(n + 1, 0);
        for (LineId l = 0; l < n; ++l) {
            std::uint32_t comb = 0, seq = 0;
            GateId last = static_cast<GateId>(-1);
            for (GateId s : c.line(l).sinks) {
                if (s == last) continue;  // repeated pin of the same gate
                last = s;
                (kind[s] == GateKind::Dff ? seq : comb)++;
            }
            sink_off[l + 1] = sink_off[l] + comb;
            dff_sink_off[l + 1] = dff_sink_off[l] + seq;
        }
        sink.resize(sink_off[n]);
        dff_sink.resize(dff_sink_off[n]);
        for (LineId l = 0; l < n; ++l) {
            auto si = sink_off[l];
            auto di = dff_sink_off[l];
            GateId last = static_cast<GateId>(-1);
            for (GateId s : c.line(l).sinks) {
                if (s == last) continue;
                last = s;
                if (kind[s] == GateKind::Dff) dff_sink[di++] = s; else sink[si++] = s;
            }
        }
        pi_lines.assign(c.primary_inputs().begin(), c.primary_inputs().end());
        dff_gates.assign(c.dffs().begin(), c.dffs().end());
    }

    [[nodiscard]] std::uint64_t eval(GateId g, auto&& value_of) const {
        std::uint64_t buf[16];
        const auto begin = fanin_off[g];
        const auto count = fanin_off[g + 1] - begin;
        if (count <= 16) {
            for (std::uint32_t i = 0; i < count; ++i) buf[i] = value_of(fanin[begin + i]);
            return eval_gate(kind[g], std::span<const std::uint64_t>(buf, count));
        }
        std::vector<std::uint64_t> big(count);
        for (std::uint32_t i = 0; i < count; ++i) big[i] = value_of(fanin[begin + i]);
        return eval_gate(kind[g], big);
    }

    const Circuit& circuit;
    std::size_t n;
    std::vector<std::uint32_t> fanin_off, fanin;
    std::vector<GateKind> kind;
    std::vector<std::uint32_t> level;
    std::uint32_t max_level = 0;
    std::vector<std::uint32_t> sink_off, sink;          // combinational consumers per line
    std::vector<std::uint32_t> dff_sink_off, dff_sink;  // flip-flops sampling each line
    std::vector<LineId> pi_lines;
    std::vector<GateId> dff_gates;
};

std::uint64_t apply_fault(FaultKind kind, std::uint64_t raw, std::uint64_t prev_raw, std::size_t cycle) {
    switch (kind) {
        case FaultKind::SA0: return 0;
        case FaultKind::SA1: return kAllOnes;
        // Gross delay: a rising (falling) edge reaches the fanout one cycle late.
        case FaultKind::STR: return cycle == 0 ? raw : raw & prev_raw;
        case FaultKind::STF: return cycle == 0 ? raw : raw | prev_raw;
    }
    return raw;
}

// Fault-free run of one 64-pattern block; `rows` receives n_cycles x n words.
template <typename PiWord, typename InitWord>
void good_block(const Compiled& comp, std::size_t n_cycles, PiWord&& pi_word, InitWord&& init_word,
                std::uint64_t* rows) {
    const auto n = comp.n;
    for (std::size_t t = 0; t < n_cycles; ++t) {
        std::uint64_t* row = rows + t * n;
        for (std::size_t k = 0; k < comp.pi_lines.size(); ++k) row[comp.pi_lines[k]] = pi_word(t, k);
        for (std::size_t k = 0; k < comp.dff_gates.size(); ++k) {
            const GateId d = comp.dff_gates[k];
            row[d] = t == 0 ? init_word(k) : rows[(t - 1) * n + comp.fanin[comp.fanin_off[d]]];
        }
        for (GateId g : comp.circuit.level_order()) row[g] = comp.eval(g, [row](LineId l) { return row[l]; });
    }
}

// Faulty run evaluating every gate every cycle. Used by the trace API.
template <typename PiWord, typename InitWord>
void faulty_block_dense(const Compiled& comp, const Fault& fault, std::size_t n_cycles, PiWord&& pi_word,
                        InitWord&& init_word, std::uint64_t* rows) {
    const auto n = comp.n;
    const bool site_is_source = comp.kind[fault.line] == GateKind::Input || comp.kind[fault.line] == GateKind::Dff;
    std::uint64_t prev_raw = 0;
    for (std::size_t t = 0; t < n_cycles; ++t) {
        std::uint64_t* row = rows + t * n;
        for (std::size_t k = 0; k < comp.pi_lines.size(); ++k) row[comp.pi_lines[k]] = pi_word(t, k);
        for (std::size_t k = 0; k < comp.dff_gates.size(); ++k) {
            const GateId d = comp.dff_gates[k];
            row[d] = t == 0 ? init_word(k) : rows[(t - 1) * n + comp.fanin[comp.fanin_off[d]]];
        }
        if (site_is_source) {
            const auto raw = row[fault.line];
            row[fault.line] = apply_fault(fault.kind, raw, prev_raw, t);
            prev_raw = raw;
        }
        for (GateId g : comp.circuit.level_order()) {
            auto v = comp.eval(g, [row](LineId l) { return row[l]; });
            if (g == fault.line) {
                const auto raw = v;
                v = apply_fault(fault.kind, raw, prev_raw, t);
                prev_raw = raw;
            }
            row[g] = v;
        }
    }
}

// Differential (event-driven) faulty simulation against stored good rows.
// Only lines whose faulty value differs from the good value are tracked.
class EventSimulator {
public:
    explicit EventSimulator(const Compiled& comp)
        : comp_(comp), fval_(comp.n, 0), diverged_(comp.n, 0), scheduled_(comp.n, 0), buckets_(comp.max_level + 1) {}

    void run(const Fault& fault, const std::uint64_t* good, std::size_t n_cycles, std::uint64_t lane_mask,
             std::span<const std::uint8_t> observed, std::uint64_t* counts) {
        const auto n = comp_.n;
        const LineId site = fault.line;
        const bool site_is_source = comp_.kind[site] == GateKind::Input || comp_.kind[site] == GateKind::Dff;
        std::uint64_t prev_raw = 0;
        carry_.clear();

        for (std::size_t t = 0; t < n_cycles; ++t) {
            const std::uint64_t* row = good + t * n;
            for (const auto& [dff, value] : carry_) set_value(dff, value, row);
            carry_.clear();

            if (site_is_source) {
                const auto raw = diverged_[site] ? fval_[site] : row[site];
                set_value(site, apply_fault(fault.kind, raw, prev_raw, t), row);
                prev_raw = raw;
                schedule_sinks(site);
            } else {
                schedule(site);
            }
            for (auto l : touched_)
                if (diverged_[l]) schedule_sinks(l);

            for (std::uint32_t lvl = 1; lvl <= comp_.max_level; ++lvl) {
                auto& bucket = buckets_[lvl];
                for (std::size_t i = 0; i < bucket.size(); ++i) {
                    const GateId g = bucket[i];
                    scheduled_[g] = 0;
                    auto v = comp_.eval(g, [&](LineId l) { return diverged_[l] ? fval_[l] : row[l]; });
                    if (g == site) {
                        const auto raw = v;
                        v = apply_fault(fault.kind, raw, prev_raw, t);
                        prev_raw = raw;
                    }
                    if (set_value(g, v, row)) schedule_sinks(g);
                }
                bucket.clear();
            }

            std::uint64_t detected = 0;
            for (auto l : touched_) {
                if (!diverged_[l]) continue;
                if (observed[l]) detected |= fval_[l] ^ row[l];
                for (auto k = comp_.dff_sink_off[l]; k < comp_.dff_sink_off[l + 1]; ++k)
                    carry_.emplace_back(comp_.dff_sink[k], fval_[l]);
            }
            counts[t] += static_cast<std::uint64_t>(std::popcount(detected & lane_mask));

            for (auto l : touched_) diverged_[l] = 0;
            touched_.clear();
        }
    }

private:
    // Returns true when the line now differs from the good machine.
    bool set_value(LineId l, std::uint64_t v, const std::uint64_t* row) {
        if (v != row[l]) {
            if (!diverged_[l]) {
                diverged_[l] = 1;
                touched_.push_back(l);
            }
            fval_[l] = v;
            return true;
        }
        diverged_[l] = 0;
        return false;
    }

    void schedule(GateId g) {
        if (scheduled_[g]) return;
        scheduled_[g] = 1;
        buckets_[comp_.level[g]].push_back(g);
    }

    void schedule_sinks(LineId l) {
        for (auto k = comp_.sink_off[l]; k < comp_.sink_off[l + 1]; ++k) schedule(comp_.sink[k]);
    }

    const Compiled& comp_;
    std::vector<std::uint64_t> fval_;
    std::vector<std::uint8_t> diverged_;
    std::vector<std::uint8_t> scheduled_;
    std::vector<std::vector<GateId>> buckets_;
    std::vector<LineId> touched_;
    std::vector<std::pair<GateId, std::uint64_t>> carry_;
};

std::vector<std::uint8_t> observed_mask(std::size_t n, std::span<const LineId> observed) {
    std::vector<std::uint8_t> mask(n, 0);
    for (auto l : observed) mask[l] = 1;
    return mask;
}

void check_stimulus(const Circuit& circuit, const std::vector<std::vector<bool>>& stimulus,
                    const std::vector<bool>& init_state) {
    if (stimulus.empty()) throw ShapeError("stimulus must cover at least one cycle");
    for (const auto& cycle : stimulus)
        if (cycle.size() != circuit.primary_inputs().size())
            throw ShapeError("stimulus has " + std::to_string(cycle.size()) + " values per cycle, circuit has " +
                             std::to_string(circuit.primary_inputs().size()) + " primary inputs");
    if (init_state.size() != circuit.dffs().size())
        throw ShapeError("init state has " + std::to_string(init_state.size()) + " values, circuit has " +
                         std::to_string(circuit.dffs().size()) + " flip-flops");
}

Trace to_trace(const std::vector<std::uint64_t>& rows, std::size_t n_cycles, std::size_t n) {
    Trace trace(n_cycles, n);
    for (std::size_t t = 0; t < n_cycles; ++t)
        for (LineId l = 0; l < n; ++l) trace.set(t, l, rows[t * n + l] & 1U);
    return trace;
}

}  // namespace

std::string_view to_string(FaultKind kind) {
    switch (kind) {
        case FaultKind::SA0: return "SA0";
        case FaultKind::SA1: return "SA1";
        case FaultKind::STR: return "STR";
        case FaultKind::STF: return "STF";
    }
    return "?";
}

FaultKind fault_kind_from_string(std::string_view name) {
    if (name == "SA0") return FaultKind::SA0;
    if (name == "SA1") return FaultKind::SA1;
    if (name == "STR") return FaultKind::STR;
    if (name == "STF") return FaultKind::STF;
    throw SchemaError("unknown fault kind '" + std::string(name) + "'");
}

PatternSet PatternSet::random(std::uint64_t seed, std::size_t n_patterns, std::size_t n_cycles, std::size_t pi_count) {
    if (pi_count == 0) throw Error("circuit has no primary inputs");
    if (n_patterns == 0 || n_cycles == 0) throw ConfigError("pattern and cycle counts must be positive");
    PatternSet p;
    p.seed_ = seed;
    p.n_patterns_ = n_patterns;
    p.n_cycles_ = n_cycles;
    p.pi_count_ = pi_count;
    return p;
}

PatternSet PatternSet::exhaustive(std::size_t n_cycles, std::size_t pi_count) {
    if (pi_count == 0) throw Error("circuit has no primary inputs");
    if (n_cycles == 0) throw ConfigError("cycle count must be positive");
    if (pi_count * n_cycles > 30) throw ConfigError("exhaustive pattern space exceeds 2^30 sequences");
    PatternSet p;
    p.n_patterns_ = std::size_t{1} << (pi_count * n_cycles);
    p.n_cycles_ = n_cycles;
    p.pi_count_ = pi_count;
    p.exhaustive_ = true;
    return p;
}

PatternSet generate_patterns(std::uint64_t seed, std::size_t n_patterns, std::size_t n_cycles, std::size_t pi_count) {
    return PatternSet::random(seed, n_patterns, n_cycles, pi_count);
}

std::uint64_t PatternSet::lane_mask(std::size_t block) const {
    const auto remaining = n_patterns_ - block * 64;
    return remaining >= 64 ? kAllOnes : ((std::uint64_t{1} << remaining) - 1);
}

std::uint64_t PatternSet::word(std::size_t block, std::size_t cycle, std::size_t pi) const {
    if (!exhaustive_) return hash_indices(seed_, block, cycle, pi);
    const std::size_t bit = cycle * pi_count_ + pi;
    std::uint64_t w = 0;
    for (std::size_t j = 0; j < 64; ++j) {
        const std::uint64_t pattern = block * 64 + j;
        w |= ((pattern >> bit) & 1U) << j;
    }
    return w;
}

bool PatternSet::value(std::size_t pattern, std::size_t cycle, std::size_t pi) const {
    return (word(pattern / 64, cycle, pi) >> (pattern % 64)) & 1U;
}

std::uint64_t InitState::word(std::size_t block, std::size_t dff_index) const {
    return random ? hash_indices(seed ^ 0x5a17e5eedULL, block, ~std::uint64_t{0}, dff_index) : 0;
}

std::vector<LineId> ObservationSet::resolve(const Circuit& circuit) const {
    std::vector<LineId> out;
    if (include_pos) out.insert(out.end(), circuit.primary_outputs().begin(), circuit.primary_outputs().end());
    if (include_ppos) {
        auto ppos = circuit.pseudo_primary_outputs();
        out.insert(out.end(), ppos.begin(), ppos.end());
    }
    for (auto l : extra) {
        if (l >= circuit.size()) throw Error("observation line " + std::to_string(l) + " does not exist");
        out.push_back(l);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) throw Error("empty observation set");
    return out;
}

nlohmann::json ObservationSet::to_json(const Circuit& circuit) const {
    nlohmann::json extra_names = nlohmann::json::array();
    for (auto l : extra) extra_names.push_back(circuit.line(l).name);
    return {{"pos", include_pos}, {"ppos", include_ppos}, {"extra", extra_names}};
}

ObservationSet ObservationSet::from_json(const nlohmann::json& j, const Circuit& circuit) {
    ObservationSet o;
    o.include_pos = j.at("pos").get<bool>();
    o.include_ppos = j.at("ppos").get<bool>();
    for (const auto& name : j.at("extra")) {
        auto id = circuit.find_line(name.get<std::string>());
        if (!id) throw SchemaError("observation line '" + name.get<std::string>() + "' not in circuit");
        o.extra.push_back(*id);
    }
    return o;
}

Trace simulate_good(const Circuit& circuit, const std::vector<std::vector<bool>>& stimulus,
                    const std::vector<bool>& init_state) {
    check_stimulus(circuit, stimulus, init_state);
    Compiled comp(circuit);
    std::vector<std::uint64_t> rows(stimulus.size() * comp.n, 0);
    good_block(
        comp, stimulus.size(), [&](std::size_t t, std::size_t k) { return stimulus[t][k] ? kAllOnes : 0; },
        [&](std::size_t k) { return init_state[k] ? kAllOnes : 0; }, rows.data());
    return to_trace(rows, stimulus.size(), comp.n);
}

Trace simulate_faulty(const Circuit& circuit, const Fault& fault, const std::vector<std::vector<bool>>& stimulus,
                      const std::vector<bool>& init_state) {
    check_stimulus(circuit, stimulus, init_state);
    if (fault.line >= circuit.size()) throw Error("fault line " + std::to_string(fault.line) + " does not exist");
    Compiled comp(circuit);
    std::vector<std::uint64_t> rows(stimulus.size() * comp.n, 0);
    faulty_block_dense(
        comp, fault, stimulus.size(), [&](std::size_t t, std::size_t k) { return stimulus[t][k] ? kAllOnes : 0; },
        [&](std::size_t k) { return init_state[k] ? kAllOnes : 0; }, rows.data());
    return to_trace(rows, stimulus.size(), comp.n);
}

std::vector<std::uint8_t> observable_cone(const Circuit& circuit, std::span<const LineId> observed) {
    std::vector<std::uint8_t> reach(circuit.size(), 0);
    std::vector<LineId> stack(observed.begin(), observed.end());
    for (auto l : stack) reach[l] = 1;
    while (!stack.empty()) {
        const LineId l = stack.back();
        stack.pop_back();
        for (LineId in : circuit.gate(l).fanins)
            if (!reach[in]) {
                reach[in] = 1;
                stack.push_back(in);
            }
    }
    return reach;
}

namespace {

// Fills good rows for blocks [first, first + count) and runs `fault_task`
// in parallel; memory is bounded by chunking the block range.
template <typename FaultTask>
void run_chunked(const Compiled& comp, const PatternSet& patterns, const SimOptions& options, std::size_t n_tasks,
                 FaultTask&& fault_task) {
    const std::size_t n_cycles = patterns.n_cycles();
    const std::size_t row_words = n_cycles * comp.n;
    constexpr std::size_t kBudgetWords = std::size_t{32} << 20;  // 256 MiB of good-machine rows
    const std::size_t chunk = std::clamp<std::size_t>(kBudgetWords / std::max<std::size_t>(row_words, 1), 1, 256);
    std::vector<std::uint64_t> good;
    for (std::size_t first = 0; first < patterns.blocks(); first += chunk) {
        const std::size_t count = std::min(chunk, patterns.blocks() - first);
        good.assign(count * row_words, 0);
        parallel_for(count, options.threads, [&](std::size_t b, std::size_t) {
            const std::size_t block = first + b;
            good_block(
                comp, n_cycles, [&](std::size_t t, std::size_t k) { return patterns.word(block, t, k); },
                [&](std::size_t k) { return options.init.word(block, k); }, good.data() + b * row_words);
        });
        fault_task(first, count, good, row_words);
    }
    (void)n_tasks;
}

void check_patterns(const Circuit& circuit, const PatternSet& patterns) {
    if (circuit.primary_inputs().empty()) throw Error("circuit has no primary inputs");
    if (patterns.pi_count() != circuit.primary_inputs().size())
        throw ShapeError("pattern set has " + std::to_string(patterns.pi_count()) + " inputs, circuit has " +
                         std::to_string(circuit.primary_inputs().size()));
    if (patterns.n_patterns() == 0) throw ConfigError("pattern count must be positive");
}

}  // namespace

FipCurve compute_fip(const Circuit& circuit, const Fault& fault, const PatternSet& patterns,
                     const ObservationSet& observe, const SimOptions& options) {
    check_patterns(circuit, patterns);
    if (fault.line >= circuit.size()) throw Error("fault line " + std::to_string(fault.line) + " does not exist");
    const auto observed = observe.resolve(circuit);
    FipCurve curve{std::vector<std::uint64_t>(patterns.n_cycles(), 0), patterns.n_patterns()};
    if (!observable_cone(circuit, observed)[fault.line]) return curve;

    Compiled comp(circuit);
    const auto mask = observed_mask(comp.n, observed);
    run_chunked(comp, patterns, options, 1,
                [&](std::size_t first, std::size_t count, const std::vector<std::uint64_t>& good, std::size_t row_words) {
                    std::vector<std::vector<std::uint64_t>> per_block(count, std::vector<std::uint64_t>(patterns.n_cycles(), 0));
                    parallel_for(count, options.threads, [&](std::size_t b, std::size_t) {
                        EventSimulator sim(comp);
                        sim.run(fault, good.data() + b * row_words, patterns.n_cycles(), patterns.lane_mask(first + b),
                                mask, per_block[b].data());
                    });
                    for (const auto& c : per_block)
                        for (std::size_t t = 0; t < c.size(); ++t) curve.counts[t] += c[t];
                });
    return curve;
}

FipMatrix::FipMatrix(std::string circuit, std::vector<std::string> line_names, std::vector<FaultKind> kinds,
                     std::size_t n_cycles, std::uint64_t n_patterns, std::uint64_t seed, nlohmann::json observe)
    : circuit_(std::move(circuit)),
      line_names_(std::move(line_names)),
      kinds_(std::move(kinds)),
      n_cycles_(n_cycles),
      n_patterns_(n_patterns),
      seed_(seed),
      observe_(std::move(observe)),
      counts_(line_names_.size() * kinds_.size() * n_cycles_, 0) {}

std::optional<std::size_t> FipMatrix::kind_index(FaultKind kind) const {
    for (std::size_t i = 0; i < kinds_.size(); ++i)
        if (kinds_[i] == kind) return i;
    return std::nullopt;
}

std::string FipMatrix::to_csv() const {
    std::ostringstream out;
    out << "line,kind,cycle,fip,n_patterns,seed\n";
    for (LineId l = 0; l < line_names_.size(); ++l)
        for (std::size_t k = 0; k < kinds_.size(); ++k)
            for (std::size_t t = 0; t < n_cycles_; ++t)
                out << line_names_[l] << ',' << to_string(kinds_[k]) << ',' << (t + 1) << ','
                    << format_double(fip(l, k, t)) << ',' << n_patterns_ << ',' << seed_ << '\n';
    return out.str();
}

nlohmann::json FipMatrix::to_json() const {
    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : kinds_) kinds.push_back(std::string(to_string(k)));
    return {{"circuit", circuit_}, {"n_patterns", n_patterns_}, {"seed", seed_},   {"n_cycles", n_cycles_},
            {"kinds", kinds},      {"observe", observe_},       {"lines", line_names_}, {"counts", counts_}};
}

FipMatrix FipMatrix::from_json(const nlohmann::json& j) {
    try {
        std::vector<FaultKind> kinds;
        for (const auto& k : j.at("kinds")) kinds.push_back(fault_kind_from_string(k.get<std::string>()));
        FipMatrix m(j.at("circuit").get<std::string>(), j.at("lines").get<std::vector<std::string>>(), std::move(kinds),
                    j.at("n_cycles").get<std::size_t>(), j.at("n_patterns").get<std::uint64_t>(),
                    j.at("seed").get<std::uint64_t>(), j.at("observe"));
        auto counts = j.at("counts").get<std::vector<std::uint64_t>>();
        if (counts.size() != m.counts_.size())
            throw SchemaError("counts: expected " + std::to_string(m.counts_.size()) + " entries, found " +
                              std::to_string(counts.size()));
        for (auto c : counts)
            if (c > m.n_patterns_) throw SchemaError("counts: entry exceeds n_patterns");
        m.counts_ = std::move(counts);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("FIP matrix: ") + e.what());
    }
}

FipMatrix build_fip_matrix(const Circuit& circuit, const std::vector<FaultKind>& kinds, const PatternSet& patterns,
                           const ObservationSet& observe, const SimOptions& options) {
    if (kinds.empty()) throw ConfigError("at least one fault kind is required");
    check_patterns(circuit, patterns);
    const auto observed = observe.resolve(circuit);
    const auto cone = observable_cone(circuit, observed);

    std::vector<std::string> names;
    names.reserve(circuit.size());
    for (const auto& line : circuit.lines()) names.push_back(line.name);
    FipMatrix matrix(circuit.name(), std::move(names), kinds, patterns.n_cycles(), patterns.n_patterns(),
                     patterns.seed(), observe.to_json(circuit));

    std::vector<Fault> faults;
    for (LineId l = 0; l < circuit.size(); ++l)
        if (cone[l])
            for (auto k : kinds) faults.push_back({l, k});

    Compiled comp(circuit);
    const auto mask = observed_mask(comp.n, observed);
    const std::size_t n_cycles = patterns.n_cycles();
    std::vector<std::vector<std::uint64_t>> counts(faults.size(), std::vector<std::uint64_t>(n_cycles, 0));
    const std::size_t workers = resolve_threads(options.threads);

    run_chunked(comp, patterns, options, faults.size(),
                [&](std::size_t first, std::size_t count, const std::vector<std::uint64_t>& good, std::size_t row_words) {
                    std::vector<std::unique_ptr<EventSimulator>> sims(workers);
                    parallel_for(faults.size(), workers, [&](std::size_t f, std::size_t w) {
                        if (!sims[w]) sims[w] = std::make_unique<EventSimulator>(comp);
                        for (std::size_t b = 0; b < count; ++b)
                            sims[w]->run(faults[f], good.data() + b * row_words, n_cycles,
                                         patterns.lane_mask(first + b), mask, counts[f].data());
                    });
                });

    for (std::size_t f = 0; f < faults.size(); ++f) {
        const auto k = *matrix.kind_index(faults[f].kind);
        for (std::size_t t = 0; t < n_cycles; ++t) matrix.count(faults[f].line, k, t) = counts[f][t];
    }
    return matrix;
}

}  // namespace fipgraph
