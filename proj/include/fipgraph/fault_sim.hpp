#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fipgraph/netlist.hpp"

namespace fipgraph {

enum class FaultKind : std::uint8_t { SA0 = 0, SA1 = 1, STR = 2, STF = 3 };

[[nodiscard]] std::string_view to_string(FaultKind kind);
[[nodiscard]] FaultKind fault_kind_from_string(std::string_view name);

struct Fault {
    LineId line = 0;
    FaultKind kind = FaultKind::SA0;
};

/// Counter-based pattern source: the value of (pattern, cycle, PI) is a pure
/// function of the seed and the indices, so any partition of the pattern
/// range sees identical stimuli. A pattern is a fresh PI vector every cycle.
class PatternSet {
public:
    PatternSet() = default;

    [[nodiscard]] static PatternSet random(std::uint64_t seed, std::size_t n_patterns, std::size_t n_cycles,
                                           std::size_t pi_count);
    /// Every assignment of every PI in every cycle: N = 2^(pi_count * n_cycles).
    [[nodiscard]] static PatternSet exhaustive(std::size_t n_cycles, std::size_t pi_count);

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] std::size_t n_patterns() const { return n_patterns_; }
    [[nodiscard]] std::size_t n_cycles() const { return n_cycles_; }
    [[nodiscard]] std::size_t pi_count() const { return pi_count_; }
    [[nodiscard]] bool is_exhaustive() const { return exhaustive_; }

    /// Number of 64-pattern blocks.
    [[nodiscard]] std::size_t blocks() const { return (n_patterns_ + 63) / 64; }
    /// Lanes of `block` that hold real patterns.
    [[nodiscard]] std::uint64_t lane_mask(std::size_t block) const;
    /// Bit j of the result is the value of PI `pi` at `cycle` under pattern 64*block + j.
    [[nodiscard]] std::uint64_t word(std::size_t block, std::size_t cycle, std::size_t pi) const;
    [[nodiscard]] bool value(std::size_t pattern, std::size_t cycle, std::size_t pi) const;

private:
    std::uint64_t seed_ = 0;
    std::size_t n_patterns_ = 0;
    std::size_t n_cycles_ = 0;
    std::size_t pi_count_ = 0;
    bool exhaustive_ = false;
};

[[nodiscard]] PatternSet generate_patterns(std::uint64_t seed, std::size_t n_patterns, std::size_t n_cycles,
                                           std::size_t pi_count);

/// Initial flip-flop contents. All-zero unless a seeded random reset is requested.
struct InitState {
    bool random = false;
    std::uint64_t seed = 0;

    [[nodiscard]] std::uint64_t word(std::size_t block, std::size_t dff_index) const;
};

struct ObservationSet {
    bool include_pos = true;
    bool include_ppos = false;
    std::vector<LineId> extra;

    /// Sorted, deduplicated observed lines. Throws if the result is empty.
    [[nodiscard]] std::vector<LineId> resolve(const Circuit& circuit) const;
    [[nodiscard]] nlohmann::json to_json(const Circuit& circuit) const;
    [[nodiscard]] static ObservationSet from_json(const nlohmann::json& j, const Circuit& circuit);
};

/// Per-cycle line values of one pattern. Cycle indices are 0-based here
/// (cycle t of the FIP definition is index t-1).
class Trace {
public:
    Trace(std::size_t n_cycles, std::size_t n_lines) : n_lines_(n_lines), values_(n_cycles * n_lines, 0) {}

    [[nodiscard]] std::size_t n_cycles() const { return n_lines_ ? values_.size() / n_lines_ : 0; }
    [[nodiscard]] std::size_t n_lines() const { return n_lines_; }
    [[nodiscard]] bool at(std::size_t cycle, LineId line) const { return values_[cycle * n_lines_ + line] != 0; }
    void set(std::size_t cycle, LineId line, bool v) { values_[cycle * n_lines_ + line] = v ? 1 : 0; }

    bool operator==(const Trace&) const = default;

private:
    std::size_t n_lines_;
    std::vector<std::uint8_t> values_;
};

/// `stimulus[t][i]` is the value of primary input i at cycle t;
/// `init_state[k]` is the initial value of dffs()[k].
[[nodiscard]] Trace simulate_good(const Circuit& circuit, const std::vector<std::vector<bool>>& stimulus,
                                  const std::vector<bool>& init_state);
[[nodiscard]] Trace simulate_faulty(const Circuit& circuit, const Fault& fault,
                                    const std::vector<std::vector<bool>>& stimulus,
                                    const std::vector<bool>& init_state);

struct SimOptions {
    std::size_t threads = 1;
    InitState init;
};

/// Detection counts of one fault: counts[t] patterns observe the fault during cycle index t.
struct FipCurve {
    std::vector<std::uint64_t> counts;
    std::uint64_t n_patterns = 0;

    [[nodiscard]] double fip(std::size_t cycle) const {
        return static_cast<double>(counts.at(cycle)) / static_cast<double>(n_patterns);
    }
};

[[nodiscard]] FipCurve compute_fip(const Circuit& circuit, const Fault& fault, const PatternSet& patterns,
                                   const ObservationSet& observe, const SimOptions& options = {});

/// Per-line x per-kind x per-cycle detection counts over every line of the circuit.
class FipMatrix {
public:
    FipMatrix() = default;
    FipMatrix(std::string circuit, std::vector<std::string> line_names, std::vector<FaultKind> kinds,
              std::size_t n_cycles, std::uint64_t n_patterns, std::uint64_t seed, nlohmann::json observe);

    [[nodiscard]] const std::string& circuit() const { return circuit_; }
    [[nodiscard]] std::size_t n_lines() const { return line_names_.size(); }
    [[nodiscard]] std::size_t n_cycles() const { return n_cycles_; }
    [[nodiscard]] std::uint64_t n_patterns() const { return n_patterns_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] std::span<const FaultKind> kinds() const { return kinds_; }
    [[nodiscard]] std::span<const std::string> line_names() const { return line_names_; }
    [[nodiscard]] const nlohmann::json& observe() const { return observe_; }
    /// Index of `kind` in kinds(), if present.
    [[nodiscard]] std::optional<std::size_t> kind_index(FaultKind kind) const;

    [[nodiscard]] std::uint64_t count(LineId line, std::size_t kind, std::size_t cycle) const {
        return counts_[index(line, kind, cycle)];
    }
    [[nodiscard]] std::uint64_t& count(LineId line, std::size_t kind, std::size_t cycle) {
        return counts_[index(line, kind, cycle)];
    }
    [[nodiscard]] double fip(LineId line, std::size_t kind, std::size_t cycle) const {
        return static_cast<double>(count(line, kind, cycle)) / static_cast<double>(n_patterns_);
    }

    /// CSV with header `line,kind,cycle,fip,n_patterns,seed`, cycles 1-based.
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static FipMatrix from_json(const nlohmann::json& j);

    bool operator==(const FipMatrix&) const = default;

private:
    [[nodiscard]] std::size_t index(LineId line, std::size_t kind, std::size_t cycle) const {
        return (static_cast<std::size_t>(line) * kinds_.size() + kind) * n_cycles_ + cycle;
    }

    std::string circuit_;
    std::vector<std::string> line_names_;
    std::vector<FaultKind> kinds_;
    std::size_t n_cycles_ = 0;
    std::uint64_t n_patterns_ = 0;
    std::uint64_t seed_ = 0;
    nlohmann::json observe_;
    std::vector<std::uint64_t> counts_;
};

[[nodiscard]] FipMatrix build_fip_matrix(const Circuit& circuit, const std::vector<FaultKind>& kinds,
                                         const PatternSet& patterns, const ObservationSet& observe,
                                         const SimOptions& options = {});

/// Lines from which some path (through gates and flip-flops) reaches an observed line.
[[nodiscard]] std::vector<std::uint8_t> observable_cone(const Circuit& circuit, std::span<const LineId> observed);

}  // namespace fipgraph
