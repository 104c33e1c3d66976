#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fipgraph {

/// Gate alphabet. The numeric value is the one-hot feature index and must
/// stay stable across releases.
enum class GateKind : std::uint8_t {
    Input = 0,
    And = 1,
    Nand = 2,
    Or = 3,
    Nor = 4,
    Not = 5,
    Buff = 6,
    Xor = 7,
    Dff = 8,
};

inline constexpr std::size_t kGateKindCount = 9;

[[nodiscard]] std::string_view to_string(GateKind kind);
[[nodiscard]] std::optional<GateKind> gate_kind_from_index(int index);

using GateId = std::uint32_t;
using LineId = std::uint32_t;

/// A gate drives exactly one line, and gate `i` drives line `i`. Primary
/// inputs are INPUT-kind gates with no fanin.
struct Gate {
    GateKind kind = GateKind::Input;
    std::vector<LineId> fanins;
};

struct Line {
    std::string name;
    std::vector<GateId> sinks;  // consuming gates in ascending id order, one entry per pin
};

struct CircuitStats {
    std::size_t gates = 0;  // combinational gates (excludes INPUT and DFF)
    std::size_t dffs = 0;
    std::size_t pis = 0;
    std::size_t pos = 0;
    std::size_t lines = 0;

    bool operator==(const CircuitStats&) const = default;
};

/// Immutable validated netlist. Safe to share read-only across threads.
class Circuit {
public:
    Circuit() = default;

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] std::span<const Gate> gates() const { return gates_; }
    [[nodiscard]] std::span<const Line> lines() const { return lines_; }
    [[nodiscard]] const Gate& gate(GateId id) const { return gates_.at(id); }
    [[nodiscard]] const Line& line(LineId id) const { return lines_.at(id); }
    [[nodiscard]] std::size_t size() const { return gates_.size(); }

    [[nodiscard]] std::span<const LineId> primary_inputs() const { return primary_inputs_; }
    [[nodiscard]] std::span<const LineId> primary_outputs() const { return primary_outputs_; }
    [[nodiscard]] std::span<const GateId> dffs() const { return dffs_; }
    /// Combinational gates in evaluation order; PIs and DFF outputs are sources.
    [[nodiscard]] std::span<const GateId> level_order() const { return level_order_; }
    /// Level of every gate: 0 for INPUT and DFF, 1 + max fanin level otherwise.
    [[nodiscard]] std::span<const std::uint32_t> levels() const { return levels_; }
    [[nodiscard]] std::span<const std::string> warnings() const { return warnings_; }

    [[nodiscard]] std::optional<LineId> find_line(std::string_view name) const;
    /// D-pin line of a flip-flop.
    [[nodiscard]] LineId dff_input(GateId dff) const { return gates_.at(dff).fanins.front(); }
    /// D-pin lines of all flip-flops, in `dffs()` order.
    [[nodiscard]] std::vector<LineId> pseudo_primary_outputs() const;
    [[nodiscard]] bool is_primary_output(LineId id) const;

private:
    friend class CircuitBuilder;

    std::string name_;
    std::vector<Gate> gates_;
    std::vector<Line> lines_;
    std::vector<LineId> primary_inputs_;
    std::vector<LineId> primary_outputs_;
    std::vector<GateId> dffs_;
    std::vector<GateId> level_order_;
    std::vector<std::uint32_t> levels_;
    std::vector<std::string> warnings_;
    std::unordered_map<std::string, LineId> by_name_;
};

/// Accumulates declarations by signal name (forward references allowed) and
/// resolves them into a Circuit. Source line numbers are only used in errors.
class CircuitBuilder {
public:
    explicit CircuitBuilder(std::string name = {});

    void add_input(std::string name, int source_line = 0);
    void add_output(std::string name, int source_line = 0);
    void add_gate(std::string output, GateKind kind, std::vector<std::string> fanins, int source_line = 0);

    /// Throws ParseError on undefined signals, duplicate drivers, arity
    /// violations or combinational cycles.
    [[nodiscard]] Circuit build() &&;

private:
    struct Decl {
        std::string output;
        GateKind kind;
        std::vector<std::string> fanins;
        int source_line;
    };

    std::string name_;
    std::vector<Decl> inputs_;
    std::vector<Decl> gates_;
    std::vector<std::pair<std::string, int>> outputs_;
};

/// Parses ISCAS'89 `.bench` text. XNOR is rewritten to XOR followed by NOT
/// and BUF is accepted as an alias of BUFF.
[[nodiscard]] Circuit parse_bench(std::string_view text, std::string name = {});
[[nodiscard]] Circuit load_bench(const std::string& path);

/// Serializes back to `.bench`; parse_bench(write_bench(c)) is structurally equal to c.
[[nodiscard]] std::string write_bench(const Circuit& circuit);

/// Topological order of combinational gates, sorted by (level, id).
[[nodiscard]] std::vector<GateId> levelize(const Circuit& circuit);

[[nodiscard]] CircuitStats circuit_stats(const Circuit& circuit);

/// Equality of names, kinds and connectivity, independent of id assignment.
[[nodiscard]] bool structurally_equal(const Circuit& a, const Circuit& b);

struct GeneratorConfig {
    std::uint64_t seed = 1;
    std::size_t inputs = 4;
    std::size_t outputs = 2;
    std::size_t dffs = 3;
    std::size_t gates = 20;
    std::size_t max_fanin = 3;
    std::string name = "gen";
};

/// Seeded random sequential circuit in the ISCAS'89 gate alphabet. Every PI
/// and flip-flop output is consumed, and every gate reaches a PO or a DFF.
[[nodiscard]] Circuit generate_circuit(const GeneratorConfig& config);

/// Evaluates one gate over 64 bit-parallel lanes.
[[nodiscard]] std::uint64_t eval_gate(GateKind kind, std::span<const std::uint64_t> inputs);

}  // namespace fipgraph
