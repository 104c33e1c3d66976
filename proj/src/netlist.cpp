#include "fipgraph/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>

#include "fipgraph/error.hpp"

namespace fipgraph {

namespace {

constexpr std::array<std::string_view, kGateKindCount> kKindNames = {
    "INPUT", "AND", "NAND", "OR", "NOR", "NOT", "BUFF", "XOR", "DFF"};

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool is_combinational(GateKind kind) { return kind != GateKind::Input && kind != GateKind::Dff; }

struct LevelResult {
    std::vector<std::uint32_t> levels;
    std::vector<GateId> order;
};

// Kahn's algorithm over the combinational subgraph. Flip-flop and INPUT
// outputs are level-0 sources, flip-flop inputs are sinks.
LevelResult compute_levels(const std::vector<Gate>& gates, const std::vector<Line>& lines) {
    const auto n = gates.size();
    std::vector<std::uint32_t> pending(n, 0);
    std::vector<std::uint32_t> levels(n, 0);
    for (GateId g = 0; g < n; ++g) {
        if (!is_combinational(gates[g].kind)) continue;
        for (LineId in : gates[g].fanins)
            if (is_combinational(gates[in].kind)) ++pending[g];
    }

    std::queue<GateId> ready;
    for (GateId g = 0; g < n; ++g)
        if (is_combinational(gates[g].kind) && pending[g] == 0) ready.push(g);

    std::size_t visited = 0;
    for (GateId g = 0; g < n; ++g)
        if (!is_combinational(gates[g].kind)) ++visited;
    while (!ready.empty()) {
        const GateId g = ready.front();
        ready.pop();
        ++visited;
        std::uint32_t level = 0;
        for (LineId in : gates[g].fanins) level = std::max(level, levels[in]);
        levels[g] = level + 1;
        for (GateId sink : lines[g].sinks)
            if (is_combinational(gates[sink].kind) && --pending[sink] == 0) ready.push(sink);
    }

    if (visited != n) {
        // Walk backwards through unresolved gates until a name repeats.
        GateId start = 0;
        while (pending[start] == 0) ++start;
        std::vector<GateId> path{start};
        std::vector<int> seen(n, -1);
        seen[start] = 0;
        GateId cur = start;
        for (;;) {
            GateId next = cur;
            for (LineId in : gates[cur].fanins)
                if (is_combinational(gates[in].kind) && pending[in] > 0) {
                    next = in;
                    break;
                }
            if (seen[next] >= 0) {
                std::string msg = "combinational cycle: ";
                for (std::size_t i = static_cast<std::size_t>(seen[next]); i < path.size(); ++i)
                    msg += lines[path[i]].name + " <- ";
                msg += lines[next].name;
                throw ParseError(msg, 0);
            }
            seen[next] = static_cast<int>(path.size());
            path.push_back(next);
            cur = next;
        }
    }

    LevelResult result;
    result.levels = std::move(levels);
    for (GateId g = 0; g < n; ++g)
        if (is_combinational(gates[g].kind)) result.order.push_back(g);
    std::stable_sort(result.order.begin(), result.order.end(),
                     [&](GateId a, GateId b) { return result.levels[a] < result.levels[b]; });
    return result;
}

}  // namespace

std::string_view to_string(GateKind kind) { return kKindNames.at(static_cast<std::size_t>(kind)); }

std::optional<GateKind> gate_kind_from_index(int index) {
    if (index < 0 || index >= static_cast<int>(kGateKindCount)) return std::nullopt;
    return static_cast<GateKind>(index);
}

std::optional<LineId> Circuit::find_line(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

std::vector<LineId> Circuit::pseudo_primary_outputs() const {
    std::vector<LineId> out;
    out.reserve(dffs_.size());
    for (GateId d : dffs_) out.push_back(dff_input(d));
    return out;
}

bool Circuit::is_primary_output(LineId id) const {
    return std::find(primary_outputs_.begin(), primary_outputs_.end(), id) != primary_outputs_.end();
}

CircuitBuilder::CircuitBuilder(std::string name) : name_(std::move(name)) {}

void CircuitBuilder::add_input(std::string name, int source_line) {
    inputs_.push_back({std::move(name), GateKind::Input, {}, source_line});
}

void CircuitBuilder::add_output(std::string name, int source_line) {
    outputs_.emplace_back(std::move(name), source_line);
}

void CircuitBuilder::add_gate(std::string output, GateKind kind, std::vector<std::string> fanins, int source_line) {
    gates_.push_back({std::move(output), kind, std::move(fanins), source_line});
}

Circuit CircuitBuilder::build() && {
    Circuit c;
    c.name_ = name_;

    std::unordered_map<std::string, int> decl_line;
    auto declare = [&](const Decl& d) {
        auto [it, inserted] = c.by_name_.emplace(d.output, static_cast<LineId>(c.gates_.size()));
        if (!inserted) {
            throw ParseError("duplicate driver for signal '" + d.output + "' (first driven at line " +
                                 std::to_string(decl_line[d.output]) + ")",
                             d.source_line);
        }
        decl_line[d.output] = d.source_line;
        c.gates_.push_back(Gate{d.kind, {}});
        c.lines_.push_back(Line{d.output, {}});
    };
    for (const auto& d : inputs_) {
        c.primary_inputs_.push_back(static_cast<LineId>(c.gates_.size()));
        declare(d);
    }
    for (const auto& d : gates_) declare(d);

    auto resolve = [&](const std::string& name, int source_line) -> LineId {
        auto it = c.by_name_.find(name);
        if (it == c.by_name_.end()) throw ParseError("reference to undefined signal '" + name + "'", source_line);
        return it->second;
    };

    for (std::size_t i = 0; i < gates_.size(); ++i) {
        const auto& d = gates_[i];
        const GateId id = static_cast<GateId>(inputs_.size() + i);
        const bool unary = d.kind == GateKind::Not || d.kind == GateKind::Buff || d.kind == GateKind::Dff;
        if (d.kind == GateKind::Input) throw ParseError("INPUT cannot be used as a gate function", d.source_line);
        if (unary && d.fanins.size() != 1)
            throw ParseError(std::string(to_string(d.kind)) + " '" + d.output + "' takes exactly one input",
                             d.source_line);
        if (d.fanins.empty()) throw ParseError("gate '" + d.output + "' has no inputs", d.source_line);
        for (const auto& in : d.fanins) c.gates_[id].fanins.push_back(resolve(in, d.source_line));
        if (d.kind == GateKind::Dff) c.dffs_.push_back(id);
    }

    for (const auto& [name, source_line] : outputs_) {
        const LineId id = resolve(name, source_line);
        if (!c.is_primary_output(id)) c.primary_outputs_.push_back(id);
    }

    for (GateId g = 0; g < c.gates_.size(); ++g)
        for (LineId in : c.gates_[g].fanins) c.lines_[in].sinks.push_back(g);

    auto levels = compute_levels(c.gates_, c.lines_);
    c.levels_ = std::move(levels.levels);
    c.level_order_ = std::move(levels.order);

    if (c.primary_outputs_.empty()) c.warnings_.emplace_back("no outputs");
    return c;
}

Circuit parse_bench(std::string_view text, std::string name) {
    CircuitBuilder builder(std::move(name));
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;

    auto split_args = [&](std::string_view args) {
        std::vector<std::string> out;
        std::size_t start = 0;
        for (;;) {
            const auto comma = args.find(',', start);
            const auto piece = trim(args.substr(start, comma == std::string_view::npos ? args.npos : comma - start));
            if (piece.empty()) throw ParseError("empty signal name in argument list", line_no);
            out.emplace_back(piece);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return out;
    };

    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const auto open = line.find('(');
        const auto close = line.rfind(')');
        if (open == std::string_view::npos || close == std::string_view::npos || close < open || close != line.size() - 1)
            throw ParseError("malformed statement '" + std::string(line) + "'", line_no);

        const auto eq = line.find('=');
        if (eq == std::string_view::npos || eq > open) {
            const auto keyword = upper(trim(line.substr(0, open)));
            const auto arg = std::string(trim(line.substr(open + 1, close - open - 1)));
            if (arg.empty()) throw ParseError("empty signal name", line_no);
            if (keyword == "INPUT") {
                builder.add_input(arg, line_no);
            } else if (keyword == "OUTPUT") {
                builder.add_output(arg, line_no);
            } else {
                throw ParseError("unknown declaration '" + std::string(trim(line.substr(0, open))) + "'", line_no);
            }
            continue;
        }

        const auto target = std::string(trim(line.substr(0, eq)));
        const auto raw_keyword = trim(line.substr(eq + 1, open - eq - 1));
        const auto keyword = upper(raw_keyword);
        if (target.empty()) throw ParseError("missing output signal name", line_no);
        auto fanins = split_args(line.substr(open + 1, close - open - 1));

        static const std::unordered_map<std::string, GateKind> kKeywords = {
            {"AND", GateKind::And}, {"NAND", GateKind::Nand}, {"OR", GateKind::Or},   {"NOR", GateKind::Nor},
            {"NOT", GateKind::Not}, {"INV", GateKind::Not},   {"BUFF", GateKind::Buff}, {"BUF", GateKind::Buff},
            {"XOR", GateKind::Xor}, {"DFF", GateKind::Dff},
        };
        if (keyword == "XNOR") {
            const auto inner = target + ".xnor";
            builder.add_gate(inner, GateKind::Xor, std::move(fanins), line_no);
            builder.add_gate(target, GateKind::Not, {inner}, line_no);
            continue;
        }
        auto it = kKeywords.find(keyword);
        if (it == kKeywords.end())
            throw ParseError("unknown gate type '" + std::string(raw_keyword) + "' in: " + std::string(line), line_no);
        builder.add_gate(target, it->second, std::move(fanins), line_no);
    }
    return std::move(builder).build();
}

Circuit load_bench(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open netlist '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    auto stem = path.substr(path.find_last_of('/') == std::string::npos ? 0 : path.find_last_of('/') + 1);
    if (auto dot = stem.rfind('.'); dot != std::string::npos) stem = stem.substr(0, dot);
    return parse_bench(buf.str(), stem);
}

std::string write_bench(const Circuit& circuit) {
    std::ostringstream out;
    if (!circuit.name().empty()) out << "# " << circuit.name() << "\n";
    for (LineId pi : circuit.primary_inputs()) out << "INPUT(" << circuit.line(pi).name << ")\n";
    for (LineId po : circuit.primary_outputs()) out << "OUTPUT(" << circuit.line(po).name << ")\n";
    for (GateId g = 0; g < circuit.size(); ++g) {
        const auto& gate = circuit.gate(g);
        if (gate.kind == GateKind::Input) continue;
        out << circuit.line(g).name << " = " << to_string(gate.kind) << "(";
        for (std::size_t i = 0; i < gate.fanins.size(); ++i)
            out << (i ? ", " : "") << circuit.line(gate.fanins[i]).name;
        out << ")\n";
    }
    return out.str();
}

std::vector<GateId> levelize(const Circuit& circuit) {
    std::vector<Gate> gates(circuit.gates().begin(), circuit.gates().end());
    std::vector<Line> lines(circuit.lines().begin(), circuit.lines().end());
    return compute_levels(gates, lines).order;
}

CircuitStats circuit_stats(const Circuit& circuit) {
    CircuitStats s;
    s.pis = circuit.primary_inputs().size();
    s.pos = circuit.primary_outputs().size();
    s.dffs = circuit.dffs().size();
    s.lines = circuit.lines().size();
    s.gates = circuit.level_order().size();
    return s;
}

bool structurally_equal(const Circuit& a, const Circuit& b) {
    if (a.size() != b.size()) return false;
    auto names = [](const Circuit& c, std::span<const LineId> ids) {
        std::vector<std::string> out;
        for (auto id : ids) out.push_back(c.line(id).name);
        std::sort(out.begin(), out.end());
        return out;
    };
    if (names(a, a.primary_inputs()) != names(b, b.primary_inputs())) return false;
    if (names(a, a.primary_outputs()) != names(b, b.primary_outputs())) return false;
    for (GateId g = 0; g < a.size(); ++g) {
        const auto other = b.find_line(a.line(g).name);
        if (!other) return false;
        const auto& ga = a.gate(g);
        const auto& gb = b.gate(*other);
        if (ga.kind != gb.kind || ga.fanins.size() != gb.fanins.size()) return false;
        for (std::size_t i = 0; i < ga.fanins.size(); ++i)
            if (a.line(ga.fanins[i]).name != b.line(gb.fanins[i]).name) return false;
    }
    return true;
}

std::uint64_t eval_gate(GateKind kind, std::span<const std::uint64_t> in) {
    std::uint64_t v = 0;
    switch (kind) {
        case GateKind::And:
        case GateKind::Nand:
            v = ~std::uint64_t{0};
            for (auto x : in) v &= x;
            return kind == GateKind::Nand ? ~v : v;
        case GateKind::Or:
        case GateKind::Nor:
            for (auto x : in) v |= x;
            return kind == GateKind::Nor ? ~v : v;
        case GateKind::Xor:
            for (auto x : in) v ^= x;
            return v;
        case GateKind::Not:
            return ~in[0];
        case GateKind::Buff:
        case GateKind::Dff:
            return in[0];
        case GateKind::Input:
            break;
    }
    return 0;
}

Circuit generate_circuit(const GeneratorConfig& config) {
    if (config.inputs == 0) throw ConfigError("generator needs at least one primary input");
    if (config.gates == 0) throw ConfigError("generator needs at least one gate");
    std::mt19937_64 rng(config.seed);
    auto below = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

    struct Node {
        std::string name;
        GateKind kind;
        std::vector<std::size_t> fanins;
        std::size_t uses = 0;
    };
    std::vector<Node> nodes;
    for (std::size_t i = 0; i < config.inputs; ++i) nodes.push_back({"I" + std::to_string(i), GateKind::Input, {}});
    for (std::size_t i = 0; i < config.dffs; ++i) nodes.push_back({"Q" + std::to_string(i), GateKind::Dff, {}});
    const std::size_t first_gate = nodes.size();

    std::vector<std::size_t> unused_sources(first_gate);
    for (std::size_t i = 0; i < first_gate; ++i) unused_sources[i] = first_gate - 1 - i;

    const std::size_t max_fanin = std::max<std::size_t>(2, config.max_fanin);
    for (std::size_t k = 0; k < config.gates; ++k) {
        const auto roll = below(100);
        GateKind kind = roll < 16 ? GateKind::Not
                      : roll < 19 ? GateKind::Buff
                      : roll < 26 ? GateKind::Xor
                      : roll < 46 ? GateKind::And
                      : roll < 66 ? GateKind::Nand
                      : roll < 80 ? GateKind::Or
                                  : GateKind::Nor;
        const std::size_t arity =
            (kind == GateKind::Not || kind == GateKind::Buff) ? 1 : 2 + below(max_fanin - 1);
        Node node{"N" + std::to_string(k), kind, {}};
        const std::size_t pool = nodes.size();
        while (node.fanins.size() < std::min(arity, pool)) {
            std::size_t pick;
            if (!unused_sources.empty() && node.fanins.empty()) {
                pick = unused_sources.back();
                unused_sources.pop_back();
            } else if (below(2) == 0) {
                const std::size_t window = std::min<std::size_t>(8, pool);
                pick = pool - 1 - below(window);
            } else {
                pick = below(pool);
            }
            if (std::find(node.fanins.begin(), node.fanins.end(), pick) != node.fanins.end()) continue;
            node.fanins.push_back(pick);
        }
        if (node.fanins.size() < 2 && kind != GateKind::Not && kind != GateKind::Buff)
            node.kind = kind = GateKind::Not;
        for (auto f : node.fanins) ++nodes[f].uses;
        nodes.push_back(std::move(node));
    }
    // Sources never picked (more sources than gates) feed the last gate.
    for (auto s : unused_sources) {
        auto& last = nodes.back();
        if (last.kind == GateKind::Not || last.kind == GateKind::Buff) last.kind = GateKind::Xor;
        last.fanins.push_back(s);
        ++nodes[s].uses;
    }

    auto dangling = [&] {
        std::vector<std::size_t> out;
        for (std::size_t i = first_gate; i < nodes.size(); ++i)
            if (nodes[i].uses == 0) out.push_back(i);
        return out;
    };

    // Flip-flop D pins prefer dangling gates, then any gate in the back half.
    for (std::size_t i = 0; i < config.dffs; ++i) {
        auto free_gates = dangling();
        std::size_t pick = free_gates.empty() ? first_gate + config.gates / 2 + below((config.gates + 1) / 2)
                                              : free_gates[below(free_gates.size())];
        pick = std::min(pick, nodes.size() - 1);
        nodes[config.inputs + i].fanins = {pick};
        ++nodes[pick].uses;
    }

    std::vector<std::size_t> outputs;
    for (std::size_t i = 0; i < config.outputs; ++i) {
        auto free_gates = dangling();
        std::size_t pick = free_gates.empty() ? first_gate + below(config.gates) : free_gates[below(free_gates.size())];
        if (std::find(outputs.begin(), outputs.end(), pick) != outputs.end()) continue;
        outputs.push_back(pick);
        ++nodes[pick].uses;
    }
    // Remaining dangling gates fan into a later multi-input gate, or become POs.
    for (auto g : dangling()) {
        std::vector<std::size_t> later;
        for (std::size_t j = g + 1; j < nodes.size(); ++j)
            if (nodes[j].kind != GateKind::Not && nodes[j].kind != GateKind::Buff && nodes[j].fanins.size() <= max_fanin)
                later.push_back(j);
        if (later.empty()) {
            outputs.push_back(g);
        } else {
            nodes[later[below(later.size())]].fanins.push_back(g);
        }
        ++nodes[g].uses;
    }

    CircuitBuilder builder(config.name);
    for (std::size_t i = 0; i < config.inputs; ++i) builder.add_input(nodes[i].name);
    for (auto o : outputs) builder.add_output(nodes[o].name);
    for (std::size_t i = config.inputs; i < nodes.size(); ++i) {
        std::vector<std::string> fanins;
        for (auto f : nodes[i].fanins) fanins.push_back(nodes[f].name);
        builder.add_gate(nodes[i].name, nodes[i].kind, std::move(fanins));
    }
    return std::move(builder).build();
}

}  // namespace fipgraph
