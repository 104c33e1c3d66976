#include "fipgraph/stgraph.hpp"

#include <algorithm>

#include "fipgraph/error.hpp"
#include "fipgraph/io.hpp"

namespace fipgraph {

using nlohmann::json;

std::string_view to_string(FeatureMode mode) { return mode == FeatureMode::TM ? "TM" : "FIP"; }

FeatureMode feature_mode_from_string(std::string_view name) {
    if (name == "TM" || name == "tm") return FeatureMode::TM;
    if (name == "FIP" || name == "fip") return FeatureMode::FIP;
    throw ConfigError("unknown feature mode '" + std::string(name) + "' (expected tm or fip)");
}

Topology build_topology(const Circuit& circuit) {
    Topology t;
    t.circuit = circuit.name();
    t.kinds.reserve(circuit.size());
    for (const auto& g : circuit.gates()) t.kinds.push_back(g.kind);
    for (GateId g = 0; g < circuit.size(); ++g) {
        const auto& fanins = circuit.gate(g).fanins;
        for (std::size_t i = 0; i < fanins.size(); ++i)
            if (std::find(fanins.begin(), fanins.begin() + static_cast<long>(i), fanins[i]) ==
                fanins.begin() + static_cast<long>(i))
                t.edges.emplace_back(fanins[i], g);
    }
    return t;
}

Series tm_edge_series(const Topology& topo, const TestabilityFrames& frames) {
    if (frames.n_lines() != topo.n_nodes())
        throw ShapeError("testability frames cover " + std::to_string(frames.n_lines()) + " lines, graph has " +
                         std::to_string(topo.n_nodes()) + " nodes");
    Series s{frames.n_frames(), topo.edges.size(), kTmChannels, {}};
    s.values.reserve(s.n_cycles * s.n_items * s.width);
    for (std::size_t t = 0; t < frames.n_frames(); ++t)
        for (const auto& [src, dst] : topo.edges) {
            const auto i = frames.index(t, src);
            s.values.insert(s.values.end(),
                            {frames.cc0n[i], frames.cc1n[i], frames.con[i], frames.cop.c1[i], frames.cop.o[i]});
        }
    return s;
}

namespace {

std::vector<std::size_t> channel_indices(const FipMatrix& fip, const std::vector<FaultKind>& channels) {
    if (channels.empty()) throw ConfigError("at least one FIP channel is required");
    std::vector<std::size_t> idx;
    for (auto k : channels) {
        auto i = fip.kind_index(k);
        if (!i) throw ShapeError("FIP matrix has no " + std::string(to_string(k)) + " values");
        idx.push_back(*i);
    }
    return idx;
}

void check_lines(const Topology& topo, const FipMatrix& fip) {
    if (fip.n_lines() != topo.n_nodes())
        throw ShapeError("FIP matrix covers " + std::to_string(fip.n_lines()) + " lines, graph has " +
                         std::to_string(topo.n_nodes()) + " nodes");
}

}  // namespace

Series fip_edge_series(const Topology& topo, const FipMatrix& fip, const std::vector<FaultKind>& channels) {
    check_lines(topo, fip);
    const auto idx = channel_indices(fip, channels);
    Series s{fip.n_cycles(), topo.edges.size(), idx.size(), {}};
    s.values.reserve(s.n_cycles * s.n_items * s.width);
    for (std::size_t t = 0; t < fip.n_cycles(); ++t)
        for (const auto& edge : topo.edges)
            for (auto k : idx) s.values.push_back(fip.fip(edge.first, k, t));
    return s;
}

Series fip_node_labels(const Topology& topo, const FipMatrix& fip, const std::vector<FaultKind>& channels) {
    check_lines(topo, fip);
    const auto idx = channel_indices(fip, channels);
    Series s{fip.n_cycles(), topo.n_nodes(), idx.size(), {}};
    s.values.reserve(s.n_cycles * s.n_items * s.width);
    for (std::size_t t = 0; t < fip.n_cycles(); ++t)
        for (std::size_t v = 0; v < topo.n_nodes(); ++v)
            for (auto k : idx) s.values.push_back(topo.kinds[v] == GateKind::Input ? 0.0 : fip.fip(v, k, t));
    return s;
}

std::size_t window_count(std::size_t total, std::size_t m, std::size_t s) {
    if (m == 0 || s == 0) throw ConfigError("input and output cycle counts must be at least 1");
    if (total < m + s)
        throw ConfigError(std::to_string(total) + " cycles cannot hold a window of " + std::to_string(m) + " input and " +
                          std::to_string(s) + " output cycles");
    return total - m - s + 1;
}

std::vector<STGraph> make_windows(std::shared_ptr<const Topology> topo, FeatureMode mode, const Series& features,
                                  const Series& labels, std::size_t m, std::size_t s) {
    if (features.n_cycles != labels.n_cycles)
        throw ShapeError("feature series has " + std::to_string(features.n_cycles) + " cycles, labels have " +
                         std::to_string(labels.n_cycles));
    if (features.n_items != topo->edges.size() || labels.n_items != topo->n_nodes())
        throw ShapeError("series do not match the graph topology");
    const auto count = window_count(features.n_cycles, m, s);
    const auto frame_e = features.n_items * features.width;
    const auto frame_y = labels.n_items * labels.width;
    std::vector<STGraph> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        STGraph g;
        g.topo = topo;
        g.mode = mode;
        g.m = m;
        g.s = s;
        g.p = features.width;
        g.q = labels.width;
        g.window_start = k;
        g.E.assign(features.values.begin() + static_cast<long>(k * frame_e),
                   features.values.begin() + static_cast<long>((k + m) * frame_e));
        g.Y.assign(labels.values.begin() + static_cast<long>((k + m) * frame_y),
                   labels.values.begin() + static_cast<long>((k + m + s) * frame_y));
        out.push_back(std::move(g));
    }
    return out;
}

std::string serialize(const STGraph& g) {
    json nodes = json::array();
    for (std::size_t v = 0; v < g.n_nodes(); ++v) {
        const auto kind = static_cast<int>(g.topo->kinds[v]);
        std::vector<int> h(kGateKindCount, 0);
        h[static_cast<std::size_t>(kind)] = 1;
        nodes.push_back({{"id", v}, {"kind", kind}, {"h", h}});
    }
    json edges = json::array();
    for (const auto& [a, b] : g.topo->edges) edges.push_back({a, b});
    json E = json::array();
    for (std::size_t t = 0; t < g.m; ++t) {
        json frame = json::array();
        for (std::size_t e = 0; e < g.n_edges(); ++e) {
            const auto* row = g.E.data() + (t * g.n_edges() + e) * g.p;
            frame.push_back(std::vector<double>(row, row + g.p));
        }
        E.push_back(std::move(frame));
    }
    json Y = json::array();
    for (std::size_t t = 0; t < g.s; ++t) {
        json frame = json::array();
        for (std::size_t v = 0; v < g.n_nodes(); ++v) {
            const auto* row = g.Y.data() + (t * g.n_nodes() + v) * g.q;
            frame.push_back(std::vector<double>(row, row + g.q));
        }
        Y.push_back(std::move(frame));
    }
    json j = {{"circuit", g.topo->circuit},
              {"mode", std::string(to_string(g.mode))},
              {"m", g.m},
              {"s", g.s},
              {"p", g.p},
              {"q", g.q},
              {"window_start", g.window_start},
              {"nodes", std::move(nodes)},
              {"edges", std::move(edges)},
              {"E", std::move(E)},
              {"Y", std::move(Y)}};
    return j.dump();
}

namespace {

[[noreturn]] void schema(const std::string& path, const std::string& what) { throw SchemaError(path + ": " + what); }

const json& field(const json& j, const std::string& key) {
    auto it = j.find(key);
    if (it == j.end()) schema(key, "missing field");
    return *it;
}

std::size_t count_field(const json& j, const std::string& key) {
    const auto& v = field(j, key);
    if (!v.is_number_unsigned()) schema(key, "expected a non-negative integer");
    return v.get<std::size_t>();
}

const json& array_of(const json& v, std::size_t n, const std::string& path) {
    if (!v.is_array()) schema(path, "expected an array");
    if (v.size() != n) schema(path, "expected " + std::to_string(n) + " entries, found " + std::to_string(v.size()));
    return v;
}

void read_block(const json& arr, std::size_t frames, std::size_t items, std::size_t width, const std::string& name,
                std::vector<double>& out) {
    array_of(arr, frames, name);
    out.clear();
    out.reserve(frames * items * width);
    for (std::size_t t = 0; t < frames; ++t) {
        const auto pt = name + "[" + std::to_string(t) + "]";
        array_of(arr[t], items, pt);
        for (std::size_t i = 0; i < items; ++i) {
            const auto pi = pt + "[" + std::to_string(i) + "]";
            array_of(arr[t][i], width, pi);
            for (std::size_t c = 0; c < width; ++c) {
                const auto& x = arr[t][i][c];
                if (!x.is_number()) schema(pi + "[" + std::to_string(c) + "]", "expected a number");
                const double v = x.get<double>();
                if (!(v >= 0.0 && v <= 1.0))
                    schema(pi + "[" + std::to_string(c) + "]", "value " + format_double(v) + " outside [0,1]");
                out.push_back(v);
            }
        }
    }
}

bool same_topology(const Topology& a, const Topology& b) {
    return a.circuit == b.circuit && a.kinds == b.kinds && a.edges == b.edges;
}

}  // namespace

STGraph deserialize(std::string_view line, std::shared_ptr<const Topology> shared) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("sample: ") + e.what());
    }
    if (!j.is_object()) schema("sample", "expected an object");
    STGraph g;
    const auto& circuit = field(j, "circuit");
    if (!circuit.is_string()) schema("circuit", "expected a string");
    const auto& mode = field(j, "mode");
    if (mode != "TM" && mode != "FIP") schema("mode", "expected \"TM\" or \"FIP\"");
    g.mode = mode == "TM" ? FeatureMode::TM : FeatureMode::FIP;
    g.m = count_field(j, "m");
    g.s = count_field(j, "s");
    g.p = count_field(j, "p");
    g.q = count_field(j, "q");
    g.window_start = count_field(j, "window_start");
    if (g.m == 0) schema("m", "must be at least 1");
    if (g.s == 0) schema("s", "must be at least 1");
    if (g.q == 0) schema("q", "must be at least 1");
    if (g.mode == FeatureMode::TM && g.p != kTmChannels)
        schema("p", "mode TM requires p=" + std::to_string(kTmChannels) + ", found " + std::to_string(g.p));
    if (g.mode == FeatureMode::FIP && g.p != g.q)
        schema("p", "mode FIP requires p=q, found p=" + std::to_string(g.p) + " q=" + std::to_string(g.q));

    auto topo = std::make_shared<Topology>();
    topo->circuit = circuit.get<std::string>();
    const auto& nodes = field(j, "nodes");
    if (!nodes.is_array()) schema("nodes", "expected an array");
    for (std::size_t v = 0; v < nodes.size(); ++v) {
        const auto path = "nodes[" + std::to_string(v) + "]";
        const auto& node = nodes[v];
        if (!node.is_object()) schema(path, "expected an object");
        if (node.value("id", json()) != json(v)) schema(path + ".id", "expected " + std::to_string(v));
        const auto& kind = node.value("kind", json());
        if (!kind.is_number_integer() || !gate_kind_from_index(kind.get<int>()))
            schema(path + ".kind", "expected a gate kind index in 0.." + std::to_string(kGateKindCount - 1));
        if (node.contains("h")) {
            const auto& h = array_of(node["h"], kGateKindCount, path + ".h");
            int ones = 0, hot = -1;
            for (std::size_t i = 0; i < kGateKindCount; ++i) {
                if (h[i] == 1) {
                    ++ones;
                    hot = static_cast<int>(i);
                } else if (h[i] != 0) {
                    schema(path + ".h[" + std::to_string(i) + "]", "expected 0 or 1");
                }
            }
            if (ones != 1) schema(path + ".h", "one-hot row has " + std::to_string(ones) + " ones");
            if (hot != kind.get<int>()) schema(path + ".h", "one-hot position disagrees with kind");
        }
        topo->kinds.push_back(*gate_kind_from_index(kind.get<int>()));
    }
    const auto& edges = field(j, "edges");
    if (!edges.is_array()) schema("edges", "expected an array");
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto path = "edges[" + std::to_string(e) + "]";
        const auto& pair = array_of(edges[e], 2, path);
        for (int k = 0; k < 2; ++k)
            if (!pair[k].is_number_unsigned() || pair[k].get<std::size_t>() >= topo->kinds.size())
                schema(path + "[" + std::to_string(k) + "]", "not a valid node id");
        topo->edges.emplace_back(pair[0].get<std::uint32_t>(), pair[1].get<std::uint32_t>());
        if (topo->kinds[topo->edges.back().second] == GateKind::Input) schema(path, "edge into an INPUT node");
    }
    read_block(field(j, "E"), g.m, topo->edges.size(), g.p, "E", g.E);
    read_block(field(j, "Y"), g.s, topo->kinds.size(), g.q, "Y", g.Y);

    if (shared && same_topology(*shared, *topo))
        g.topo = std::move(shared);
    else
        g.topo = std::move(topo);
    return g;
}

CircuitSamples convert_circuit(const Circuit& circuit, const ConvertConfig& config, const FipMatrix* labels) {
    auto topo = std::make_shared<const Topology>(build_topology(circuit));
    FipMatrix simulated;
    if (!labels) {
        const auto patterns =
            generate_patterns(config.seed, config.n_patterns, config.total_cycles, circuit.primary_inputs().size());
        simulated = build_fip_matrix(circuit, config.channels, patterns, config.observe, config.sim);
        labels = &simulated;
    }
    const auto total = labels->n_cycles();
    (void)window_count(total, config.m, config.s);

    Series features = config.mode == FeatureMode::FIP
                          ? fip_edge_series(*topo, *labels, config.channels)
                          : tm_edge_series(*topo, compute_testability(circuit, total, config.observe));
    const Series y = fip_node_labels(*topo, *labels, config.channels);

    CircuitSamples out;
    out.circuit = circuit.name();
    out.gates = circuit_stats(circuit).gates;
    out.topo = topo;
    out.samples = make_windows(topo, config.mode, features, y, config.m, config.s);
    return out;
}

STGraph tm_inference_sample(const Circuit& circuit, std::size_t m, std::size_t s, std::size_t q,
                            const ObservationSet& observe) {
    auto topo = std::make_shared<const Topology>(build_topology(circuit));
    const auto features = tm_edge_series(*topo, compute_testability(circuit, m, observe));
    STGraph g;
    g.topo = topo;
    g.mode = FeatureMode::TM;
    g.m = m;
    g.s = s;
    g.p = kTmChannels;
    g.q = q;
    g.E = features.values;
    g.Y.assign(s * topo->n_nodes() * q, 0.0);
    return g;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json entries = json::array();
    for (const auto& c : dataset.circuits) {
        std::string body;
        for (const auto& sample : c.samples) {
            body += serialize(sample);
            body += '\n';
        }
        const auto file = c.circuit + ".jsonl";
        write_file_atomic(dir / file, body);
        entries.push_back({{"circuit", c.circuit},
                           {"file", file},
                           {"split", c.split},
                           {"gates", c.gates},
                           {"windows", c.samples.size()},
                           {"window", {{"m", dataset.m}, {"s", dataset.s}, {"stride", 1}, {"first_start", 0}}}});
    }
    json manifest = {{"format", "fipgraph-dataset/1"},
                     {"mode", std::string(to_string(dataset.mode))},
                     {"m", dataset.m},
                     {"s", dataset.s},
                     {"p", dataset.p},
                     {"q", dataset.q},
                     {"provenance", dataset.provenance},
                     {"samples", std::move(entries)}};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw SchemaError("manifest: " + std::string(e.what()));
    }
    Dataset d;
    try {
        if (manifest.at("format") != "fipgraph-dataset/1") schema("manifest.format", "unsupported format");
        d.mode = feature_mode_from_string(manifest.at("mode").get<std::string>());
        d.m = manifest.at("m").get<std::size_t>();
        d.s = manifest.at("s").get<std::size_t>();
        d.p = manifest.at("p").get<std::size_t>();
        d.q = manifest.at("q").get<std::size_t>();
        d.provenance = manifest.value("provenance", json::object());
        const auto base = manifest_path.parent_path();
        for (const auto& entry : manifest.at("samples")) {
            CircuitSamples c;
            c.circuit = entry.at("circuit").get<std::string>();
            c.split = entry.value("split", "");
            c.gates = entry.at("gates").get<std::size_t>();
            const auto file = base / entry.at("file").get<std::string>();
            if (!std::filesystem::exists(file)) throw SchemaError("manifest: sample file '" + file.string() + "' missing");
            const auto text = read_file(file);
            std::size_t pos = 0, line_no = 0;
            while (pos < text.size()) {
                auto end = text.find('\n', pos);
                if (end == std::string::npos) end = text.size();
                ++line_no;
                if (end > pos) {
                    try {
                        auto g = deserialize(std::string_view(text).substr(pos, end - pos), c.topo);
                        if (!c.topo) c.topo = g.topo;
                        if (g.topo->circuit != c.circuit || g.mode != d.mode || g.m != d.m || g.s != d.s ||
                            g.p != d.p || g.q != d.q)
                            throw SchemaError("sample disagrees with manifest header");
                        c.samples.push_back(std::move(g));
                    } catch (const SchemaError& e) {
                        throw SchemaError(file.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
                    }
                }
                pos = end + 1;
            }
            if (c.samples.size() != entry.at("windows").get<std::size_t>())
                throw SchemaError("manifest: " + c.circuit + " lists " +
                                  std::to_string(entry.at("windows").get<std::size_t>()) + " windows, file has " +
                                  std::to_string(c.samples.size()));
            d.circuits.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw SchemaError("manifest: " + std::string(e.what()));
    }
    return d;
}

}  // namespace fipgraph
