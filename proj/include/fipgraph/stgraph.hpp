#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fipgraph/fault_sim.hpp"
#include "fipgraph/netlist.hpp"
#include "fipgraph/testability.hpp"

namespace fipgraph {

enum class FeatureMode { TM, FIP };

[[nodiscard]] std::string_view to_string(FeatureMode mode);
[[nodiscard]] FeatureMode feature_mode_from_string(std::string_view name);

using Edge = std::pair<std::uint32_t, std::uint32_t>;  // driver node -> sink node

/// Graph structure shared by every window of one circuit. Node i is gate i.
struct Topology {
    std::string circuit;
    std::vector<GateKind> kinds;
    std::vector<Edge> edges;  // sorted by (sink, first fanin pin), no duplicates

    [[nodiscard]] std::size_t n_nodes() const { return kinds.size(); }
};

[[nodiscard]] Topology build_topology(const Circuit& circuit);

/// Values laid out [cycle][item][channel].
struct Series {
    std::size_t n_cycles = 0;
    std::size_t n_items = 0;
    std::size_t width = 0;
    std::vector<double> values;

    [[nodiscard]] double at(std::size_t cycle, std::size_t item, std::size_t ch) const {
        return values[(cycle * n_items + item) * width + ch];
    }
};

inline constexpr std::size_t kTmChannels = 5;

/// Per-edge driver-line [cc0n, cc1n, con, c1, o] for every frame.
[[nodiscard]] Series tm_edge_series(const Topology& topo, const TestabilityFrames& frames);
/// Per-edge driver-line FIP for each channel kind in `channels`.
[[nodiscard]] Series fip_edge_series(const Topology& topo, const FipMatrix& fip, const std::vector<FaultKind>& channels);
/// Per-node output-line FIP; INPUT nodes are zero.
[[nodiscard]] Series fip_node_labels(const Topology& topo, const FipMatrix& fip, const std::vector<FaultKind>& channels);

/// One ST-Graph window: m feature frames and s label frames.
struct STGraph {
    std::shared_ptr<const Topology> topo;
    FeatureMode mode = FeatureMode::FIP;
    std::size_t m = 0, s = 0, p = 0, q = 0;
    std::size_t window_start = 0;  // 0-based cycle of the first feature frame
    std::vector<double> E;         // m x |edges| x p
    std::vector<double> Y;         // s x n x q

    [[nodiscard]] std::size_t n_nodes() const { return topo->n_nodes(); }
    [[nodiscard]] std::size_t n_edges() const { return topo->edges.size(); }
    [[nodiscard]] double e(std::size_t t, std::size_t edge, std::size_t ch) const {
        return E[(t * n_edges() + edge) * p + ch];
    }
    [[nodiscard]] double y(std::size_t t, std::size_t node, std::size_t ch) const {
        return Y[(t * n_nodes() + node) * q + ch];
    }
};

/// Sliding windows with stride 1: sample k uses cycles k..k+m-1 as input and
/// k+m..k+m+s-1 as labels (0-based).
[[nodiscard]] std::vector<STGraph> make_windows(std::shared_ptr<const Topology> topo, FeatureMode mode,
                                                const Series& features, const Series& labels, std::size_t m,
                                                std::size_t s);

/// Number of windows for `total` cycles; throws if total < m + s.
[[nodiscard]] std::size_t window_count(std::size_t total, std::size_t m, std::size_t s);

/// One JSON-Lines record (no trailing newline).
[[nodiscard]] std::string serialize(const STGraph& sample);
/// Validates shapes and value ranges; errors name the offending field path.
/// Samples parsed against an existing topology share it when equal.
[[nodiscard]] STGraph deserialize(std::string_view line, std::shared_ptr<const Topology> shared = nullptr);

struct ConvertConfig {
    FeatureMode mode = FeatureMode::FIP;
    std::size_t total_cycles = 20;
    std::size_t m = 5;
    std::size_t s = 5;
    std::uint64_t n_patterns = 1000;
    std::uint64_t seed = 1;
    ObservationSet observe;
    std::vector<FaultKind> channels{FaultKind::SA0, FaultKind::SA1};
    SimOptions sim;
};

struct CircuitSamples {
    std::string circuit;
    std::size_t gates = 0;  // combinational gate count, used for split ordering
    std::string split;      // "train", "test" or empty
    std::shared_ptr<const Topology> topo;
    std::vector<STGraph> samples;
};

/// Simulates (unless `labels` is given), derives features and cuts windows.
[[nodiscard]] CircuitSamples convert_circuit(const Circuit& circuit, const ConvertConfig& config,
                                             const FipMatrix* labels = nullptr);

/// TM-mode feature sample with zero labels, used for inference only.
[[nodiscard]] STGraph tm_inference_sample(const Circuit& circuit, std::size_t m, std::size_t s, std::size_t q,
                                          const ObservationSet& observe);

struct Dataset {
    FeatureMode mode = FeatureMode::FIP;
    std::size_t m = 0, s = 0, p = 0, q = 0;
    std::vector<CircuitSamples> circuits;
    nlohmann::json provenance;
};

/// Writes one `<circuit>.jsonl` per circuit plus `manifest.json` into `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Reads a manifest and every sample file it references.
[[nodiscard]] Dataset read_dataset(const std::filesystem::path& manifest_path);

}  // namespace fipgraph
