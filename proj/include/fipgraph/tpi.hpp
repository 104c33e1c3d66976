#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fipgraph/fault_sim.hpp"
#include "fipgraph/netlist.hpp"
#include "fipgraph/stgcn.hpp"

namespace fipgraph {

/// Predicted FIP per line, fault kind and cycle.
struct FipPrediction {
    std::size_t n_lines = 0, n_kinds = 0, n_cycles = 0;
    std::vector<double> values;  // [line][kind][cycle]

    [[nodiscard]] double at(LineId line, std::size_t kind, std::size_t cycle) const {
        return values[(static_cast<std::size_t>(line) * n_kinds + kind) * n_cycles + cycle];
    }
    [[nodiscard]] std::span<const double> curve(LineId line, std::size_t kind) const {
        return {values.data() + (static_cast<std::size_t>(line) * n_kinds + kind) * n_cycles, n_cycles};
    }
};

/// Maps an observation set to FIP predictions for every line of the circuit.
using FipPredictor = std::function<FipPrediction(const ObservationSet&)>;

struct OracleOptions {
    std::vector<FaultKind> kinds{FaultKind::SA0, FaultKind::SA1};
    std::size_t n_cycles = 10;
    std::uint64_t n_patterns = 1000;
    std::uint64_t seed = 1;
    bool exhaustive = false;
    SimOptions sim;
};

/// Fault simulation as the predictor.
[[nodiscard]] FipPredictor oracle_predictor(const Circuit& circuit, const OracleOptions& options);
/// TM-mode model inference as the predictor; predicts the model's s output cycles.
[[nodiscard]] FipPredictor model_predictor(const Circuit& circuit, Model& model);

struct TpiConfig {
    double budget = 0.02;  // fraction of DFFs
    bool min_one = true;   // at least one point when the fraction rounds to zero
    double theta_lo = 0.1;
    double theta_hi = 0.5;
    std::size_t k = 4;  // early window, in cycles
    std::size_t random_seeds = 10;
    std::uint64_t seed = 1;  // first random-baseline seed
    bool observe_q = false;  // observe the flip-flop output instead of its D line
    ObservationSet base;     // observation points present before insertion

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Early mean below theta_lo over cycles 1..k and late max at least theta_hi.
[[nodiscard]] bool is_cycle_sensitive(std::span<const double> curve, const TpiConfig& config);

/// Cycle-sensitive faults among non-input lines, sorted by (line, kind index).
[[nodiscard]] std::vector<std::pair<LineId, std::size_t>> cycle_sensitive_set(const Circuit& circuit,
                                                                              const FipPrediction& prediction,
                                                                              const TpiConfig& config);

/// Per-cycle mean FIP over non-input lines, channels averaged.
[[nodiscard]] std::vector<double> fip_report(const Circuit& circuit, const FipPrediction& prediction);

/// max(1, floor(budget * dffs)) (or without the minimum), capped at the DFF count.
[[nodiscard]] std::size_t budget_points(const TpiConfig& config, std::size_t dffs);

struct Selection {
    std::vector<GateId> dffs;          // in selection order
    std::vector<std::size_t> counts;   // cycle-sensitive count before and after each selection
    std::vector<double> curve;         // average FIP with every selected point
};

struct TpiReport {
    std::size_t budget = 0;
    std::vector<double> before;  // average FIP without new points
    Selection greedy;
    std::vector<std::uint64_t> seeds;
    std::vector<Selection> random;  // one per seed

    [[nodiscard]] std::vector<double> random_mean() const;
    [[nodiscard]] std::vector<double> random_std() const;
    /// Mean over seeds of (count before - count after).
    [[nodiscard]] double random_mean_reduction() const;
    [[nodiscard]] nlohmann::json to_json(const Circuit& circuit) const;
    /// CSV `cycle,before,greedy,random_mean,random_std`, cycles 1-based.
    [[nodiscard]] std::string to_csv() const;
};

/// Observation set with the given flip-flops added.
[[nodiscard]] ObservationSet with_points(const Circuit& circuit, const TpiConfig& config,
                                         std::span<const GateId> dffs);

/// Greedy selection up to the budget; stops early when no candidate lowers the count.
[[nodiscard]] Selection greedy_select(const Circuit& circuit, const FipPredictor& predictor, const TpiConfig& config);
/// `count` flip-flops drawn uniformly without replacement.
[[nodiscard]] Selection random_baseline(const Circuit& circuit, const FipPredictor& predictor, const TpiConfig& config,
                                        std::uint64_t seed, std::size_t count);
/// Greedy selection plus a random baseline per seed with the same number of points.
[[nodiscard]] TpiReport run_tpi(const Circuit& circuit, const FipPredictor& predictor, const TpiConfig& config);

}  // namespace fipgraph
