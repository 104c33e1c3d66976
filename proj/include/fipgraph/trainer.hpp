#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fipgraph/stgcn.hpp"
#include "fipgraph/stgraph.hpp"

namespace fipgraph {

enum class SplitStrategy { Uniform, Sparse };

[[nodiscard]] std::string_view to_string(SplitStrategy s);
[[nodiscard]] SplitStrategy split_from_string(std::string_view name);

struct CircuitSize {
    std::string name;
    std::size_t gates = 0;
};

/// Indices into the input list.
struct Split {
    std::vector<std::size_t> train, test;
};

/// Orders circuits by gate count (ties by name); uniform trains on positions
/// 0, 2, 4, ... and sparse on 0, 3, 6, ...
[[nodiscard]] Split split_circuits(const std::vector<CircuitSize>& circuits, SplitStrategy strategy);

struct TrainConfig {
    std::size_t epochs = 200;
    double lr = 0.05;
    std::uint64_t seed = 1;
    SplitStrategy split = SplitStrategy::Uniform;
    ModelConfig model;
    std::size_t threads = 1;  // evaluation and ablation workers

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

struct TrainResult {
    Model model;
    std::vector<double> epoch_loss;  // mean per-sample loss before each update, one per epoch
    std::vector<std::string> train_circuits, test_circuits;
};

/// Per-sample Adam over the given samples in a seeded shuffled order.
[[nodiscard]] TrainResult train_samples(const std::vector<const STGraph*>& samples, const TrainConfig& config);
/// Splits the dataset and trains on the training circuits.
[[nodiscard]] TrainResult train(const Dataset& dataset, const TrainConfig& config);

/// CSV `epoch,mse` with 1-based epochs.
[[nodiscard]] std::string loss_csv(const std::vector<double>& epoch_loss);

struct EvalRow {
    std::string circuit;
    std::string split;  // "train" or "test"
    std::size_t windows = 0;
    double rmse = 0, mae = 0;
};

struct EvalTable {
    std::string tag;  // e.g. FIP-5-U
    std::vector<EvalRow> rows;

    /// Arithmetic mean over rows with the given split tag (all rows if empty).
    [[nodiscard]] EvalRow average(std::string_view split = {}) const;
    /// Rows followed by Average rows for test, train and all.
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

[[nodiscard]] std::string model_tag(FeatureMode mode, std::size_t s, SplitStrategy split);

/// Per-circuit RMSE/MAE averaged over each circuit's windows, rows tagged by the split.
[[nodiscard]] EvalTable evaluate(Model& model, const Dataset& dataset, SplitStrategy split, std::size_t threads = 1);

struct AblationRow {
    Variant variant = Variant::Full;
    std::vector<double> rmse, mae;  // test averages, one per seed
    double median_rmse = 0, median_mae = 0;
    double delta_rmse = 0, delta_mae = 0;  // percent change of the medians vs full
};

/// Trains and evaluates every variant for every seed under the same split.
[[nodiscard]] std::vector<AblationRow> run_ablation(const Dataset& dataset, const TrainConfig& base,
                                                   const std::vector<std::uint64_t>& seeds);
[[nodiscard]] std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace fipgraph
