#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fipgraph/autodiff.hpp"
#include "fipgraph/stgraph.hpp"

namespace fipgraph {

enum class Variant { Full, NoTimeEncoding, OnlySpatial, OnlyTemporal, MlpDecoder };

[[nodiscard]] std::string_view to_string(Variant v);
[[nodiscard]] Variant variant_from_string(std::string_view name);
[[nodiscard]] const std::vector<Variant>& all_variants();

inline constexpr std::size_t kNodeKinds = kGateKindCount;

struct ModelConfig {
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t spatial_layers = 2;
    std::size_t temporal_layers = 2;
    std::size_t time_dim = 8;
    std::size_t m = 5, s = 5, p = 2, q = 2;
    Variant variant = Variant::Full;
    /// Also aggregate over reversed edges, marked by an extra 0/1 feature channel,
    /// so a node sees its own line's features from its fanout edges.
    bool reverse_edges = false;

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;
    /// Edge feature channels fed to the model: p, plus the direction flag.
    [[nodiscard]] std::size_t edge_channels() const;
    /// Width of an edge feature after time encoding.
    [[nodiscard]] std::size_t edge_width() const;
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static ModelConfig from_json(const nlohmann::json& j);
};

/// Tensors derived from one STGraph window.
struct ModelInput {
    std::size_t n = 0;
    Tensor onehot;              // n x 9
    Tensor neighbor_onehot;     // n x 9, sum of in-neighbor one-hots
    Index src, dst;             // per edge; reversed copies follow when enabled
    std::vector<Tensor> frames; // m tensors of |E| x p
    Tensor target;              // n x (s*q), column t*q + c
    std::vector<std::uint8_t> mask;  // 1 for non-INPUT nodes
};

[[nodiscard]] ModelInput prepare_input(const STGraph& sample, bool reverse_edges = false);

/// Converts an n x (s*q) prediction to the STGraph label layout s x n x q.
[[nodiscard]] std::vector<double> to_label_layout(const Tensor& yhat, std::size_t s, std::size_t q);

struct Model {
    ModelConfig config;
    ParamStore params;

    Model() = default;
    /// Xavier-initialized weights, unit layer-norm gains, zero biases.
    Model(const ModelConfig& config, std::uint64_t seed);
};

/// Intermediate values of one layer, for inspection.
struct LayerProbe {
    Tensor gate;          // spatial: |E| x d
    Tensor attention;     // temporal: |E| x heads
    Tensor pre_residual;  // n x d, before residual and normalization
};

Var embed(Tape& tape, Model& model, const ModelInput& in);
Var time_encode(Tape& tape, Model& model, const Tensor& edges, std::size_t t);
Var spatial_layer(Tape& tape, Model& model, std::size_t layer, Var h, Var e, const ModelInput& in,
                  LayerProbe* probe = nullptr);
Var temporal_layer(Tape& tape, Model& model, std::size_t layer, Var h, Var e, const ModelInput& in,
                   LayerProbe* probe = nullptr);
[[nodiscard]] std::vector<Var> fuse(const std::vector<Var>& spatial, const std::vector<Var>& temporal);
/// Frame self-attention, mean pooling and sigmoid head. Returns n x (s*q).
Var decode(Tape& tape, Model& model, const std::vector<Var>& frames, Tensor* frame_attention = nullptr);

struct ForwardProbe {
    std::vector<LayerProbe> spatial;   // frame-major, spatial_layers per frame
    std::vector<LayerProbe> temporal;  // frame-major, temporal_layers per frame
};

Var forward(Tape& tape, Model& model, const ModelInput& in, ForwardProbe* probe = nullptr);
/// Masked mean squared error of forward() against the input's target.
Var loss(Tape& tape, Model& model, const ModelInput& in);
[[nodiscard]] Tensor predict(Model& model, const ModelInput& in);

struct Metrics {
    double mse = 0, rmse = 0, mae = 0;
};

/// Averages over every unmasked row and every column; empty mask keeps all rows.
[[nodiscard]] Metrics compute_metrics(const Tensor& y, const Tensor& yhat, const std::vector<std::uint8_t>& mask = {});

/// `meta` is stored unhashed next to the config (e.g. a provenance record).
void save_model(const std::filesystem::path& path, const Model& model, const nlohmann::json& meta = {});
/// Restores a model. When `expected` is given its hash must match the stored config.
[[nodiscard]] Model load_model(const std::filesystem::path& path, const ModelConfig* expected = nullptr,
                               nlohmann::json* meta = nullptr);

}  // namespace fipgraph
