#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace fipgraph {

/// Dense row-major float64 matrix. Every quantity in the model is 2-D;
/// scalars are 1x1 and row vectors are 1xN.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[nodiscard]] std::string shape_string(const Tensor& t);

struct Parameter {
    Tensor value;
    Tensor grad;
    Tensor m;  // Adam first moment
    Tensor v;  // Adam second moment
    std::uint64_t step = 0;
};

/// Named learnable tensors plus optimizer state, iterated in name order.
class ParamStore {
public:
    /// Adds a parameter initialized uniformly in +-sqrt(6 / (rows + cols)).
    Parameter& add_xavier(const std::string& name, std::size_t rows, std::size_t cols, std::mt19937_64& rng);
    Parameter& add(const std::string& name, Tensor value);

    [[nodiscard]] Parameter& at(const std::string& name);
    [[nodiscard]] const Parameter& at(const std::string& name) const;
    [[nodiscard]] bool contains(const std::string& name) const { return params_.count(name) != 0; }
    [[nodiscard]] std::size_t size() const { return params_.size(); }
    [[nodiscard]] std::size_t scalar_count() const;

    [[nodiscard]] std::map<std::string, Parameter>& entries() { return params_; }
    [[nodiscard]] const std::map<std::string, Parameter>& entries() const { return params_; }

    void zero_grad();

private:
    std::map<std::string, Parameter> params_;
};

struct AdamOptions {
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter from its accumulated gradient.
void adam_step(ParamStore& store, const AdamOptions& options);

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
    [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
};

/// Records forward values and reverse rules. Single-threaded; one tape per forward pass.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Non-differentiable input.
    Var constant(Tensor value);
    /// Leaf bound to a parameter; backward() accumulates into its grad.
    Var param(Parameter& p);
    Var param(ParamStore& store, const std::string& name) { return param(store.at(name)); }

    /// Reverse sweep from a 1x1 loss. Gradients are added to the bound parameters.
    void backward(Var loss);

    [[nodiscard]] const Tensor& value(Var v) const { return nodes_[v.id].value; }
    [[nodiscard]] const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    // Used by op implementations.
    using Backward = std::function<void(Tape&, std::uint32_t self)>;
    Var record(Tensor value, Backward backward);
    Tensor& grad_ref(std::uint32_t id);
    [[nodiscard]] bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
    Var record_with_inputs(Tensor value, std::initializer_list<Var> inputs, Backward backward);
    Var record_with_inputs(Tensor value, const std::vector<Var>& inputs, Backward backward);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

/// Index list used by the graph ops.
using Index = std::vector<std::uint32_t>;

// Primitive ops. Shape mismatches throw ShapeError naming both shapes.
Var matmul(Var a, Var b);
/// Same-shape sum, or `b` a 1xC row added to every row of `a`.
Var add(Var a, Var b);
Var hadamard(Var a, Var b);
/// Column-wise concatenation of same-height blocks.
Var concat(const std::vector<Var>& parts);
Var sigmoid(Var a);
Var relu(Var a);
Var row_softmax(Var a);
/// Per-row (x - mean) / sqrt(var + 1e-5), then * gamma + beta (1xC rows).
Var layer_norm(Var x, Var gamma, Var beta);
Var scale(Var a, double factor);
/// Sum of all entries as 1x1.
Var sum(Var a);
/// Mean squared error over the rows with mask[r] != 0 (all rows if mask empty).
Var mse(Var pred, const Tensor& target, const std::vector<std::uint8_t>& mask = {});

// Graph ops.
/// out[i] = a[idx[i]].
Var gather_rows(Var a, const Index& idx);
/// out[idx[i]] += a[i], out has `rows` rows.
Var scatter_add_rows(Var a, const Index& idx, std::size_t rows);
/// Softmax of each column within groups of rows sharing the same segment id.
Var segment_softmax(Var scores, const Index& segment, std::size_t segments);
/// out[r][h] = dot of head block h of a[r] and b[r]; a and b are R x (heads*k).
Var rowdot_heads(Var a, Var b, std::size_t heads);
/// out[r][block h] = alpha[r][h] * v[r][block h].
Var head_mul(Var alpha, Var v);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Mean of same-shape tensors.
Var mean_of(const std::vector<Var>& parts);

/// Central-difference comparison of analytic parameter gradients.
struct GradCheckOptions {
    double eps = 1e-5;
    double floor = 1e-8;             // absolute floor in the relative-error denominator
    std::size_t probes_per_tensor = 64;  // every entry is probed when the tensor is smaller
    std::uint64_t seed = 1;
};

struct GradCheckResult {
    double max_rel_error = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0;
    double numeric = 0;
    std::size_t probes = 0;
};

using LossFn = std::function<Var(Tape&)>;

[[nodiscard]] GradCheckResult grad_check(const LossFn& loss, ParamStore& store, const GradCheckOptions& options = {});

/// Checkpoint layout: "FIPCKPT1", u64 little-endian header length, JSON header
/// (parameter names/shapes, config, config hash, optional unhashed meta), then
/// little-endian float64 values.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const nlohmann::json& config,
                     const nlohmann::json& meta = {});
/// Loads parameters and returns the stored config. Throws if `expected_hash`
/// is non-empty and differs from the stored hash.
nlohmann::json load_checkpoint(const std::filesystem::path& path, ParamStore& store,
                               const std::string& expected_hash = {}, nlohmann::json* meta = nullptr);
[[nodiscard]] std::string checkpoint_bytes(const ParamStore& store, const nlohmann::json& config,
                                           const nlohmann::json& meta = {});
nlohmann::json parse_checkpoint(const std::string& bytes, ParamStore& store, const std::string& expected_hash = {},
                                nlohmann::json* meta = nullptr);

/// Hash of a canonical JSON dump.
[[nodiscard]] std::string config_hash(const nlohmann::json& config);

}  // namespace fipgraph
