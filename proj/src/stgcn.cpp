#include "fipgraph/stgcn.hpp"

#include <cmath>
#include <random>

#include "fipgraph/error.hpp"

namespace fipgraph {

using nlohmann::json;

namespace {

const std::vector<std::pair<Variant, std::string_view>> kVariantNames{
    {Variant::Full, "full"},
    {Variant::NoTimeEncoding, "no_time_encoding"},
    {Variant::OnlySpatial, "only_spatial"},
    {Variant::OnlyTemporal, "only_temporal"},
    {Variant::MlpDecoder, "mlp_decoder"},
};

bool uses_spatial(Variant v) { return v != Variant::OnlyTemporal; }
bool uses_temporal(Variant v) { return v != Variant::OnlySpatial; }

std::string layer_name(const char* branch, std::size_t layer, const char* weight) {
    return std::string(branch) + std::to_string(layer) + "." + weight;
}

Var P(Tape& tape, Model& model, const std::string& name) { return tape.param(model.params, name); }

}  // namespace

std::string_view to_string(Variant v) {
    for (const auto& [k, name] : kVariantNames)
        if (k == v) return name;
    return "?";
}

Variant variant_from_string(std::string_view name) {
    for (const auto& [k, n] : kVariantNames)
        if (n == name) return k;
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (expected full, no_time_encoding, only_spatial, only_temporal or mlp_decoder)");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::Full, Variant::NoTimeEncoding, Variant::OnlySpatial,
                                        Variant::OnlyTemporal, Variant::MlpDecoder};
    return v;
}

void ModelConfig::validate() const {
    if (d == 0 || heads == 0) throw ConfigError("hidden width and head count must be positive");
    if (d % heads != 0)
        throw ConfigError("hidden width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                          " heads");
    if (m == 0 || s == 0) throw ConfigError("input and output cycle counts must be at least 1");
    if (p == 0 || q == 0) throw ConfigError("feature and label channel counts must be at least 1");
    if (variant != Variant::NoTimeEncoding && time_dim == 0) throw ConfigError("time embedding width must be positive");
    if (uses_spatial(variant) && spatial_layers == 0) throw ConfigError("variant needs at least one spatial layer");
    if (uses_temporal(variant) && temporal_layers == 0) throw ConfigError("variant needs at least one temporal layer");
}

std::size_t ModelConfig::edge_channels() const { return reverse_edges ? p + 1 : p; }

std::size_t ModelConfig::edge_width() const {
    return variant == Variant::NoTimeEncoding ? edge_channels() : edge_channels() + time_dim;
}

json ModelConfig::to_json() const {
    return {{"d", d},
            {"heads", heads},
            {"spatial_layers", spatial_layers},
            {"temporal_layers", temporal_layers},
            {"time_dim", time_dim},
            {"m", m},
            {"s", s},
            {"p", p},
            {"q", q},
            {"variant", std::string(to_string(variant))},
            {"reverse_edges", reverse_edges}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    try {
        c.d = j.at("d").get<std::size_t>();
        c.heads = j.at("heads").get<std::size_t>();
        c.spatial_layers = j.at("spatial_layers").get<std::size_t>();
        c.temporal_layers = j.at("temporal_layers").get<std::size_t>();
        c.time_dim = j.at("time_dim").get<std::size_t>();
        c.m = j.at("m").get<std::size_t>();
        c.s = j.at("s").get<std::size_t>();
        c.p = j.at("p").get<std::size_t>();
        c.q = j.at("q").get<std::size_t>();
        c.variant = variant_from_string(j.at("variant").get<std::string>());
        c.reverse_edges = j.value("reverse_edges", false);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelInput prepare_input(const STGraph& sample, bool reverse_edges) {
    ModelInput in;
    const auto& topo = *sample.topo;
    in.n = topo.n_nodes();
    const auto n = static_cast<Eigen::Index>(in.n);
    in.onehot = Tensor::Zero(n, kNodeKinds);
    in.neighbor_onehot = Tensor::Zero(n, kNodeKinds);
    in.mask.resize(in.n);
    for (std::size_t i = 0; i < in.n; ++i) {
        in.onehot(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(topo.kinds[i])) = 1.0;
        in.mask[i] = topo.kinds[i] == GateKind::Input ? 0 : 1;
    }
    for (const auto& [src, dst] : topo.edges) {
        in.src.push_back(src);
        in.dst.push_back(dst);
        in.neighbor_onehot(dst, static_cast<Eigen::Index>(topo.kinds[src])) += 1.0;
    }
    const auto edges = static_cast<Eigen::Index>(topo.edges.size());
    const auto p = static_cast<Eigen::Index>(sample.p);
    if (reverse_edges) {
        // Reversed copies follow the forward edges and carry the same driver-line features.
        const Index src = in.src;
        in.src.insert(in.src.end(), in.dst.begin(), in.dst.end());
        in.dst.insert(in.dst.end(), src.begin(), src.end());
    }
    for (std::size_t t = 0; t < sample.m; ++t) {
        Tensor f = Tensor::Zero(reverse_edges ? 2 * edges : edges, reverse_edges ? p + 1 : p);
        for (Eigen::Index e = 0; e < edges; ++e)
            for (Eigen::Index c = 0; c < p; ++c)
                f(e, c) = sample.e(t, static_cast<std::size_t>(e), static_cast<std::size_t>(c));
        if (reverse_edges) {
            f.bottomLeftCorner(edges, p) = f.topLeftCorner(edges, p);
            f.bottomRightCorner(edges, 1).setOnes();
        }
        in.frames.push_back(std::move(f));
    }
    in.target = Tensor(n, static_cast<Eigen::Index>(sample.s * sample.q));
    for (std::size_t t = 0; t < sample.s; ++t)
        for (std::size_t i = 0; i < in.n; ++i)
            for (std::size_t c = 0; c < sample.q; ++c)
                in.target(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t * sample.q + c)) =
                    sample.y(t, i, c);
    return in;
}

std::vector<double> to_label_layout(const Tensor& yhat, std::size_t s, std::size_t q) {
    if (static_cast<std::size_t>(yhat.cols()) != s * q)
        throw ShapeError("prediction " + shape_string(yhat) + " does not hold " + std::to_string(s) + " cycles of " +
                         std::to_string(q) + " channels");
    const auto n = static_cast<std::size_t>(yhat.rows());
    std::vector<double> out(s * n * q);
    for (std::size_t t = 0; t < s; ++t)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < q; ++c)
                out[(t * n + i) * q + c] = yhat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t * q + c));
    return out;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
    config.validate();
    std::mt19937_64 rng(seed);
    const auto d = config.d;
    const auto ew = config.edge_width();
    auto norm = [&](const std::string& prefix) {
        params.add(prefix + ".gamma", Tensor::Ones(1, static_cast<Eigen::Index>(d)));
        params.add(prefix + ".beta", Tensor::Zero(1, static_cast<Eigen::Index>(d)));
    };
    params.add_xavier("emb.W1", kNodeKinds, d, rng);
    params.add_xavier("emb.W2", kNodeKinds, d, rng);
    if (config.variant != Variant::NoTimeEncoding) params.add_xavier("time.table", config.m, config.time_dim, rng);
    if (uses_spatial(config.variant))
        for (std::size_t l = 0; l < config.spatial_layers; ++l) {
            for (const char* w : {"W1", "W2h", "W3h", "W4h"}) params.add_xavier(layer_name("spatial", l, w), d, d, rng);
            for (const char* w : {"W2e", "W3e", "W4e"}) params.add_xavier(layer_name("spatial", l, w), ew, d, rng);
            norm("spatial" + std::to_string(l));
        }
    if (uses_temporal(config.variant))
        for (std::size_t l = 0; l < config.temporal_layers; ++l) {
            for (const char* w : {"W1", "W2", "W3", "W4"}) params.add_xavier(layer_name("temporal", l, w), d, d, rng);
            params.add_xavier(layer_name("temporal", l, "W5"), ew, d, rng);
            norm("temporal" + std::to_string(l));
        }
    const auto out = config.s * config.q;
    if (config.variant == Variant::MlpDecoder) {
        params.add_xavier("mlp.W1", d, d, rng);
        params.add("mlp.b1", Tensor::Zero(1, static_cast<Eigen::Index>(d)));
        params.add_xavier("mlp.W2", d, d, rng);
        params.add("mlp.b2", Tensor::Zero(1, static_cast<Eigen::Index>(d)));
        params.add_xavier("mlp.W3", d, out, rng);
        params.add("mlp.b3", Tensor::Zero(1, static_cast<Eigen::Index>(out)));
    } else {
        for (const char* w : {"dec.W1", "dec.W2", "dec.W3"}) params.add_xavier(w, d, d, rng);
        params.add_xavier("dec.W4", d, out, rng);
        params.add("dec.b", Tensor::Zero(1, static_cast<Eigen::Index>(out)));
    }
}

Var embed(Tape& tape, Model& model, const ModelInput& in) {
    return add(matmul(tape.constant(in.onehot), P(tape, model, "emb.W1")),
               matmul(tape.constant(in.neighbor_onehot), P(tape, model, "emb.W2")));
}

Var time_encode(Tape& tape, Model& model, const Tensor& edges, std::size_t t) {
    const auto& cfg = model.config;
    if (t >= cfg.m)
        throw ShapeError("time index " + std::to_string(t) + " outside " + std::to_string(cfg.m) + " input cycles");
    if (static_cast<std::size_t>(edges.cols()) != cfg.edge_channels())
        throw ShapeError("edge features " + shape_string(edges) + " expected " + std::to_string(cfg.edge_channels()) + " channels");
    Var e = tape.constant(edges);
    if (cfg.variant == Variant::NoTimeEncoding) return e;
    const Index rows(static_cast<std::size_t>(edges.rows()), static_cast<std::uint32_t>(t));
    return concat({e, gather_rows(P(tape, model, "time.table"), rows)});
}

Var spatial_layer(Tape& tape, Model& model, std::size_t layer, Var h, Var e, const ModelInput& in,
                  LayerProbe* probe) {
    auto w = [&](const char* name) { return P(tape, model, layer_name("spatial", layer, name)); };
    Var gate = sigmoid(add(add(gather_rows(matmul(h, w("W2h")), in.dst), gather_rows(matmul(h, w("W3h")), in.src)),
                           add(matmul(e, w("W2e")), matmul(e, w("W3e")))));
    Var msg = hadamard(gate, add(gather_rows(matmul(h, w("W4h")), in.src), matmul(e, w("W4e"))));
    Var pre = add(matmul(h, w("W1")), scatter_add_rows(msg, in.dst, in.n));
    if (probe) {
        probe->gate = gate.value();
        probe->pre_residual = pre.value();
    }
    return layer_norm(add(pre, h), w("gamma"), w("beta"));
}

Var temporal_layer(Tape& tape, Model& model, std::size_t layer, Var h, Var e, const ModelInput& in,
                   LayerProbe* probe) {
    const auto& cfg = model.config;
    auto w = [&](const char* name) { return P(tape, model, layer_name("temporal", layer, name)); };
    Var edge_term = matmul(e, w("W5"));
    Var key = add(gather_rows(matmul(h, w("W4")), in.src), edge_term);
    Var score = scale(rowdot_heads(gather_rows(matmul(h, w("W3")), in.dst), key, cfg.heads),
                      1.0 / std::sqrt(static_cast<double>(cfg.d / cfg.heads)));
    Var alpha = segment_softmax(score, in.dst, in.n);
    Var value = add(gather_rows(matmul(h, w("W2")), in.src), edge_term);
    Var pre = add(matmul(h, w("W1")), scatter_add_rows(head_mul(alpha, value), in.dst, in.n));
    if (probe) {
        probe->attention = alpha.value();
        probe->pre_residual = pre.value();
    }
    return layer_norm(add(pre, h), w("gamma"), w("beta"));
}

std::vector<Var> fuse(const std::vector<Var>& spatial, const std::vector<Var>& temporal) {
    if (spatial.empty()) return temporal;
    if (temporal.empty()) return spatial;
    if (spatial.size() != temporal.size())
        throw ShapeError("fuse: " + std::to_string(spatial.size()) + " spatial frames vs " +
                         std::to_string(temporal.size()) + " temporal frames");
    std::vector<Var> out;
    out.reserve(spatial.size());
    for (std::size_t t = 0; t < spatial.size(); ++t) out.push_back(add(spatial[t], temporal[t]));
    return out;
}

Var decode(Tape& tape, Model& model, const std::vector<Var>& frames, Tensor* frame_attention) {
    const auto& cfg = model.config;
    if (frames.size() != cfg.m)
        throw ShapeError("decoder expects " + std::to_string(cfg.m) + " frames, got " + std::to_string(frames.size()));
    if (cfg.variant == Variant::MlpDecoder) {
        Var pooled = mean_of(frames);
        Var h1 = relu(add(matmul(pooled, P(tape, model, "mlp.W1")), P(tape, model, "mlp.b1")));
        Var h2 = relu(add(matmul(h1, P(tape, model, "mlp.W2")), P(tape, model, "mlp.b2")));
        return sigmoid(add(matmul(h2, P(tape, model, "mlp.W3")), P(tape, model, "mlp.b3")));
    }
    Var W1 = P(tape, model, "dec.W1"), W2 = P(tape, model, "dec.W2"), W3 = P(tape, model, "dec.W3");
    std::vector<Var> query, key, value;
    for (const auto& f : frames) {
        query.push_back(matmul(f, W2));
        key.push_back(matmul(f, W3));
        value.push_back(matmul(f, W1));
    }
    const double inv = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    const auto m = frames.size();
    const auto n = frames.front().rows();
    if (frame_attention) frame_attention->resize(static_cast<Eigen::Index>(m) * n, static_cast<Eigen::Index>(m));
    std::vector<Var> attended;
    for (std::size_t f = 0; f < m; ++f) {
        std::vector<Var> cols;
        for (std::size_t g = 0; g < m; ++g) cols.push_back(rowdot_heads(query[f], key[g], 1));
        Var a = row_softmax(scale(concat(cols), inv));
        if (frame_attention) frame_attention->middleRows(static_cast<Eigen::Index>(f) * n, n) = a.value();
        Var acc = head_mul(slice_cols(a, 0, 1), value[0]);
        for (std::size_t g = 1; g < m; ++g) acc = add(acc, head_mul(slice_cols(a, g, 1), value[g]));
        attended.push_back(acc);
    }
    return sigmoid(add(matmul(mean_of(attended), P(tape, model, "dec.W4")), P(tape, model, "dec.b")));
}

Var forward(Tape& tape, Model& model, const ModelInput& in, ForwardProbe* probe) {
    const auto& cfg = model.config;
    if (in.frames.size() != cfg.m)
        throw ShapeError("sample has " + std::to_string(in.frames.size()) + " input cycles, model expects " +
                         std::to_string(cfg.m));
    if (static_cast<std::size_t>(in.target.cols()) != cfg.s * cfg.q)
        throw ShapeError("sample labels " + shape_string(in.target) + " do not match " + std::to_string(cfg.s) +
                         " output cycles x " + std::to_string(cfg.q) + " channels");
    Var hse = embed(tape, model, in);
    std::vector<Var> spatial, temporal;
    for (std::size_t t = 0; t < cfg.m; ++t) {
        Var e = time_encode(tape, model, in.frames[t], t);
        if (uses_spatial(cfg.variant)) {
            Var h = hse;
            for (std::size_t l = 0; l < cfg.spatial_layers; ++l) {
                LayerProbe* lp = nullptr;
                if (probe) lp = &probe->spatial.emplace_back();
                h = spatial_layer(tape, model, l, h, e, in, lp);
            }
            spatial.push_back(h);
        }
        if (uses_temporal(cfg.variant)) {
            Var h = hse;
            for (std::size_t l = 0; l < cfg.temporal_layers; ++l) {
                LayerProbe* lp = nullptr;
                if (probe) lp = &probe->temporal.emplace_back();
                h = temporal_layer(tape, model, l, h, e, in, lp);
            }
            temporal.push_back(h);
        }
    }
    return decode(tape, model, fuse(spatial, temporal));
}

Var loss(Tape& tape, Model& model, const ModelInput& in) {
    return mse(forward(tape, model, in), in.target, in.mask);
}

Tensor predict(Model& model, const ModelInput& in) {
    Tape tape;
    return forward(tape, model, in).value();
}

Metrics compute_metrics(const Tensor& y, const Tensor& yhat, const std::vector<std::uint8_t>& mask) {
    if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
        throw ShapeError("metrics: labels " + shape_string(y) + " vs prediction " + shape_string(yhat));
    if (!mask.empty() && mask.size() != static_cast<std::size_t>(y.rows()))
        throw ShapeError("metrics: mask has " + std::to_string(mask.size()) + " rows, labels " + shape_string(y));
    double se = 0, ae = 0;
    std::size_t count = 0;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        if (!mask.empty() && !mask[static_cast<std::size_t>(r)]) continue;
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            const double diff = yhat(r, c) - y(r, c);
            se += diff * diff;
            ae += std::abs(diff);
            ++count;
        }
    }
    if (count == 0) throw ShapeError("metrics: no unmasked entries");
    Metrics m;
    m.mse = se / static_cast<double>(count);
    m.rmse = std::sqrt(m.mse);
    m.mae = ae / static_cast<double>(count);
    return m;
}

void save_model(const std::filesystem::path& path, const Model& model, const json& meta) {
    save_checkpoint(path, model.params, model.config.to_json(), meta);
}

Model load_model(const std::filesystem::path& path, const ModelConfig* expected, json* meta) {
    ParamStore store;
    const json cfg = load_checkpoint(path, store, expected ? config_hash(expected->to_json()) : std::string{}, meta);
    Model model(ModelConfig::from_json(cfg), 0);
    const auto& want = model.params.entries();
    const auto& got = store.entries();
    if (want.size() != got.size()) throw SchemaError("checkpoint parameter set does not match its model config");
    for (const auto& [name, p] : want) {
        auto it = got.find(name);
        if (it == got.end()) throw SchemaError("checkpoint lacks parameter '" + name + "'");
        if (it->second.value.rows() != p.value.rows() || it->second.value.cols() != p.value.cols())
            throw SchemaError("checkpoint parameter '" + name + "' has shape " + shape_string(it->second.value) +
                              ", config implies " + shape_string(p.value));
    }
    model.params = std::move(store);
    return model;
}

}  // namespace fipgraph
