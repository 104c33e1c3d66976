#include "fipgraph/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fipgraph/error.hpp"
#include "fipgraph/io.hpp"
#include "fipgraph/parallel.hpp"

namespace fipgraph {

using nlohmann::json;

std::string_view to_string(SplitStrategy s) { return s == SplitStrategy::Uniform ? "uniform" : "sparse"; }

SplitStrategy split_from_string(std::string_view name) {
    if (name == "uniform") return SplitStrategy::Uniform;
    if (name == "sparse") return SplitStrategy::Sparse;
    throw ConfigError("unknown split '" + std::string(name) + "' (expected uniform or sparse)");
}

Split split_circuits(const std::vector<CircuitSize>& circuits, SplitStrategy strategy) {
    if (circuits.size() < 2) throw ConfigError("splitting needs at least 2 circuits, got " +
                                               std::to_string(circuits.size()));
    std::vector<std::size_t> order(circuits.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = circuits[a];
        const auto& y = circuits[b];
        return x.gates != y.gates ? x.gates < y.gates : x.name < y.name;
    });
    const std::size_t stride = strategy == SplitStrategy::Uniform ? 2 : 3;
    Split split;
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        (pos % stride == 0 ? split.train : split.test).push_back(order[pos]);
    return split;
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
    model.validate();
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"lr", lr},
            {"seed", seed},
            {"split", std::string(to_string(split))},
            {"model", model.to_json()}};
}

TrainResult train_samples(const std::vector<const STGraph*>& samples, const TrainConfig& config) {
    config.validate();
    if (samples.empty()) throw ConfigError("no training samples");
    const auto& mc = config.model;
    std::vector<ModelInput> inputs;
    inputs.reserve(samples.size());
    for (const auto* g : samples) {
        if (g->m != mc.m || g->s != mc.s || g->p != mc.p || g->q != mc.q)
            throw ConfigError("sample " + g->topo->circuit + "@" + std::to_string(g->window_start) +
                              " has shape m=" + std::to_string(g->m) + " s=" + std::to_string(g->s) +
                              " p=" + std::to_string(g->p) + " q=" + std::to_string(g->q) + ", model expects m=" +
                              std::to_string(mc.m) + " s=" + std::to_string(mc.s) + " p=" + std::to_string(mc.p) +
                              " q=" + std::to_string(mc.q));
        inputs.push_back(prepare_input(*g, mc.reverse_edges));
    }

    TrainResult result;
    result.model = Model(mc, config.seed);
    auto& model = result.model;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    AdamOptions adam;
    adam.lr = config.lr;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        for (auto k : order) {
            model.params.zero_grad();
            Tape tape;
            Var l = loss(tape, model, inputs[k]);
            const double v = l.value()(0, 0);
            if (!std::isfinite(v))
                throw Error("non-finite loss on sample " + samples[k]->topo->circuit + "@" +
                            std::to_string(samples[k]->window_start) + " in epoch " + std::to_string(epoch + 1));
            tape.backward(l);
            adam_step(model.params, adam);
            total += v;
        }
        result.epoch_loss.push_back(total / static_cast<double>(samples.size()));
    }
    return result;
}

namespace {

void check_dataset(const Dataset& dataset, const ModelConfig& mc) {
    if (dataset.m != mc.m || dataset.s != mc.s || dataset.p != mc.p || dataset.q != mc.q)
        throw ConfigError("dataset shape m=" + std::to_string(dataset.m) + " s=" + std::to_string(dataset.s) +
                          " p=" + std::to_string(dataset.p) + " q=" + std::to_string(dataset.q) +
                          " does not match the model config");
}

std::vector<CircuitSize> sizes(const Dataset& dataset) {
    std::vector<CircuitSize> out;
    for (const auto& c : dataset.circuits) out.push_back({c.circuit, c.gates});
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double percent_change(double v, double base) { return base == 0 ? 0 : 100.0 * (v - base) / base; }

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
    check_dataset(dataset, config.model);
    const auto split = split_circuits(sizes(dataset), config.split);
    std::vector<const STGraph*> samples;
    for (auto i : split.train)
        for (const auto& g : dataset.circuits[i].samples) samples.push_back(&g);
    auto result = train_samples(samples, config);
    for (auto i : split.train) result.train_circuits.push_back(dataset.circuits[i].circuit);
    for (auto i : split.test) result.test_circuits.push_back(dataset.circuits[i].circuit);
    return result;
}

std::string loss_csv(const std::vector<double>& epoch_loss) {
    std::string out = "epoch,mse\n";
    for (std::size_t e = 0; e < epoch_loss.size(); ++e)
        out += std::to_string(e + 1) + "," + format_double(epoch_loss[e]) + "\n";
    return out;
}

EvalRow EvalTable::average(std::string_view split) const {
    EvalRow avg{"Average", std::string(split.empty() ? "all" : split), 0, 0, 0};
    std::size_t count = 0;
    for (const auto& r : rows) {
        if (!split.empty() && r.split != split) continue;
        avg.rmse += r.rmse;
        avg.mae += r.mae;
        avg.windows += r.windows;
        ++count;
    }
    if (count) {
        avg.rmse /= static_cast<double>(count);
        avg.mae /= static_cast<double>(count);
    }
    return avg;
}

std::string EvalTable::to_csv() const {
    std::string out = "model,circuit,split,windows,rmse,mae\n";
    auto line = [&](const EvalRow& r) {
        out += tag + "," + r.circuit + "," + r.split + "," + std::to_string(r.windows) + "," + format_double(r.rmse) +
               "," + format_double(r.mae) + "\n";
    };
    for (const auto& r : rows) line(r);
    for (const char* s : {"test", "train", ""}) line(average(s));
    return out;
}

json EvalTable::to_json() const {
    json j = {{"model", tag}, {"rows", json::array()}, {"average", json::object()}};
    for (const auto& r : rows)
        j["rows"].push_back({{"circuit", r.circuit}, {"split", r.split}, {"windows", r.windows}, {"rmse", r.rmse},
                             {"mae", r.mae}});
    for (const char* s : {"test", "train", ""}) {
        const auto a = average(s);
        j["average"][a.split] = {{"windows", a.windows}, {"rmse", a.rmse}, {"mae", a.mae}};
    }
    return j;
}

std::string model_tag(FeatureMode mode, std::size_t s, SplitStrategy split) {
    return std::string(mode == FeatureMode::FIP ? "FIP" : "FT") + "-" + std::to_string(s) + "-" +
           (split == SplitStrategy::Uniform ? "U" : "S");
}

EvalTable evaluate(Model& model, const Dataset& dataset, SplitStrategy strategy, std::size_t threads) {
    check_dataset(dataset, model.config);
    const auto split = split_circuits(sizes(dataset), strategy);
    std::vector<std::string> tags(dataset.circuits.size());
    for (auto i : split.train) tags[i] = "train";
    for (auto i : split.test) tags[i] = "test";
    EvalTable table;
    table.tag = model_tag(dataset.mode, dataset.s, strategy);
    table.rows.resize(dataset.circuits.size());
    parallel_for(dataset.circuits.size(), threads, [&](std::size_t i, std::size_t) {
        const auto& c = dataset.circuits[i];
        EvalRow row{c.circuit, tags[i], c.samples.size(), 0, 0};
        for (const auto& g : c.samples) {
            const auto in = prepare_input(g, model.config.reverse_edges);
            const auto m = compute_metrics(in.target, predict(model, in), in.mask);
            row.rmse += m.rmse;
            row.mae += m.mae;
        }
        if (row.windows) {
            row.rmse /= static_cast<double>(row.windows);
            row.mae /= static_cast<double>(row.windows);
        }
        table.rows[i] = std::move(row);
    });
    return table;
}

std::vector<AblationRow> run_ablation(const Dataset& dataset, const TrainConfig& base,
                                      const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
    base.validate();
    const auto& variants = all_variants();
    const std::size_t runs = variants.size() * seeds.size();
    std::vector<EvalRow> results(runs);
    parallel_for(runs, base.threads, [&](std::size_t r, std::size_t) {
        TrainConfig cfg = base;
        cfg.model.variant = variants[r / seeds.size()];
        cfg.seed = seeds[r % seeds.size()];
        auto trained = train(dataset, cfg);
        results[r] = evaluate(trained.model, dataset, cfg.split).average("test");
    });
    std::vector<AblationRow> rows;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        AblationRow row;
        row.variant = variants[v];
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            row.rmse.push_back(results[v * seeds.size() + k].rmse);
            row.mae.push_back(results[v * seeds.size() + k].mae);
        }
        row.median_rmse = median(row.rmse);
        row.median_mae = median(row.mae);
        rows.push_back(std::move(row));
    }
    for (auto& row : rows) {
        row.delta_rmse = percent_change(row.median_rmse, rows.front().median_rmse);
        row.delta_mae = percent_change(row.median_mae, rows.front().median_mae);
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "variant,seeds,rmse,mae,delta_rmse_pct,delta_mae_pct\n";
    for (const auto& r : rows)
        out += std::string(to_string(r.variant)) + "," + std::to_string(r.rmse.size()) + "," +
               format_double(r.median_rmse) + "," + format_double(r.median_mae) + "," + format_double(r.delta_rmse) +
               "," + format_double(r.delta_mae) + "\n";
    return out;
}

}  // namespace fipgraph
