#include "fipgraph/tpi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fipgraph/error.hpp"
#include "fipgraph/io.hpp"
#include "fipgraph/stgraph.hpp"

namespace fipgraph {

using nlohmann::json;

FipPredictor oracle_predictor(const Circuit& circuit, const OracleOptions& options) {
    if (options.kinds.empty()) throw ConfigError("oracle needs at least one fault kind");
    const auto pis = circuit.primary_inputs().size();
    const PatternSet patterns = options.exhaustive
                                    ? PatternSet::exhaustive(options.n_cycles, pis)
                                    : PatternSet::random(options.seed, options.n_patterns, options.n_cycles, pis);
    return [&circuit, options, patterns](const ObservationSet& observe) {
        const auto fip = build_fip_matrix(circuit, options.kinds, patterns, observe, options.sim);
        FipPrediction p{fip.n_lines(), options.kinds.size(), fip.n_cycles(), {}};
        p.values.reserve(p.n_lines * p.n_kinds * p.n_cycles);
        for (LineId l = 0; l < p.n_lines; ++l)
            for (std::size_t k = 0; k < p.n_kinds; ++k)
                for (std::size_t t = 0; t < p.n_cycles; ++t) p.values.push_back(fip.fip(l, k, t));
        return p;
    };
}

FipPredictor model_predictor(const Circuit& circuit, Model& model) {
    const auto& cfg = model.config;
    if (cfg.p != kTmChannels)
        throw ConfigError("model predictor needs a TM-mode model (" + std::to_string(kTmChannels) +
                          " feature channels), got p=" + std::to_string(cfg.p));
    return [&circuit, &model](const ObservationSet& observe) {
        const auto& c = model.config;
        const auto in = prepare_input(tm_inference_sample(circuit, c.m, c.s, c.q, observe), c.reverse_edges);
        const Tensor y = predict(model, in);
        FipPrediction p{circuit.size(), c.q, c.s, std::vector<double>(circuit.size() * c.q * c.s)};
        for (std::size_t l = 0; l < p.n_lines; ++l)
            for (std::size_t k = 0; k < c.q; ++k)
                for (std::size_t t = 0; t < c.s; ++t)
                    p.values[(l * c.q + k) * c.s + t] =
                        y(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(t * c.q + k));
        return p;
    };
}

void TpiConfig::validate() const {
    if (!(theta_lo >= 0 && theta_lo < theta_hi && theta_hi <= 1))
        throw ConfigError("thresholds must satisfy 0 <= theta_lo < theta_hi <= 1");
    if (!(budget >= 0 && budget <= 1)) throw ConfigError("budget must be a fraction in [0, 1]");
    if (k == 0) throw ConfigError("early window must be at least 1 cycle");
}

json TpiConfig::to_json() const {
    return {{"budget", budget},   {"min_one", min_one},           {"theta_lo", theta_lo},
            {"theta_hi", theta_hi}, {"k", k},                     {"random_seeds", random_seeds},
            {"seed", seed},       {"observe", observe_q ? "q" : "d"}};
}

bool is_cycle_sensitive(std::span<const double> curve, const TpiConfig& config) {
    if (curve.size() < config.k + 1)
        throw ConfigError("FIP curve covers " + std::to_string(curve.size()) + " cycles, needs at least " +
                          std::to_string(config.k + 1));
    const double early = std::accumulate(curve.begin(), curve.begin() + static_cast<long>(config.k), 0.0) /
                         static_cast<double>(config.k);
    const double late = *std::max_element(curve.begin() + static_cast<long>(config.k), curve.end());
    return early < config.theta_lo && late >= config.theta_hi;
}

std::vector<std::pair<LineId, std::size_t>> cycle_sensitive_set(const Circuit& circuit,
                                                                const FipPrediction& prediction,
                                                                const TpiConfig& config) {
    if (prediction.n_lines != circuit.size())
        throw ShapeError("prediction covers " + std::to_string(prediction.n_lines) + " lines, circuit has " +
                         std::to_string(circuit.size()));
    std::vector<std::pair<LineId, std::size_t>> out;
    for (LineId l = 0; l < prediction.n_lines; ++l) {
        if (circuit.gate(l).kind == GateKind::Input) continue;
        for (std::size_t k = 0; k < prediction.n_kinds; ++k)
            if (is_cycle_sensitive(prediction.curve(l, k), config)) out.emplace_back(l, k);
    }
    return out;
}

std::vector<double> fip_report(const Circuit& circuit, const FipPrediction& prediction) {
    std::vector<double> curve(prediction.n_cycles, 0.0);
    std::size_t count = 0;
    for (LineId l = 0; l < prediction.n_lines; ++l) {
        if (circuit.gate(l).kind == GateKind::Input) continue;
        for (std::size_t k = 0; k < prediction.n_kinds; ++k) {
            for (std::size_t t = 0; t < prediction.n_cycles; ++t) curve[t] += prediction.at(l, k, t);
            ++count;
        }
    }
    if (count)
        for (auto& v : curve) v /= static_cast<double>(count);
    return curve;
}

std::size_t budget_points(const TpiConfig& config, std::size_t dffs) {
    auto n = static_cast<std::size_t>(std::floor(config.budget * static_cast<double>(dffs)));
    if (config.min_one) n = std::max<std::size_t>(n, 1);
    return std::min(n, dffs);
}

ObservationSet with_points(const Circuit& circuit, const TpiConfig& config, std::span<const GateId> dffs) {
    ObservationSet obs = config.base;
    for (auto g : dffs) obs.extra.push_back(config.observe_q ? g : circuit.dff_input(g));
    return obs;
}

namespace {

struct Evaluation {
    std::size_t count = 0;
    std::vector<double> curve;
};

Evaluation evaluate_points(const Circuit& circuit, const FipPredictor& predictor, const TpiConfig& config,
                           std::span<const GateId> dffs) {
    const auto p = predictor(with_points(circuit, config, dffs));
    return {cycle_sensitive_set(circuit, p, config).size(), fip_report(circuit, p)};
}

void require_dffs(const Circuit& circuit) {
    if (circuit.dffs().empty()) throw ConfigError("circuit '" + circuit.name() + "' has no flip-flops");
}

}  // namespace

Selection greedy_select(const Circuit& circuit, const FipPredictor& predictor, const TpiConfig& config) {
    config.validate();
    require_dffs(circuit);
    const auto budget = budget_points(config, circuit.dffs().size());
    std::vector<GateId> candidates(circuit.dffs().begin(), circuit.dffs().end());
    std::sort(candidates.begin(), candidates.end());

    Selection sel;
    auto current = evaluate_points(circuit, predictor, config, {});
    sel.counts.push_back(current.count);
    sel.curve = current.curve;
    while (sel.dffs.size() < budget) {
        std::optional<GateId> best;
        Evaluation best_eval;
        for (auto g : candidates) {
            if (std::find(sel.dffs.begin(), sel.dffs.end(), g) != sel.dffs.end()) continue;
            auto trial = sel.dffs;
            trial.push_back(g);
            auto e = evaluate_points(circuit, predictor, config, trial);
            if (!best || e.count < best_eval.count) {
                best = g;
                best_eval = std::move(e);
            }
        }
        if (!best || best_eval.count >= current.count) break;
        sel.dffs.push_back(*best);
        sel.counts.push_back(best_eval.count);
        sel.curve = best_eval.curve;
        current = std::move(best_eval);
    }
    return sel;
}

Selection random_baseline(const Circuit& circuit, const FipPredictor& predictor, const TpiConfig& config,
                          std::uint64_t seed, std::size_t count) {
    config.validate();
    require_dffs(circuit);
    std::vector<GateId> pool(circuit.dffs().begin(), circuit.dffs().end());
    std::sort(pool.begin(), pool.end());
    count = std::min(count, pool.size());
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `count` entries are a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    Selection sel;
    sel.dffs.assign(pool.begin(), pool.begin() + static_cast<long>(count));
    sel.counts.push_back(evaluate_points(circuit, predictor, config, {}).count);
    auto after = evaluate_points(circuit, predictor, config, sel.dffs);
    sel.counts.push_back(after.count);
    sel.curve = std::move(after.curve);
    return sel;
}

TpiReport run_tpi(const Circuit& circuit, const FipPredictor& predictor, const TpiConfig& config) {
    config.validate();
    require_dffs(circuit);
    TpiReport report;
    report.budget = budget_points(config, circuit.dffs().size());
    report.before = evaluate_points(circuit, predictor, config, {}).curve;
    report.greedy = greedy_select(circuit, predictor, config);
    for (std::size_t i = 0; i < config.random_seeds; ++i) {
        const auto seed = config.seed + i;
        report.seeds.push_back(seed);
        report.random.push_back(random_baseline(circuit, predictor, config, seed, report.greedy.dffs.size()));
    }
    return report;
}

std::vector<double> TpiReport::random_mean() const {
    std::vector<double> mean(before.size(), 0.0);
    if (random.empty()) return before;
    for (const auto& r : random)
        for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += r.curve[t];
    for (auto& v : mean) v /= static_cast<double>(random.size());
    return mean;
}

std::vector<double> TpiReport::random_std() const {
    std::vector<double> sd(before.size(), 0.0);
    if (random.empty()) return sd;
    const auto mean = random_mean();
    for (const auto& r : random)
        for (std::size_t t = 0; t < sd.size(); ++t) sd[t] += (r.curve[t] - mean[t]) * (r.curve[t] - mean[t]);
    for (auto& v : sd) v = std::sqrt(v / static_cast<double>(random.size()));
    return sd;
}

double TpiReport::random_mean_reduction() const {
    if (random.empty()) return 0;
    double total = 0;
    for (const auto& r : random) total += static_cast<double>(r.counts.front()) - static_cast<double>(r.counts.back());
    return total / static_cast<double>(random.size());
}

json TpiReport::to_json(const Circuit& circuit) const {
    auto names = [&](const std::vector<GateId>& ids) {
        json a = json::array();
        for (auto g : ids) a.push_back(circuit.line(g).name);
        return a;
    };
    json j = {{"circuit", circuit.name()},
              {"dffs", circuit.dffs().size()},
              {"budget", budget},
              {"before", before},
              {"greedy", {{"selected", names(greedy.dffs)}, {"counts", greedy.counts}, {"curve", greedy.curve}}},
              {"random", json::array()},
              {"random_mean", random_mean()},
              {"random_std", random_std()},
              {"random_mean_reduction", random_mean_reduction()}};
    for (std::size_t i = 0; i < random.size(); ++i)
        j["random"].push_back({{"seed", seeds[i]},
                               {"selected", names(random[i].dffs)},
                               {"counts", random[i].counts},
                               {"curve", random[i].curve}});
    return j;
}

std::string TpiReport::to_csv() const {
    const auto mean = random_mean();
    const auto sd = random_std();
    std::string out = "cycle,before,greedy,random_mean,random_std\n";
    for (std::size_t t = 0; t < before.size(); ++t)
        out += std::to_string(t + 1) + "," + format_double(before[t]) + "," + format_double(greedy.curve[t]) + "," +
               format_double(mean[t]) + "," + format_double(sd[t]) + "\n";
    return out;
}

}  // namespace fipgraph
