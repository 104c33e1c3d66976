#include "fipgraph/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>

#include "fipgraph/error.hpp"
#include "fipgraph/fault_sim.hpp"
#include "fipgraph/io.hpp"
#include "fipgraph/netlist.hpp"
#include "fipgraph/stgcn.hpp"
#include "fipgraph/stgraph.hpp"
#include "fipgraph/testability.hpp"
#include "fipgraph/tpi.hpp"
#include "fipgraph/trainer.hpp"

namespace fipgraph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Options that do not change any result and are left out of provenance.
const std::vector<std::string> kUnrecorded{"help", "config", "threads", "out", "version"};

struct Globals {
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string out = ".";
};

json effective_config(const CLI::App& app, const CLI::App& sub) {
    json cfg = json::object();
    auto record = [&](const CLI::App& a) {
        for (const auto* opt : a.get_options()) {
            const auto name = opt->get_single_name();
            if (std::find(kUnrecorded.begin(), kUnrecorded.end(), name) != kUnrecorded.end()) continue;
            if (opt->get_expected_max() == 0) {
                cfg[name] = opt->count() > 0;
                continue;
            }
            if (opt->count() == 0) {
                if (!opt->get_default_str().empty()) cfg[name] = opt->get_default_str();
                continue;
            }
            const auto& r = opt->results();
            if (r.size() == 1)
                cfg[name] = r.front();
            else
                cfg[name] = r;
        }
    };
    record(app);
    record(sub);
    return cfg;
}

class Run {
public:
    Run(std::string command, json config, const Globals& g)
        : command_(std::move(command)), config_(std::move(config)), out_dir_(g.out) {}

    void add_input(const std::string& path) {
        inputs_.push_back({{"path", path}, {"sha256", sha256_hex(read_file(path))}});
    }

    [[nodiscard]] json provenance() const {
        return {{"tool", "fipgraph"}, {"version", kVersion}, {"command", command_}, {"config", config_},
                {"inputs", inputs_}};
    }

    /// Path of an output file. Only plain file names inside the output directory are allowed.
    [[nodiscard]] fs::path output(const std::string& name) const {
        if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos ||
            name == "." || name == "..")
            throw ConfigError("refusing to write '" + name + "' outside the output directory");
        fs::create_directories(out_dir_);
        return out_dir_ / name;
    }

    void write_json(const std::string& name, json body) const {
        body["provenance"] = provenance();
        write_file_atomic(output(name), body.dump(2) + "\n");
    }

    void write_csv(const std::string& name, const std::string& csv) const {
        write_file_atomic(output(name), "# provenance " + provenance().dump() + "\n" + csv);
    }

    [[nodiscard]] const fs::path& dir() const { return out_dir_; }

private:
    std::string command_;
    json config_;
    fs::path out_dir_;
    json inputs_ = json::array();
};

std::string file_stem(const std::string& name) {
    std::string out;
    for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') ? c : '_';
    return out.empty() || out == "." || out == ".." ? "circuit" : out;
}

ObservationSet observation(const std::string& mode) {
    ObservationSet o;
    o.include_ppos = mode == "po+ppo";
    return o;
}

std::vector<FaultKind> kinds_of(const std::vector<std::string>& names) {
    std::vector<FaultKind> out;
    for (const auto& n : names) out.push_back(fault_kind_from_string(n));
    return out;
}

Circuit load(Run& run, const std::string& path) {
    run.add_input(path);
    return load_bench(path);
}

// 4-node graph for gradient checks: a; n = NAND(a, q); x = XOR(a, n, q); q = DFF(x).
STGraph toy_sample(const ModelConfig& c, std::uint64_t seed) {
    auto topo = std::make_shared<Topology>();
    topo->circuit = "toy";
    topo->kinds = {GateKind::Input, GateKind::Nand, GateKind::Xor, GateKind::Dff};
    topo->edges = {{0, 1}, {3, 1}, {0, 2}, {1, 2}, {3, 2}, {2, 3}};
    STGraph g;
    g.topo = topo;
    g.m = c.m;
    g.s = c.s;
    g.p = c.p;
    g.q = c.q;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    g.E.resize(c.m * topo->edges.size() * c.p);
    for (auto& v : g.E) v = u(rng);
    g.Y.resize(c.s * topo->n_nodes() * c.q);
    for (auto& v : g.Y) v = u(rng);
    return g;
}

const std::vector<std::string> kVariantNames{"full", "no_time_encoding", "only_spatial", "only_temporal",
                                             "mlp_decoder"};
const std::vector<std::string> kKindNames{"SA0", "SA1", "STR", "STF"};

struct ModelFlags {
    std::size_t d = 64, heads = 4, spatial_layers = 2, temporal_layers = 2, time_dim = 8;
    std::string variant = "full";
    bool reverse_edges = false;

    void add(CLI::App* sub) {
        sub->add_option("--d", d, "Hidden width")->capture_default_str();
        sub->add_option("--heads", heads, "Attention heads")->capture_default_str();
        sub->add_option("--spatial-layers", spatial_layers, "Spatial layers")->capture_default_str();
        sub->add_option("--temporal-layers", temporal_layers, "Temporal layers")->capture_default_str();
        sub->add_option("--time-dim", time_dim, "Time embedding width")->capture_default_str();
        sub->add_option("--variant", variant, "Model variant")
            ->check(CLI::IsMember(kVariantNames))
            ->capture_default_str();
        sub->add_flag("--reverse-edges", reverse_edges, "Also aggregate over reversed edges");
    }

    [[nodiscard]] ModelConfig config(const Dataset& d_) const {
        ModelConfig c;
        c.d = d;
        c.heads = heads;
        c.spatial_layers = spatial_layers;
        c.temporal_layers = temporal_layers;
        c.time_dim = time_dim;
        c.m = d_.m;
        c.s = d_.s;
        c.p = d_.p;
        c.q = d_.q;
        c.variant = variant_from_string(variant);
        c.reverse_edges = reverse_edges;
        return c;
    }
};

struct TrainFlags {
    std::size_t epochs = 200;
    double lr = 0.05;
    std::string split = "uniform";
    ModelFlags model;

    void add(CLI::App* sub) {
        sub->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        sub->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        sub->add_option("--split", split, "Circuit split")
            ->check(CLI::IsMember({"uniform", "sparse"}))
            ->capture_default_str();
        model.add(sub);
    }

    [[nodiscard]] TrainConfig config(const Dataset& d, const Globals& g) const {
        TrainConfig c;
        c.epochs = epochs;
        c.lr = lr;
        c.seed = g.seed;
        c.split = split_from_string(split);
        c.model = model.config(d);
        c.threads = g.threads;
        return c;
    }
};

STGraph fip_inference_sample(const Circuit& circuit, const ModelConfig& mc, const std::vector<FaultKind>& kinds,
                             std::uint64_t n_patterns, std::uint64_t seed, const ObservationSet& observe,
                             std::size_t threads) {
    if (kinds.size() != mc.p)
        throw ConfigError("model expects " + std::to_string(mc.p) + " feature channels, --kinds gives " +
                          std::to_string(kinds.size()));
    auto topo = std::make_shared<const Topology>(build_topology(circuit));
    SimOptions sim;
    sim.threads = threads;
    const auto fip = build_fip_matrix(
        circuit, kinds, PatternSet::random(seed, n_patterns, mc.m, circuit.primary_inputs().size()), observe, sim);
    STGraph g;
    g.topo = topo;
    g.mode = FeatureMode::FIP;
    g.m = mc.m;
    g.s = mc.s;
    g.p = mc.p;
    g.q = mc.q;
    g.E = fip_edge_series(*topo, fip, kinds).values;
    g.Y.assign(mc.s * topo->n_nodes() * mc.q, 0.0);
    return g;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fault impact probability prediction for sequential circuits", "fipgraph"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML config file; command-line flags take precedence");
    app.set_version_flag("--version", kVersion);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    std::function<void(Run&)> action;
    auto command = [&](const char* name, const char* help) { return app.add_subcommand(name, help); };

    // parse
    std::string bench;
    auto* parse = command("parse", "Parse a .bench netlist and print statistics");
    parse->add_option("bench", bench, "Netlist file")->required();
    parse->callback([&] {
        action = [&](Run& run) {
            const auto c = load(run, bench);
            const auto s = circuit_stats(c);
            json j = {{"circuit", c.name()},
                      {"gates", s.gates},
                      {"dffs", s.dffs},
                      {"pis", s.pis},
                      {"pos", s.pos},
                      {"lines", s.lines},
                      {"warnings", std::vector<std::string>(c.warnings().begin(), c.warnings().end())},
                      {"provenance", run.provenance()}};
            out << j.dump(2) << "\n";
        };
    });

    // generate
    GeneratorConfig gen;
    auto* generate = command("generate", "Write a seeded random sequential circuit as .bench");
    generate->add_option("--inputs", gen.inputs, "Primary inputs")->capture_default_str();
    generate->add_option("--outputs", gen.outputs, "Primary outputs")->capture_default_str();
    generate->add_option("--dffs", gen.dffs, "Flip-flops")->capture_default_str();
    generate->add_option("--gates", gen.gates, "Combinational gates")->capture_default_str();
    generate->add_option("--max-fanin", gen.max_fanin, "Largest gate fanin")->capture_default_str();
    generate->add_option("--name", gen.name, "Circuit name")->capture_default_str();
    generate->callback([&] {
        action = [&](Run& run) {
            gen.seed = g.seed;
            const auto c = generate_circuit(gen);
            write_file_atomic(run.output(file_stem(c.name()) + ".bench"),
                              "# provenance " + run.provenance().dump() + "\n" + write_bench(c));
        };
    });

    // simulate
    std::uint64_t patterns = 1000;
    std::size_t cycles = 10;
    std::string observe = "po";
    std::vector<std::string> kinds{"SA0", "SA1"};
    bool exhaustive = false, random_init = false;
    auto* simulate = command("simulate", "Fault-simulate every line and write FIP per cycle");
    simulate->add_option("bench", bench, "Netlist file")->required();
    simulate->add_option("--patterns", patterns, "Random patterns")->capture_default_str();
    simulate->add_option("--cycles", cycles, "Clock cycles")->capture_default_str();
    simulate->add_option("--observe", observe, "Observation points")
        ->check(CLI::IsMember({"po", "po+ppo"}))
        ->capture_default_str();
    simulate->add_option("--kinds", kinds, "Fault kinds")->delimiter(',')->check(CLI::IsMember(kKindNames))->capture_default_str();
    simulate->add_flag("--exhaustive", exhaustive, "Enumerate every input sequence");
    simulate->add_flag("--random-init", random_init, "Seeded random flip-flop reset");
    simulate->callback([&] {
        action = [&](Run& run) {
            const auto c = load(run, bench);
            const auto pis = c.primary_inputs().size();
            const auto ps = exhaustive ? PatternSet::exhaustive(cycles, pis)
                                       : PatternSet::random(g.seed, patterns, cycles, pis);
            SimOptions sim;
            sim.threads = g.threads;
            sim.init = {random_init, g.seed};
            const auto fip = build_fip_matrix(c, kinds_of(kinds), ps, observation(observe), sim);
            const auto stem = file_stem(c.name());
            run.write_json(stem + ".fip.json", fip.to_json());
            run.write_csv(stem + ".fip.csv", fip.to_csv());
        };
    });

    // testability
    auto* testability = command("testability", "Per-frame SCOAP and COP metrics");
    testability->add_option("bench", bench, "Netlist file")->required();
    testability->add_option("--cycles", cycles, "Time frames")->capture_default_str();
    testability->add_option("--observe", observe, "Observation points")
        ->check(CLI::IsMember({"po", "po+ppo"}))
        ->capture_default_str();
    testability->callback([&] {
        action = [&](Run& run) {
            const auto c = load(run, bench);
            const auto t = compute_testability(c, cycles, observation(observe));
            run.write_csv(file_stem(c.name()) + ".testability.csv", testability_csv(c, t));
        };
    });

    // convert
    std::vector<std::string> benches, fip_cache;
    std::string mode = "fip", split = "uniform";
    std::size_t in_cycles = 5, out_cycles = 5, total_cycles = 20;
    auto* convert = command("convert", "Build an ST-Graph dataset from netlists");
    convert->add_option("bench", benches, "Netlist files")->required();
    convert->add_option("--mode", mode, "Edge features")->check(CLI::IsMember({"tm", "fip"}))->capture_default_str();
    convert->add_option("--in-cycles", in_cycles, "Input cycles m")->capture_default_str();
    convert->add_option("--out-cycles", out_cycles, "Output cycles s")->capture_default_str();
    convert->add_option("--cycles", total_cycles, "Simulated cycles per circuit")->capture_default_str();
    convert->add_option("--patterns", patterns, "Random patterns")->capture_default_str();
    convert->add_option("--observe", observe, "Observation points")
        ->check(CLI::IsMember({"po", "po+ppo"}))
        ->capture_default_str();
    convert->add_option("--kinds", kinds, "FIP channels")->delimiter(',')->check(CLI::IsMember(kKindNames))->capture_default_str();
    convert->add_option("--fip", fip_cache, "Cached FIP matrices from `simulate`");
    convert->add_option("--split", split, "Split tag written to the manifest")
        ->check(CLI::IsMember({"uniform", "sparse"}))
        ->capture_default_str();
    convert->callback([&] {
        action = [&](Run& run) {
            ConvertConfig cc;
            cc.mode = feature_mode_from_string(mode);
            cc.total_cycles = total_cycles;
            cc.m = in_cycles;
            cc.s = out_cycles;
            cc.n_patterns = patterns;
            cc.seed = g.seed;
            cc.observe = observation(observe);
            cc.channels = kinds_of(kinds);
            cc.sim.threads = g.threads;
            std::map<std::string, FipMatrix> cached;
            for (const auto& path : fip_cache) {
                run.add_input(path);
                json j;
                try {
                    j = json::parse(read_file(path));
                } catch (const json::parse_error& e) {
                    throw SchemaError(path + ": " + e.what());
                }
                auto m = FipMatrix::from_json(j);
                cached.emplace(m.circuit(), std::move(m));
            }
            Dataset d;
            d.mode = cc.mode;
            d.m = cc.m;
            d.s = cc.s;
            d.p = cc.mode == FeatureMode::TM ? kTmChannels : cc.channels.size();
            d.q = cc.channels.size();
            for (const auto& path : benches) {
                const auto c = load(run, path);
                const FipMatrix* labels = nullptr;
                if (auto it = cached.find(c.name()); it != cached.end()) {
                    const auto names = it->second.line_names();
                    if (names.size() != c.size())
                        throw ShapeError("cached FIP for " + c.name() + " covers " + std::to_string(names.size()) +
                                         " lines, netlist has " + std::to_string(c.size()));
                    for (LineId l = 0; l < c.size(); ++l)
                        if (names[l] != c.line(l).name)
                            throw ShapeError("cached FIP for " + c.name() + " names line " + std::to_string(l) +
                                             " '" + names[l] + "', netlist has '" + c.line(l).name + "'");
                    labels = &it->second;
                }
                auto samples = convert_circuit(c, cc, labels);
                samples.circuit = file_stem(samples.circuit);
                d.circuits.push_back(std::move(samples));
            }
            if (d.circuits.size() >= 2) {
                std::vector<CircuitSize> sizes;
                for (const auto& c : d.circuits) sizes.push_back({c.circuit, c.gates});
                const auto sp = split_circuits(sizes, split_from_string(split));
                for (auto i : sp.train) d.circuits[i].split = "train";
                for (auto i : sp.test) d.circuits[i].split = "test";
            }
            d.provenance = run.provenance();
            for (const auto& c : d.circuits) (void)run.output(c.circuit + ".jsonl");
            write_dataset(d, run.dir());
        };
    });

    // train
    std::string manifest;
    TrainFlags tf;
    auto* train_cmd = command("train", "Train an ST-GCN on a dataset");
    train_cmd->add_option("manifest", manifest, "Dataset manifest.json")->required();
    tf.add(train_cmd);
    train_cmd->callback([&] {
        action = [&](Run& run) {
            run.add_input(manifest);
            const auto d = read_dataset(manifest);
            const auto cfg = tf.config(d, g);
            auto r = train(d, cfg);
            auto prov = run.provenance();
            save_model(run.output("model.ckpt"), r.model, prov);
            run.write_csv("loss.csv", loss_csv(r.epoch_loss));
            run.write_json("train.json", {{"train_circuits", r.train_circuits},
                                          {"test_circuits", r.test_circuits},
                                          {"mode", std::string(to_string(d.mode))},
                                          {"config", cfg.to_json()},
                                          {"final_loss", r.epoch_loss.back()}});
        };
    });

    // eval
    std::string checkpoint;
    auto* eval_cmd = command("eval", "Per-circuit RMSE and MAE of a checkpoint");
    eval_cmd->add_option("checkpoint", checkpoint, "model.ckpt")->required();
    eval_cmd->add_option("manifest", manifest, "Dataset manifest.json")->required();
    eval_cmd->add_option("--split", split, "Circuit split")
        ->check(CLI::IsMember({"uniform", "sparse"}))
        ->capture_default_str();
    eval_cmd->callback([&] {
        action = [&](Run& run) {
            run.add_input(checkpoint);
            run.add_input(manifest);
            auto model = load_model(checkpoint);
            const auto d = read_dataset(manifest);
            const auto table = evaluate(model, d, split_from_string(split), g.threads);
            run.write_csv("eval.csv", table.to_csv());
            run.write_json("eval.json", table.to_json());
        };
    });

    // ablation
    std::vector<std::uint64_t> seeds{1, 2, 3};
    auto* ablation = command("ablation", "Train and evaluate every model variant");
    ablation->add_option("manifest", manifest, "Dataset manifest.json")->required();
    ablation->add_option("--seeds", seeds, "Training seeds")->delimiter(',')->capture_default_str();
    tf.add(ablation);
    ablation->callback([&] {
        action = [&](Run& run) {
            run.add_input(manifest);
            const auto d = read_dataset(manifest);
            const auto rows = run_ablation(d, tf.config(d, g), seeds);
            run.write_csv("ablation.csv", ablation_csv(rows));
            json j = {{"rows", json::array()}};
            for (const auto& r : rows)
                j["rows"].push_back({{"variant", std::string(to_string(r.variant))},
                                     {"rmse", r.rmse},
                                     {"mae", r.mae},
                                     {"median_rmse", r.median_rmse},
                                     {"median_mae", r.median_mae},
                                     {"delta_rmse_pct", r.delta_rmse},
                                     {"delta_mae_pct", r.delta_mae}});
            run.write_json("ablation.json", j);
        };
    });

    // predict
    auto* predict_cmd = command("predict", "Predict per-line FIP for a netlist");
    predict_cmd->add_option("checkpoint", checkpoint, "model.ckpt")->required();
    predict_cmd->add_option("bench", bench, "Netlist file")->required();
    predict_cmd->add_option("--observe", observe, "Observation points")
        ->check(CLI::IsMember({"po", "po+ppo"}))
        ->capture_default_str();
    predict_cmd->add_option("--patterns", patterns, "Patterns for FIP-mode input features")->capture_default_str();
    predict_cmd->add_option("--kinds", kinds, "FIP-mode feature channels")
        ->delimiter(',')
        ->check(CLI::IsMember(kKindNames))
        ->capture_default_str();
    predict_cmd->callback([&] {
        action = [&](Run& run) {
            run.add_input(checkpoint);
            auto model = load_model(checkpoint);
            const auto c = load(run, bench);
            const auto& mc = model.config;
            const auto sample = mc.p == kTmChannels
                                    ? tm_inference_sample(c, mc.m, mc.s, mc.q, observation(observe))
                                    : fip_inference_sample(c, mc, kinds_of(kinds), patterns, g.seed,
                                                           observation(observe), g.threads);
            const Tensor y = predict(model, prepare_input(sample, mc.reverse_edges));
            std::string csv = "line,channel,cycle,fip\n";
            for (LineId l = 0; l < c.size(); ++l)
                for (std::size_t t = 0; t < mc.s; ++t)
                    for (std::size_t ch = 0; ch < mc.q; ++ch)
                        csv += c.line(l).name + "," + std::to_string(ch) + "," + std::to_string(mc.m + t + 1) + "," +
                               format_double(y(l, static_cast<Eigen::Index>(t * mc.q + ch))) + "\n";
            run.write_csv(file_stem(c.name()) + ".predict.csv", csv);
        };
    });

    // tpi
    TpiConfig tc;
    std::string model_path;
    bool no_min_one = false;
    auto* tpi_cmd = command("tpi", "Greedy observation-point insertion over flip-flops");
    tpi_cmd->add_option("bench", bench, "Netlist file")->required();
    tpi_cmd->add_option("--model", model_path, "TM-mode checkpoint (default: fault-simulation oracle)");
    tpi_cmd->add_option("--budget", tc.budget, "Fraction of flip-flops")->capture_default_str();
    tpi_cmd->add_flag("--no-min-one", no_min_one, "Allow a zero-point budget");
    tpi_cmd->add_option("--theta-lo", tc.theta_lo, "Early FIP threshold")->capture_default_str();
    tpi_cmd->add_option("--theta-hi", tc.theta_hi, "Late FIP threshold")->capture_default_str();
    tpi_cmd->add_option("--early", tc.k, "Early window in cycles")->capture_default_str();
    tpi_cmd->add_option("--random-seeds", tc.random_seeds, "Random baseline runs")->capture_default_str();
    tpi_cmd->add_flag("--observe-q", tc.observe_q, "Observe flip-flop outputs instead of D lines");
    tpi_cmd->add_option("--patterns", patterns, "Oracle patterns")->capture_default_str();
    tpi_cmd->add_option("--cycles", cycles, "Oracle cycles")->capture_default_str();
    tpi_cmd->add_option("--kinds", kinds, "Oracle fault kinds")->delimiter(',')->check(CLI::IsMember(kKindNames))->capture_default_str();
    tpi_cmd->callback([&] {
        action = [&](Run& run) {
            const auto c = load(run, bench);
            tc.min_one = !no_min_one;
            tc.seed = g.seed;
            std::optional<Model> model;
            FipPredictor predictor;
            if (!model_path.empty()) {
                run.add_input(model_path);
                model = load_model(model_path);
                predictor = model_predictor(c, *model);
            } else {
                OracleOptions o;
                o.kinds = kinds_of(kinds);
                o.n_cycles = cycles;
                o.n_patterns = patterns;
                o.seed = g.seed;
                o.sim.threads = g.threads;
                predictor = oracle_predictor(c, o);
            }
            const auto report = run_tpi(c, predictor, tc);
            const auto stem = file_stem(c.name());
            auto j = report.to_json(c);
            j["predictor"] = model ? "model" : "oracle";
            run.write_json(stem + ".tpi.json", j);
            run.write_csv(stem + ".tpi.csv", report.to_csv());
        };
    });

    // gradcheck
    ModelFlags gm;
    gm.d = 8;
    gm.heads = 2;
    gm.time_dim = 3;
    gm.variant = "all";
    double eps = 1e-5, tolerance = 1e-4;
    auto* gradcheck = command("gradcheck", "Finite-difference check of the model on a 4-node graph");
    gradcheck->add_option("--d", gm.d, "Hidden width")->capture_default_str();
    gradcheck->add_option("--heads", gm.heads, "Attention heads")->capture_default_str();
    gradcheck->add_option("--time-dim", gm.time_dim, "Time embedding width")->capture_default_str();
    gradcheck->add_option("--variant", gm.variant, "Variant or `all`")
        ->check(CLI::IsMember([] {
            auto v = kVariantNames;
            v.push_back("all");
            return v;
        }()))
        ->capture_default_str();
    gradcheck->add_flag("--reverse-edges", gm.reverse_edges, "Also aggregate over reversed edges");
    gradcheck->add_option("--eps", eps, "Central-difference step")->capture_default_str();
    gradcheck->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
    gradcheck->callback([&] {
        action = [&](Run& run) {
            std::vector<std::string> variants = gm.variant == "all" ? kVariantNames : std::vector{gm.variant};
            json results = json::array();
            bool ok = true;
            for (const auto& v : variants) {
                ModelConfig mc;
                mc.d = gm.d;
                mc.heads = gm.heads;
                mc.time_dim = gm.time_dim;
                mc.m = 3;
                mc.s = 2;
                mc.p = 2;
                mc.q = 2;
                mc.variant = variant_from_string(v);
                mc.reverse_edges = gm.reverse_edges;
                Model model(mc, g.seed);
                const auto in = prepare_input(toy_sample(mc, g.seed), mc.reverse_edges);
                GradCheckOptions opt;
                opt.eps = eps;
                opt.seed = g.seed;
                const auto r = grad_check([&](Tape& t) { return loss(t, model, in); }, model.params, opt);
                const bool pass = r.max_rel_error <= tolerance;
                ok = ok && pass;
                results.push_back({{"variant", v},
                                   {"max_rel_error", r.max_rel_error},
                                   {"worst_param", r.worst_param},
                                   {"probes", r.probes},
                                   {"pass", pass}});
            }
            out << json{{"results", results}, {"provenance", run.provenance()}}.dump(2) << "\n";
            if (!ok) throw Error("gradient check exceeded tolerance " + format_double(tolerance));
        };
    });

    // bench
    auto* bench_cmd = command("bench", "Time each pipeline stage");
    bench_cmd->add_option("bench", benches, "Netlist files")->required();
    bench_cmd->add_option("--patterns", patterns, "Patterns for FIP conversion")->capture_default_str();
    bench_cmd->add_option("--cycles", cycles, "Cycles")->capture_default_str();
    bench_cmd->add_option("--observe", observe, "Observation points")
        ->check(CLI::IsMember({"po", "po+ppo"}))
        ->capture_default_str();
    bench_cmd->add_option("--kinds", kinds, "FIP channels")->delimiter(',')->check(CLI::IsMember(kKindNames))->capture_default_str();
    bench_cmd->callback([&] {
        action = [&](Run& run) {
            std::string csv = "circuit,gates,stage,seconds\n";
            for (const auto& path : benches) {
                run.add_input(path);
                auto t0 = std::chrono::steady_clock::now();
                const auto c = load_bench(path);
                const double parse_s = seconds_since(t0);
                const auto gates = circuit_stats(c).gates;
                const auto obs = observation(observe);

                t0 = std::chrono::steady_clock::now();
                const auto topo = build_topology(c);
                const auto tm = tm_edge_series(topo, compute_testability(c, cycles, obs));
                const double tm_s = seconds_since(t0);

                t0 = std::chrono::steady_clock::now();
                SimOptions sim;
                sim.threads = g.threads;
                const auto ch = kinds_of(kinds);
                const auto fip = build_fip_matrix(
                    c, ch, PatternSet::random(g.seed, patterns, cycles, c.primary_inputs().size()), obs, sim);
                const auto fe = fip_edge_series(topo, fip, ch);
                const double fip_s = seconds_since(t0);

                for (const auto& [stage, s] :
                     {std::pair{"parse", parse_s}, std::pair{"tm_convert", tm_s}, std::pair{"fip_convert", fip_s}})
                    csv += c.name() + "," + std::to_string(gates) + "," + stage + "," + format_double(s) + "\n";
            }
            out << csv;
            run.write_csv("bench.csv", csv);
        };
    });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    const auto* sub = app.get_subcommands().front();
    try {
        Run run(sub->get_name(), effective_config(app, *sub), g);
        action(run);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace fipgraph
