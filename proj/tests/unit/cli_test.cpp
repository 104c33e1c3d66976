#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "fipgraph/cli.hpp"
#include "fipgraph/io.hpp"

namespace fs = std::filesystem;
using fipgraph::run_cli;

namespace {

const std::string kS27 = std::string(FIPGRAPH_TEST_DATA) + "/bench/s27.bench";

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("fipgraph_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = fipgraph::read_file(e.path());
    return files;
}

}  // namespace

TEST(Cli, ParsePrintsStats) {
    auto r = run({"parse", kS27});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["gates"], 10);
    EXPECT_EQ(j["dffs"], 3);
    EXPECT_EQ(j["pis"], 4);
    EXPECT_EQ(j["provenance"]["version"], fipgraph::kVersion);
    EXPECT_EQ(j["provenance"]["inputs"][0]["sha256"].get<std::string>().size(), 64u);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run({"parse", "--bogus", kS27}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"simulate", kS27, "--observe", "everything"}).code, 2);
    EXPECT_EQ(run({"--help"}).code, 0);
    auto missing = run({"parse", "/nonexistent/x.bench"});
    EXPECT_EQ(missing.code, 1);
    EXPECT_NE(missing.err.find("error:"), std::string::npos);
    const auto bad = scratch("bad");
    fs::create_directories(bad);
    fipgraph::write_file_atomic(bad / "bad.bench", "INPUT(a)\nOUTPUT(z)\nz = FOO(a)\n");
    EXPECT_EQ(run({"parse", (bad / "bad.bench").string()}).code, 1);
}

TEST(Cli, SimulateIsDeterministicAcrossThreads) {
    const auto a = scratch("sim1"), b = scratch("sim8");
    ASSERT_EQ(run({"simulate", kS27, "--patterns", "300", "--cycles", "5", "--threads", "1", "--out", a.string()}).code, 0);
    ASSERT_EQ(run({"simulate", kS27, "--patterns", "300", "--cycles", "5", "--threads", "8", "--out", b.string()}).code, 0);
    const auto sa = snapshot(a), sb = snapshot(b);
    EXPECT_EQ(sa.size(), 2u);
    EXPECT_EQ(sa, sb);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
    const auto dir = scratch("config");
    fs::create_directories(dir);
    fipgraph::write_file_atomic(dir / "run.toml", "seed = 7\n[simulate]\npatterns = 128\ncycles = 3\n");
    const auto out = dir / "out";
    ASSERT_EQ(run({"--config", (dir / "run.toml").string(), "simulate", kS27, "--cycles", "4", "--out", out.string()})
                  .code,
              0);
    auto j = nlohmann::json::parse(fipgraph::read_file(out / "s27.fip.json"));
    EXPECT_EQ(j["n_patterns"], 128);
    EXPECT_EQ(j["n_cycles"], 4);
    EXPECT_EQ(j["seed"], 7);
    EXPECT_EQ(j["provenance"]["config"]["cycles"], "4");
}

TEST(Cli, WritesStayInsideOutputDirectory) {
    const auto dir = scratch("confine");
    const auto out = dir / "out";
    ASSERT_EQ(run({"generate", "--name", "../escape", "--out", out.string()}).code, 0);
    ASSERT_EQ(run({"convert", (out / ".._escape.bench").string(), "--cycles", "6", "--in-cycles", "3",
                   "--out-cycles", "3", "--patterns", "64", "--out", out.string()})
                  .code,
              0);
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) EXPECT_EQ(e.path().parent_path(), out) << e.path();
}

TEST(Cli, PipelineRerunsAreByteIdentical) {
    auto pipeline = [](const fs::path& root, const std::string& threads) {
        const auto bench = root / "bench";
        for (int i = 1; i <= 3; ++i)
            ASSERT_EQ(run({"generate", "--seed", std::to_string(i), "--gates", std::to_string(10 + 5 * i), "--name",
                           "c" + std::to_string(i), "--out", bench.string()})
                          .code,
                      0);
        std::vector<std::string> convert{"convert"};
        for (int i = 1; i <= 3; ++i) convert.push_back((bench / ("c" + std::to_string(i) + ".bench")).string());
        const std::vector<std::string> flags{"--cycles",   "8",     "--in-cycles", "3",   "--out-cycles",
                                             "3",          "--patterns", "128",  "--threads", threads,
                                             "--out",      (root / "ds").string()};
        convert.insert(convert.end(), flags.begin(), flags.end());
        ASSERT_EQ(run(convert).code, 0);
        const auto manifest = (root / "ds" / "manifest.json").string();
        ASSERT_EQ(run({"train", manifest, "--epochs", "2", "--d", "8", "--heads", "2", "--lr", "0.01", "--threads",
                       threads, "--out", (root / "model").string()})
                      .code,
                  0);
        const auto ckpt = (root / "model" / "model.ckpt").string();
        ASSERT_EQ(run({"eval", ckpt, manifest, "--threads", threads, "--out", (root / "eval").string()}).code, 0);
        ASSERT_EQ(run({"predict", ckpt, (bench / "c1.bench").string(), "--threads", threads, "--out",
                       (root / "pred").string()})
                      .code,
                  0);
        ASSERT_EQ(run({"tpi", (bench / "c2.bench").string(), "--patterns", "64", "--cycles", "6", "--random-seeds", "3",
                       "--threads", threads, "--out", (root / "tpi").string()})
                      .code,
                  0);
    };
    // Same root for both runs: provenance records input paths and digests.
    const auto root = scratch("pipe");
    pipeline(root, "1");
    const auto sa = snapshot(root);
    fs::remove_all(root);
    pipeline(root, "8");
    const auto sb = snapshot(root);
    EXPECT_GT(sa.size(), 8u);
    ASSERT_EQ(sa.size(), sb.size());
    for (const auto& [name, body] : sa) EXPECT_TRUE(sb.at(name) == body) << name;
}

TEST(Cli, GradcheckPasses) {
    auto r = run({"gradcheck", "--variant", "only_temporal"});
    ASSERT_EQ(r.code, 0) << r.out << r.err;
    auto j = nlohmann::json::parse(r.out);
    EXPECT_LE(j["results"][0]["max_rel_error"].get<double>(), 1e-4);
}
