#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "j3dai/cli.hpp"
#include "j3dai/ir.hpp"
#include "j3dai/metrics.hpp"
#include "j3dai/sim.hpp"

using namespace j3dai;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = J3DAI_FIXTURES;

struct Out {
    int code;
    std::string out, err;
};

Out j3dai_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "j3dai");
    std::ostringstream o, e;
    int code = j3dai::cli::main(args, o, e);
    return {code, o.str(), e.str()};
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("j3dai_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const std::vector<std::string> kArtifacts{"graph.json", "graph.weights.bin", "quant.json", "quant.weights.bin", "plan.json", "schedule.json",
                                          "program.asm", "program.manifest.json", "image.bin", "input.bin", "sim.json", "final.bin",
                                          "outputs.bin", "oracle.bin", "report.json", "report.txt"};

} // namespace

TEST_CASE("fixtures match the deterministic builders") {
    auto g = ir::load_graph((kFixtures / "tiny_cnn.json").string());
    CHECK(g == ir::infer_shapes(ir::build_tiny_cnn(0)));
    auto o = ir::load_graph((kFixtures / "overlap_pair.json").string());
    CHECK(o == ir::infer_shapes(ir::build_overlap_pair()));
}

TEST_CASE("run-all on the tiny CNN fixture reproduces the checked-in oracle output") {
    auto d = scratch("fixture");
    auto r = j3dai_cli({"run-all", (kFixtures / "tiny_cnn.json").string(), "--input", (kFixtures / "tiny_cnn.input.json").string(), "--out", d.string(),
                  "--config", (kFixtures / "j3dai_default.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.err.empty());
    auto want = ir::Container::load((kFixtures / "tiny_cnn.oracle.json").string()).tensors;
    auto got = ir::Container::load((d / "outputs.json").string()).tensors;
    CHECK(got == want);
    auto rep = nlohmann::json::parse(slurp(d / "report.json"));
    CHECK(rep["total_cycles"].get<std::uint64_t>() > 0);
    CHECK(rep["workload"] == "tiny_cnn");
}

TEST_CASE("run-all twice gives byte-identical artifacts") {
    auto a = scratch("det_a"), b = scratch("det_b");
    for (const auto& d : {a, b}) REQUIRE(j3dai_cli({"run-all", "--model", "tiny_cnn", "--variant", "2", "--out", d.string()}).code == 0);
    for (const auto& f : kArtifacts) {
        CAPTURE(f);
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
}

TEST_CASE("re-running a stage from its serialized input is byte-identical") {
    auto d = scratch("rerun");
    REQUIRE(j3dai_cli({"run-all", "--model", "overlap_pair", "--out", d.string()}).code == 0);
    for (const auto& [stage, files] : std::vector<std::pair<std::string, std::vector<std::string>>>{
             {"quantize", {"quant.json", "quant.weights.bin"}},
             {"map", {"plan.json"}},
             {"schedule", {"schedule.json"}},
             {"compile", {"program.asm", "program.manifest.json", "image.bin", "input.bin"}},
             {"simulate", {"sim.json", "final.bin", "outputs.bin"}},
             {"report", {"report.json", "report.txt"}}}) {
        CAPTURE(stage);
        std::vector<std::string> before;
        for (const auto& f : files) before.push_back(slurp(d / f));
        auto r = j3dai_cli({stage, "--out", d.string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        for (std::size_t i = 0; i < files.size(); ++i) CHECK(slurp(d / files[i]) == before[i]);
    }
}

TEST_CASE("stages chain one at a time") {
    auto d = scratch("stages");
    for (std::vector<std::string> args : {std::vector<std::string>{"import", "--model", "tiny_cnn", "--variant", "3"}, {"quantize", "--seed", "3"}, {"map"},
                                          {"schedule", "--no-prefetch"}, {"compile"}, {"simulate"}, {"report"}}) {
        args.push_back("--out");
        args.push_back(d.string());
        auto r = j3dai_cli(args);
        CAPTURE(args[0]);
        REQUIRE_MESSAGE(r.code == 0, r.err);
    }
    auto s = sim::report_from_json(nlohmann::json::parse(slurp(d / "sim.json")));
    CHECK(s.total_cycles > 0);
    auto man = nlohmann::json::parse(slurp(d / "program.manifest.json"));
    CHECK(s.total_cycles == man["expected_cycles"].get<std::uint64_t>());
}

TEST_CASE("corrupted assembly is reported with its line number") {
    auto d = scratch("corrupt");
    REQUIRE(j3dai_cli({"run-all", "--model", "tiny_cnn", "--out", d.string()}).code == 0);
    std::istringstream in(slurp(d / "program.asm"));
    std::string text, line;
    for (int n = 1; std::getline(in, line); ++n) text += (n == 12 ? std::string("    FROB a9, 3") : line) + "\n";
    std::ofstream(d / "program.asm", std::ios::binary) << text;
    auto r = j3dai_cli({"simulate", "--out", d.string()});
    CHECK(r.code == cli::kValidation);
    CHECK(r.err.find("simulate") != std::string::npos);
    CHECK(r.err.find("line 12") != std::string::npos);
}

TEST_CASE("report shows 4.04 ms for 808000 cycles at 200 MHz") {
    auto d = scratch("report");
    REQUIRE(j3dai_cli({"import", "--model", "tiny_cnn", "--out", d.string()}).code == 0);
    REQUIRE(j3dai_cli({"quantize", "--out", d.string()}).code == 0);
    sim::SimReport s;
    s.total_cycles = 808000;
    std::ofstream(d / "sim.json") << sim::to_json(s).dump();
    auto r = j3dai_cli({"report", "--out", d.string(), "--clock-hz", "200e6"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto txt = slurp(d / "report.txt");
    CHECK(txt.find("Latency @200MHz           4.04 ms") != std::string::npos);
    auto j = nlohmann::json::parse(slurp(d / "report.json"));
    CHECK(j["latency_ms"].get<double>() == doctest::Approx(4.04));
}

TEST_CASE("exit codes and stage-scoped diagnostics") {
    auto d = scratch("errors");
    CHECK(j3dai_cli({}).code == cli::kUsage);
    CHECK(j3dai_cli({"frobnicate"}).code == cli::kUsage);
    CHECK(j3dai_cli({"map", "--bogus"}).code == cli::kUsage);
    CHECK(j3dai_cli({"--help"}).code == 0);

    auto missing = j3dai_cli({"map", "--out", d.string()});
    CHECK(missing.code == cli::kValidation);
    CHECK(missing.err.find("map") != std::string::npos);
    CHECK(missing.err.find("quant.json") != std::string::npos);

    CHECK(j3dai_cli({"import", "--out", d.string()}).code == cli::kValidation);
    CHECK(j3dai_cli({"import", "--model", "mobilenet_v1", "--size", "64by48", "--out", d.string()}).code == cli::kValidation);
    CHECK(j3dai_cli({"run-all", "--model", "tiny_cnn", "--config", (d / "none.json").string(), "--out", d.string()}).code == cli::kValidation);
    CHECK(j3dai_cli({"run-all", "--model", "tiny_cnn", "--clock-hz", "0", "--out", d.string()}).code == cli::kValidation);

    auto cap = j3dai_cli({"run-all", "--model", "tiny_cnn", "--cycle-cap", "10", "--out", d.string()});
    CHECK(cap.code == cli::kRuntime);
    CHECK(cap.err.find("simulate") != std::string::npos);
}
