#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>

#include "j3dai/error.hpp"
#include "j3dai/pipeline.hpp"

using namespace j3dai;

namespace {

pipeline::Check run(const ir::Graph& fg, std::uint64_t seed, const arch::HardwareConfig& cfg, const sched::Options& opt = {}) {
    auto q = pipeline::quantize_random(fg, seed);
    return pipeline::check_graph(q, pipeline::random_inputs(q, seed + 100), cfg, opt);
}

} // namespace

TEST_CASE("tiny CNNs match the integer oracle") {
    auto cfg = arch::j3dai_default();
    for (int v = 0; v < ir::kTinyCnnVariants; ++v) {
        CAPTURE(v);
        auto r = run(ir::build_tiny_cnn(v), 7, cfg);
        CHECK_MESSAGE(r.bit_exact, r.mismatch);
        CHECK(r.sim_cycles == r.expected_cycles);
        CHECK_FALSE(r.report.accumulator_overflow);
    }
}

TEST_CASE("random tiny graphs match the integer oracle") {
    auto cfg = arch::j3dai_default();
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        CAPTURE(seed);
        auto r = run(ir::build_random_tiny(seed), seed, cfg);
        CHECK_MESSAGE(r.bit_exact, r.mismatch);
        CHECK(r.sim_cycles == r.expected_cycles);
    }
}

namespace {

// 2 clusters of 2 NCBs with 2 KiB of SRAM each: forces many waves, chunked
// reductions and double-buffered parameter blocks.
arch::HardwareConfig small_config() {
    auto cfg = arch::j3dai_default();
    cfg.num_clusters = 2;
    cfg.ncb_per_cluster = 2;
    cfg.ncb_bank_bytes = 512;
    cfg.dmpa_width_bits = 2 * cfg.ncb_bank_width_bits;
    return cfg;
}

} // namespace

TEST_CASE("multi-wave plans on a small machine") {
    auto cfg = small_config();
    bool waves = false, chunked = false, db = false;
    auto note = [&](const ir::Graph& q) {
        for (const auto& lp : map::plan_mapping(q, cfg).layers) {
            waves = waves || lp.waves > 3;
            chunked = chunked || lp.chunks > 1;
            db = db || lp.tile.double_buffer;
        }
    };
    // Variant 3's 5x5 conv over 24 channels needs more than 2 KiB per lane group.
    for (int v = 0; v < 3; ++v) {
        CAPTURE(v);
        note(pipeline::quantize_random(ir::build_tiny_cnn(v), 3));
        auto r = run(ir::build_tiny_cnn(v), 3, cfg);
        CHECK_MESSAGE(r.bit_exact, r.mismatch);
        CHECK(r.sim_cycles == r.expected_cycles);
    }
    {
        note(pipeline::quantize_random(ir::build_overlap_pair(), 3));
        auto r = run(ir::build_overlap_pair(), 3, cfg);
        CHECK_MESSAGE(r.bit_exact, r.mismatch);
        CHECK(r.sim_cycles == r.expected_cycles);
    }
    for (std::uint64_t seed = 40; seed < 60; ++seed) {
        CAPTURE(seed);
        note(pipeline::quantize_random(ir::build_random_tiny(seed), seed));
        auto r = run(ir::build_random_tiny(seed), seed, cfg);
        CHECK_MESSAGE(r.bit_exact, r.mismatch);
        CHECK(r.sim_cycles == r.expected_cycles);
    }
    CHECK(waves);
    CHECK(chunked);
    CHECK(db);
}

TEST_CASE("overlap fixture: prefetch hides the second layer's first load without bank conflicts") {
    auto cfg = arch::j3dai_default();
    auto overlapped = run(ir::build_overlap_pair(), 5, cfg);
    auto serialized = run(ir::build_overlap_pair(), 5, cfg, {.prefetch = false});
    CHECK(overlapped.bit_exact);
    CHECK(serialized.bit_exact);
    CHECK(overlapped.sim_cycles == overlapped.expected_cycles);
    CHECK(serialized.sim_cycles == serialized.expected_cycles);
    CHECK(overlapped.sim_cycles < serialized.sim_cycles);
    CHECK(overlapped.report.stalls.bank_conflict == 0);
}

TEST_CASE("program text round-trips through the assembler") {
    auto cfg = arch::j3dai_default();
    auto q = pipeline::quantize_random(ir::build_tiny_cnn(1), 2);
    auto c = codegen::compile(q, cfg);
    CHECK(isa::assemble(c.assembly(), cfg) == c.program);
    CHECK(codegen::compile(q, cfg) == c);
    auto m = c.manifest();
    CHECK(m["inputs"][0]["tensor"] == "x");
    CHECK(m["param_bytes"] == c.params.size());
}

TEST_CASE("parameter blocks fold the input zero point into the bias") {
    auto cfg = arch::j3dai_default();
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 2, 2, 2});
    b.output(b.conv("c", x, 1, 1, 1, 0));
    auto q = pipeline::quantize_random(b.finish(), 1);
    auto p = map::plan_mapping(q, cfg);
    auto blob = codegen::pack_params(q, p, cfg);
    REQUIRE(blob.size() == p.param_bytes);
    const auto& w = q.constants.at("c.w").as<std::int8_t>();
    std::int64_t zp = q.tensor("x").quant->zero_point;
    std::int32_t bias = q.constants.at("c.b").as<std::int32_t>()[0];
    std::int32_t got = 0;
    std::memcpy(&got, blob.data(), 4);
    CHECK(got == bias - zp * (w[0] + w[1]));
    // Lane 0 of the two weight words, after 8 lanes of int32 bias.
    CHECK(static_cast<std::int8_t>(blob[32]) == w[0]);
    CHECK(static_cast<std::int8_t>(blob[40]) == w[1]);
    CHECK(blob[33] == 0); // lane 1 has no output channel
}

TEST_CASE("codegen rejects float graphs and bad inputs") {
    auto cfg = arch::j3dai_default();
    CHECK_THROWS_AS(codegen::compile(ir::build_tiny_cnn(0), cfg), CodegenError);
    auto q = pipeline::quantize_random(ir::build_tiny_cnn(0), 1);
    auto c = codegen::compile(q, cfg);
    CHECK_THROWS_AS(codegen::initial_image(c, {}, cfg), CodegenError);
    oracle::Values wrong{{"x", ir::Tensor::zeros({1, 3, 2, 2}, ir::DType::UInt8)}};
    CHECK_THROWS_AS(codegen::initial_image(c, wrong, cfg), CodegenError);
}

TEST_CASE("MobileNetV1 alpha 0.25 at 64x48 matches the integer oracle") {
    auto cfg = arch::j3dai_default();
    auto r = run(ir::build_mobilenet_v1_any(0.25, 64, 48), 11, cfg);
    CHECK_MESSAGE(r.bit_exact, r.mismatch);
    CHECK(r.sim_cycles == r.expected_cycles);
    CHECK(r.report.stalls.bank_conflict == 0);
}

TEST_CASE("empty plan lowers to one HALT per cluster and no host commands") {
    auto cfg = arch::j3dai_default();
    ir::Graph g;
    map::MappingPlan p;
    sched::Schedule s;
    auto c = codegen::emit_program(g, p, s, cfg);
    CHECK(c.program.host.empty());
    REQUIRE(c.program.clusters.size() == static_cast<std::size_t>(cfg.num_clusters));
    for (const auto& [idx, code] : c.program.clusters) {
        REQUIRE(code.size() == 1);
        CHECK(code[0].op == isa::Op::Halt);
    }
    CHECK(c.params.empty());
}

TEST_CASE("inconsistent plan and schedule name the divergent step") {
    auto cfg = arch::j3dai_default();
    auto q = pipeline::quantize_random(ir::build_tiny_cnn(0), 3);
    auto p = map::plan_mapping(q, cfg);
    auto s = sched::build_schedule(p, cfg);
    REQUIRE(s.steps.size() >= 3);
    auto expect_step = [&](const sched::Schedule& bad, const std::string& step) {
        try {
            codegen::emit_program(q, p, bad, cfg);
            FAIL("no error");
        } catch (const CodegenError& e) {
            CHECK_MESSAGE(std::string(e.what()).find("step " + step) != std::string::npos, std::string(e.what()));
        }
    };
    auto dup = s;
    dup.steps[2].layer = dup.steps[1].layer;
    expect_step(dup, "2");
    auto range = s;
    range.steps[1].layer = 99;
    expect_step(range, "1");
    auto early = s;
    early.steps[2].start = early.steps[1].start;
    expect_step(early, "2");
    auto short_sched = s;
    short_sched.steps.pop_back();
    CHECK_THROWS_AS(codegen::emit_program(q, p, short_sched, cfg), CodegenError);
    auto pf = s;
    pf.steps[0].prefetched = true;
    expect_step(pf, "0");
}

TEST_CASE("every plan layer is reported exactly once") {
    auto cfg = arch::j3dai_default();
    for (int v = 0; v < ir::kTinyCnnVariants; ++v) {
        CAPTURE(v);
        auto q = pipeline::quantize_random(ir::build_tiny_cnn(v), 4);
        auto p = map::plan_mapping(q, cfg);
        auto r = run(ir::build_tiny_cnn(v), 4, cfg);
        std::vector<std::string> want;
        for (const auto& lp : p.layers)
            if (std::find(want.begin(), want.end(), lp.layer) == want.end()) want.push_back(lp.layer);
        std::vector<std::string> got;
        for (const auto& l : r.report.layers) got.push_back(l.name);
        std::sort(want.begin(), want.end());
        std::sort(got.begin(), got.end());
        CHECK(got == want);
    }
}

namespace {

// Bytes times enabled columns, per cluster, split into flat (parameter) and tensor moves.
struct Traffic {
    std::map<int, std::uint64_t> flat, tensor;
};

Traffic emitted(const isa::Program& prog) {
    Traffic t;
    for (const auto& [c, code] : prog.clusters)
        for (const auto& in : code) {
            if (in.op != isa::Op::Dmpa) continue;
            if (in.a[1] == 0) {
                t.flat[c] += static_cast<std::uint64_t>(in.a[3]) * std::popcount(static_cast<std::uint64_t>(in.a[4]));
            } else {
                auto per_col = static_cast<std::uint64_t>(in.a[9] * in.a[10] * in.a[11]);
                t.tensor[c] += per_col * std::popcount(static_cast<std::uint64_t>(in.a[12]));
            }
        }
    return t;
}

Traffic planned(const map::MappingPlan& p) {
    Traffic t;
    for (const auto& lp : p.layers)
        for (const auto& x : lp.transfers) {
            auto v = x.bytes * std::popcount(x.columns);
            if (x.kind == map::TransferKind::Params) t.flat[x.cluster] += v;
            else t.tensor[x.cluster] += v;
        }
    return t;
}

} // namespace

TEST_CASE("emitted DMPA traffic equals the plan's transfer list") {
    for (const auto& cfg : {arch::j3dai_default(), small_config()}) {
        for (int v = 0; v < 3; ++v) {
            CAPTURE(v);
            auto q = pipeline::quantize_random(ir::build_tiny_cnn(v), 6);
            for (bool prefetch : {true, false}) {
                auto p = map::plan_mapping(q, cfg);
                auto s = sched::build_schedule(p, cfg, {.prefetch = prefetch});
                auto c = codegen::emit_program(q, p, s, cfg);
                auto e = emitted(c.program);
                auto w = planned(p);
                std::erase_if(e.flat, [](const auto& kv) { return kv.second == 0; });
                std::erase_if(e.tensor, [](const auto& kv) { return kv.second == 0; });
                CHECK(e.flat == w.flat);
                CHECK(e.tensor == w.tensor);
            }
        }
    }
}

TEST_CASE("simulated cycles track the plan estimate") {
    auto cfg = arch::j3dai_default();
    for (int v = 0; v < ir::kTinyCnnVariants; ++v) {
        CAPTURE(v);
        auto q = pipeline::quantize_random(ir::build_tiny_cnn(v), 8);
        auto p = map::plan_mapping(q, cfg);
        auto r = pipeline::check_graph(q, pipeline::random_inputs(q, 9), cfg);
        double est = static_cast<double>(map::estimate_cycles(p, cfg));
        CHECK(static_cast<double>(r.sim_cycles) >= 0.8 * est);
        CHECK(static_cast<double>(r.sim_cycles) <= 1.2 * est);
        std::uint64_t macs = 0;
        for (const auto& lp : p.layers) macs += lp.macs;
        CHECK(r.sim_cycles >= map::ideal_compute_cycles(macs, cfg.num_clusters, cfg));
    }
}
