#include "j3dai/pipeline.hpp"

#include "j3dai/quant.hpp"

namespace j3dai::pipeline {

ir::Graph quantize_random(const ir::Graph& g, std::uint64_t seed, int samples) {
    return quant::quantize(g, quant::random_samples(g.tensor(g.inputs.at(0)).shape, samples, seed));
}

oracle::Values random_inputs(const ir::Graph& q, std::uint64_t seed) {
    oracle::Values v;
    for (std::size_t i = 0; i < q.inputs.size(); ++i) {
        const auto& t = q.tensor(q.inputs[i]);
        auto x = quant::random_samples(t.shape, 1, seed + i)[0];
        v[t.name] = quant::quantize_tensor(x, *t.quant);
    }
    return v;
}

Check check_graph(const ir::Graph& q, const oracle::Values& inputs, const arch::HardwareConfig& cfg, const sched::Options& opt) {
    Check r;
    auto compiled = codegen::compile(q, cfg, opt);
    auto res = sim::run(compiled.program, cfg, codegen::initial_image(compiled, inputs, cfg));
    auto got = codegen::read_outputs(compiled, res.memory);
    auto want = oracle::outputs_of(q, oracle::run_int(q, inputs));
    r.bit_exact = true;
    for (const auto& [name, t] : want) {
        const auto& a = t.as<std::uint8_t>();
        const auto& b = got.at(name).as<std::uint8_t>();
        for (std::size_t i = 0; i < a.size() && r.bit_exact; ++i)
            if (a[i] != b[i]) {
                r.bit_exact = false;
                r.mismatch = name + "[" + std::to_string(i) + "]: oracle " + std::to_string(a[i]) + ", simulated " + std::to_string(b[i]);
            }
    }
    r.sim_cycles = res.report.total_cycles;
    r.expected_cycles = compiled.expected_cycles;
    r.report = std::move(res.report);
    return r;
}

} // namespace j3dai::pipeline
