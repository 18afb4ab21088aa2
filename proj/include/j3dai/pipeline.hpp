#pragma once

#include <cstdint>
#include <string>

#include "j3dai/codegen.hpp"

namespace j3dai::pipeline {

// Calibrates on `samples` uniform [0, 1) inputs drawn from `seed` and quantizes.
ir::Graph quantize_random(const ir::Graph& g, std::uint64_t seed, int samples = 4);

// One uint8 value per graph input, quantized from a uniform [0, 1) draw.
oracle::Values random_inputs(const ir::Graph& quantized, std::uint64_t seed);

struct Check {
    bool bit_exact = false;
    std::string mismatch; // first differing output element, empty on a match
    std::uint64_t sim_cycles = 0;
    std::uint64_t expected_cycles = 0;
    sim::SimReport report;
};

// Compiles, simulates and compares every graph output with the integer oracle.
Check check_graph(const ir::Graph& quantized, const oracle::Values& inputs, const arch::HardwareConfig& cfg, const sched::Options& opt = {});

} // namespace j3dai::pipeline
