#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "j3dai/arch.hpp"
#include "j3dai/ir.hpp"
#include "j3dai/isa.hpp"
#include "j3dai/mapper.hpp"
#include "j3dai/oracle.hpp"
#include "j3dai/scheduler.hpp"
#include "j3dai/sim.hpp"

namespace j3dai::codegen {

// Where a graph input or output lives: NHWC bytes in host data memory and in L2.
struct HostBinding {
    std::string tensor;
    std::uint64_t hdm_addr = 0;
    std::uint64_t l2_addr = 0;
    int h = 1, w = 1, c = 1;
    double scale = 1.0;
    std::int32_t zero_point = 0;
    std::uint64_t bytes() const { return static_cast<std::uint64_t>(h) * w * c; }
    bool operator==(const HostBinding&) const = default;
};

struct Compiled {
    isa::Program program;
    // Parameter blocks, resident in L2 from address 0 before the host stream starts.
    std::vector<std::uint8_t> params;
    std::vector<HostBinding> inputs;
    std::vector<HostBinding> outputs;
    // Cycle count the schedule predicts for the whole program.
    std::uint64_t expected_cycles = 0;

    std::string assembly() const { return isa::disassemble(program); }
    nlohmann::json manifest() const;
    // Bindings and expected cycles only; program and params stay empty.
    static Compiled from_manifest(const nlohmann::json& j);
    bool operator==(const Compiled&) const = default;
};

// Lowers a scheduled plan to one host stream and one stream per cluster.
// The graph must be quantized; throws CodegenError otherwise.
Compiled emit_program(const ir::Graph& g, const map::MappingPlan& p, const sched::Schedule& s, const arch::HardwareConfig& cfg);

// plan_mapping, build_schedule and emit_program in one call.
Compiled compile(const ir::Graph& g, const arch::HardwareConfig& cfg, const sched::Options& opt = {});

// Per lane group: int32 bias with the input zero point folded in, then one
// weight word (one int8 per lane) per reduction step.
std::vector<std::uint8_t> pack_params(const ir::Graph& g, const map::MappingPlan& p, const arch::HardwareConfig& cfg);

// Parameters in L2 and the NCHW uint8 inputs, converted to NHWC, in host memory.
sim::MemoryImage initial_image(const Compiled& c, const oracle::Values& inputs, const arch::HardwareConfig& cfg);

// Graph outputs as NCHW uint8 tensors, read back from host memory.
oracle::Values read_outputs(const Compiled& c, const sim::MemoryImage& m);

} // namespace j3dai::codegen
