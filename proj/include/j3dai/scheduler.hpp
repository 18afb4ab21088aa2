#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "j3dai/arch.hpp"
#include "j3dai/mapper.hpp"

namespace j3dai::sched {

struct Step {
    int layer = 0; // index into MappingPlan::layers
    std::uint64_t start = 0;
    std::uint64_t duration = 0;
    // The first parameter block of wave 0 was loaded during the previous step.
    bool prefetched = false;
    // NCB SRAM offset that receives the next step's first parameter block, or -1.
    std::int64_t prefetch_to = -1;
    // Output shares L2 with an input: a barrier separates the loads from the stores.
    bool alias_barrier = false;
    bool operator==(const Step&) const = default;
};

struct Options {
    // Load the next layer's first parameter block while this layer computes.
    bool prefetch = true;
    // Steps examined ahead when choosing among ready layers.
    int lookahead = 2;
};

struct Schedule {
    std::vector<Step> steps;
    map::ActivationLayout activations;
    std::uint64_t host_in_cycles = 0;  // input DMA plus LAUNCH
    std::uint64_t host_out_cycles = 0; // output DMA
    std::uint64_t makespan = 0;

    std::vector<int> order() const;
    bool operator==(const Schedule&) const;
};

// List scheduling over the layer dependency graph. Throws MappingError when
// the activations do not fit L2.
Schedule build_schedule(const map::MappingPlan& p, const arch::HardwareConfig& cfg, const Options& opt = {});

// SRAM offset for prefetching `next`'s first block while `cur` runs: next's
// buf0 when its banks are untouched by `cur`, otherwise the first bank-aligned
// spot clear of both layers' banks. `cur_block0` is where cur's own first
// block was prefetched to (-1 if it was not); those banks are avoided too.
// -1 when no spot exists.
std::int64_t prefetch_target(const map::LayerPlan& cur, const map::LayerPlan& next, const arch::HardwareConfig& cfg, std::int64_t cur_block0 = -1);

nlohmann::json to_json(const Schedule& s);
Schedule schedule_from_json(const nlohmann::json& j);

} // namespace j3dai::sched
