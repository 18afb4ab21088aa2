#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "j3dai/arch.hpp"
#include "j3dai/ir.hpp"
#include "j3dai/isa.hpp"

namespace j3dai::sim {

// Byte contents of L2 and host data memory.
struct MemoryImage {
    std::vector<std::uint8_t> l2;
    std::vector<std::uint8_t> hdm;

    static MemoryImage blank(const arch::HardwareConfig& cfg);
    // Container with two uint8 tensors named "l2" and "hdm".
    ir::Container to_container() const;
    static MemoryImage from_container(const ir::Container& c);

    bool operator==(const MemoryImage&) const = default;
};

struct Stalls {
    std::uint64_t bank_conflict = 0;
    std::uint64_t dmpa_wait = 0;
    std::uint64_t dma_wait = 0;
    std::uint64_t sync = 0;
    bool operator==(const Stalls&) const = default;
};

struct LayerStat {
    std::string name;
    // Longest time any cluster spent inside the layer's MARK span.
    std::uint64_t cycles = 0;
    std::uint64_t mac_ops = 0;
    bool operator==(const LayerStat&) const = default;
};

struct ClusterStat {
    std::uint64_t cycles = 0;       // local clock at the last HALT
    std::uint64_t issue_cycles = 0; // cycles spent issuing instructions
    std::uint64_t dmpa_busy = 0;
    std::uint64_t mac_ops = 0;
    Stalls stalls;
    bool operator==(const ClusterStat&) const = default;
};

struct SimReport {
    std::uint64_t total_cycles = 0;
    std::uint64_t mac_ops_executed = 0;
    std::uint64_t instructions = 0;
    // Engine occupancy; cluster engines report the busiest cluster.
    std::uint64_t compute_busy = 0;
    std::uint64_t dmpa_busy = 0;
    std::uint64_t dma_busy = 0;
    // Summed over clusters.
    Stalls stalls;
    std::vector<LayerStat> layers;
    std::vector<ClusterStat> clusters;
    bool accumulator_overflow = false;

    bool operator==(const SimReport&) const = default;
};

struct RunOptions {
    // 0 disables the watchdog.
    std::uint64_t cycle_cap = 0;
    // Timing-only switch; never affects memory contents.
    bool model_bank_conflicts = true;
};

struct Result {
    MemoryImage memory;
    SimReport report;
};

Result run(const isa::Program& p, const arch::HardwareConfig& cfg, const MemoryImage& init, const RunOptions& opt = {});

double mac_efficiency(std::uint64_t mac_ops, std::uint64_t cycles, const arch::HardwareConfig& cfg);
double mac_efficiency(const SimReport& r, const arch::HardwareConfig& cfg);

nlohmann::json to_json(const SimReport& r);
// Inverse of to_json. Throws ValidationError on a malformed document.
SimReport report_from_json(const nlohmann::json& j);

} // namespace j3dai::sim
