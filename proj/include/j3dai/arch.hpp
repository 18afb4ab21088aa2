#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace j3dai::arch {

enum class Die { Bottom, Middle };

struct L2Partition {
    std::string name;
    std::uint64_t bytes = 0;
    Die die = Die::Bottom;

    bool operator==(const L2Partition&) const = default;
};

// Machine description shared by every other module. Immutable once built.
//
// The NCB SRAM geometry (ncb_sram_banks, ncb_bank_bytes) is an assumed
// default, not a measured property of the silicon.
struct HardwareConfig {
    std::uint32_t num_clusters = 6;
    std::uint32_t ncb_per_cluster = 16;
    std::uint32_t pes_per_ncb = 8;
    std::uint32_t ncb_sram_banks = 4;
    std::uint32_t ncb_bank_bytes = 4096;
    std::uint32_t ncb_bank_width_bits = 64;
    std::vector<L2Partition> l2_partitions;
    std::uint32_t interconnect_width_bits = 64;
    std::uint32_t dmpa_width_bits = 1024;
    std::uint64_t host_imem_bytes = 256 * 1024;
    std::uint64_t host_dmem_bytes = 256 * 1024;
    double clock_hz = 2.0e8;
    double chip_area_mm2 = 48.0;

    bool operator==(const HardwareConfig&) const = default;

    std::uint64_t l2_bytes() const;
    std::uint32_t ncb_sram_bytes() const { return ncb_sram_banks * ncb_bank_bytes; }
    std::uint32_t total_ncbs() const { return num_clusters * ncb_per_cluster; }
    // Bytes moved per NCB column per DMPA cycle.
    std::uint32_t dmpa_row_bytes() const { return ncb_bank_width_bits / 8; }
};

HardwareConfig j3dai_default();

std::uint64_t peak_macs_per_cycle(const HardwareConfig& cfg);

// Empty when every invariant holds; otherwise one message per failed rule,
// each starting with the field name.
std::vector<std::string> validate(const HardwareConfig& cfg);

// Throws ValidationError listing every violation.
void require_valid(const HardwareConfig& cfg);

nlohmann::json to_json(const HardwareConfig& cfg);
// Strict: unknown or missing fields raise ValidationError.
HardwareConfig from_json(const nlohmann::json& j);

HardwareConfig load_config(const std::string& path);
void save_config(const HardwareConfig& cfg, const std::string& path);

// Engine occupancy of a transfer, in cycles.
std::uint64_t dmpa_cycles(std::uint64_t bits, const HardwareConfig& cfg);
std::uint64_t dma_cycles(std::uint64_t bits, const HardwareConfig& cfg);

} // namespace j3dai::arch
