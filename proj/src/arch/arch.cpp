#include "j3dai/arch.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "j3dai/error.hpp"

namespace j3dai::arch {

using nlohmann::json;

namespace {

constexpr std::uint64_t kMiB = 1024ull * 1024ull;

const char* die_name(Die d) { return d == Die::Bottom ? "bottom" : "middle"; }

Die die_from(const std::string& s) {
    if (s == "bottom") return Die::Bottom;
    if (s == "middle") return Die::Middle;
    throw ValidationError("l2_partitions.die: expected \"bottom\" or \"middle\", got \"" + s + "\"");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw ValidationError(where + ": unknown field \"" + it.key() + "\"");
    }
    for (const auto& k : allowed) {
        if (!j.contains(k)) throw ValidationError(where + ": missing field \"" + k + "\"");
    }
}

template <typename T>
T get_field(const json& j, const std::string& key) {
    const json& v = j.at(key);
    if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ValidationError(key + ": expected a number");
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ValidationError(key + ": expected an integer");
        if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ValidationError(key + " must be positive");
    } else {
        if (!v.is_string()) throw ValidationError(key + ": expected a string");
    }
    return v.get<T>();
}

} // namespace

std::uint64_t HardwareConfig::l2_bytes() const {
    std::uint64_t total = 0;
    for (const auto& p : l2_partitions) total += p.bytes;
    return total;
}

HardwareConfig j3dai_default() {
    HardwareConfig cfg;
    cfg.l2_partitions = {
        {"l2_bottom", 3 * kMiB, Die::Bottom},
        {"l2_middle", 2 * kMiB, Die::Middle},
    };
    return cfg;
}

std::uint64_t peak_macs_per_cycle(const HardwareConfig& cfg) {
    return std::uint64_t{cfg.num_clusters} * cfg.ncb_per_cluster * cfg.pes_per_ncb;
}

std::vector<std::string> validate(const HardwareConfig& cfg) {
    std::vector<std::string> out;
    auto positive = [&](const char* name, double v) {
        if (!(v > 0)) out.push_back(std::string(name) + " must be positive");
    };
    positive("num_clusters", cfg.num_clusters);
    positive("ncb_per_cluster", cfg.ncb_per_cluster);
    positive("pes_per_ncb", cfg.pes_per_ncb);
    positive("ncb_sram_banks", cfg.ncb_sram_banks);
    positive("ncb_bank_bytes", cfg.ncb_bank_bytes);
    positive("ncb_bank_width_bits", cfg.ncb_bank_width_bits);
    positive("interconnect_width_bits", cfg.interconnect_width_bits);
    positive("dmpa_width_bits", cfg.dmpa_width_bits);
    positive("host_imem_bytes", static_cast<double>(cfg.host_imem_bytes));
    positive("host_dmem_bytes", static_cast<double>(cfg.host_dmem_bytes));
    positive("clock_hz", cfg.clock_hz);
    positive("chip_area_mm2", cfg.chip_area_mm2);
    if (cfg.l2_partitions.empty()) out.push_back("l2_partitions must not be empty");
    for (const auto& p : cfg.l2_partitions) {
        if (p.bytes == 0) out.push_back("l2_partitions[" + p.name + "].bytes must be positive");
        if (p.name.empty()) out.push_back("l2_partitions.name must not be empty");
    }
    if (cfg.ncb_bank_width_bits % 8 != 0) out.push_back("ncb_bank_width_bits must be a multiple of 8");
    if (std::uint64_t{cfg.ncb_per_cluster} * cfg.ncb_bank_width_bits != cfg.dmpa_width_bits) {
        std::ostringstream os;
        os << "dmpa_width_bits must equal ncb_per_cluster x ncb_bank_width_bits (" << cfg.ncb_per_cluster << " x "
           << cfg.ncb_bank_width_bits << " != " << cfg.dmpa_width_bits << ")";
        out.push_back(os.str());
    }
    return out;
}

void require_valid(const HardwareConfig& cfg) {
    auto v = validate(cfg);
    if (v.empty()) return;
    std::string msg = "invalid hardware config:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ValidationError(msg);
}

json to_json(const HardwareConfig& cfg) {
    json parts = json::array();
    for (const auto& p : cfg.l2_partitions) {
        parts.push_back({{"name", p.name}, {"bytes", p.bytes}, {"die", die_name(p.die)}});
    }
    return {
        {"num_clusters", cfg.num_clusters},
        {"ncb_per_cluster", cfg.ncb_per_cluster},
        {"pes_per_ncb", cfg.pes_per_ncb},
        {"ncb_sram_banks", cfg.ncb_sram_banks},
        {"ncb_bank_bytes", cfg.ncb_bank_bytes},
        {"ncb_bank_width_bits", cfg.ncb_bank_width_bits},
        {"l2_partitions", parts},
        {"interconnect_width_bits", cfg.interconnect_width_bits},
        {"dmpa_width_bits", cfg.dmpa_width_bits},
        {"host_imem_bytes", cfg.host_imem_bytes},
        {"host_dmem_bytes", cfg.host_dmem_bytes},
        {"clock_hz", cfg.clock_hz},
        {"chip_area_mm2", cfg.chip_area_mm2},
    };
}

HardwareConfig from_json(const json& j) {
    check_keys(j,
               {"num_clusters", "ncb_per_cluster", "pes_per_ncb", "ncb_sram_banks", "ncb_bank_bytes",
                "ncb_bank_width_bits", "l2_partitions", "interconnect_width_bits", "dmpa_width_bits",
                "host_imem_bytes", "host_dmem_bytes", "clock_hz", "chip_area_mm2"},
               "config");
    HardwareConfig cfg;
    cfg.num_clusters = get_field<std::uint32_t>(j, "num_clusters");
    cfg.ncb_per_cluster = get_field<std::uint32_t>(j, "ncb_per_cluster");
    cfg.pes_per_ncb = get_field<std::uint32_t>(j, "pes_per_ncb");
    cfg.ncb_sram_banks = get_field<std::uint32_t>(j, "ncb_sram_banks");
    cfg.ncb_bank_bytes = get_field<std::uint32_t>(j, "ncb_bank_bytes");
    cfg.ncb_bank_width_bits = get_field<std::uint32_t>(j, "ncb_bank_width_bits");
    cfg.interconnect_width_bits = get_field<std::uint32_t>(j, "interconnect_width_bits");
    cfg.dmpa_width_bits = get_field<std::uint32_t>(j, "dmpa_width_bits");
    cfg.host_imem_bytes = get_field<std::uint64_t>(j, "host_imem_bytes");
    cfg.host_dmem_bytes = get_field<std::uint64_t>(j, "host_dmem_bytes");
    cfg.clock_hz = get_field<double>(j, "clock_hz");
    cfg.chip_area_mm2 = get_field<double>(j, "chip_area_mm2");
    const json& parts = j.at("l2_partitions");
    if (!parts.is_array()) throw ValidationError("l2_partitions: expected an array");
    for (const auto& p : parts) {
        check_keys(p, {"name", "bytes", "die"}, "l2_partitions[]");
        cfg.l2_partitions.push_back(
            {get_field<std::string>(p, "name"), get_field<std::uint64_t>(p, "bytes"), die_from(p.at("die").get<std::string>())});
    }
    return cfg;
}

HardwareConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
    return from_json(j);
}

void save_config(const HardwareConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write config file " + path);
    out << to_json(cfg).dump(2) << "\n";
}

std::uint64_t dmpa_cycles(std::uint64_t bits, const HardwareConfig& cfg) {
    return (bits + cfg.dmpa_width_bits - 1) / cfg.dmpa_width_bits;
}

std::uint64_t dma_cycles(std::uint64_t bits, const HardwareConfig& cfg) {
    return (bits + cfg.interconnect_width_bits - 1) / cfg.interconnect_width_bits;
}

} // namespace j3dai::arch
