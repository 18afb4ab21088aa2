#include <algorithm>

#include "j3dai/mapper.hpp"

namespace j3dai::map {

namespace {

std::string where(const LayerPlan& lp) {
    std::string s = "layer \"" + lp.layer + "\"";
    if (lp.kernel == Kernel::Copy) s += " part " + std::to_string(lp.part);
    return s;
}

const char* transfer_region(TransferKind k, int block) {
    switch (k) {
    case TransferKind::Input: return "in";
    case TransferKind::Input2: return "in2";
    case TransferKind::Output: return "out";
    case TransferKind::Params: return block % 2 ? "buf1" : "buf0";
    }
    return "";
}

} // namespace

FitReport check_fit(const MappingPlan& p, const arch::HardwareConfig& cfg) {
    FitReport r;
    std::uint64_t sram = cfg.ncb_sram_bytes();
    std::uint64_t bank = cfg.ncb_bank_bytes;
    r.bank_occupancy_pct.assign(cfg.ncb_sram_banks, 0.0);
    double weighted = 0, macs = 0;
    for (const auto& lp : p.layers) {
        std::vector<std::uint64_t> used(cfg.ncb_sram_banks, 0);
        for (std::size_t i = 0; i < lp.regions.size(); ++i) {
            const auto& a = lp.regions[i];
            std::uint64_t end = static_cast<std::uint64_t>(a.offset) + a.bytes;
            if (end > sram) {
                r.violations.push_back(where(lp) + ": region " + a.name + " [" + std::to_string(a.offset) + ", " + std::to_string(end) + ") exceeds the " + std::to_string(sram) + "-byte NCB SRAM");
                continue;
            }
            for (std::size_t j = i + 1; j < lp.regions.size(); ++j) {
                const auto& b = lp.regions[j];
                if (a.offset < b.offset + b.bytes && b.offset < end) r.violations.push_back(where(lp) + ": regions " + a.name + " and " + b.name + " overlap");
            }
            for (std::uint64_t k = 0; k < cfg.ncb_sram_banks; ++k) {
                std::uint64_t lo = std::max<std::uint64_t>(a.offset, k * bank), hi = std::min(end, (k + 1) * bank);
                if (hi > lo) used[k] += hi - lo;
            }
        }
        for (std::size_t k = 0; k < used.size(); ++k) r.bank_occupancy_pct[k] = std::max(r.bank_occupancy_pct[k], 100.0 * static_cast<double>(used[k]) / static_cast<double>(bank));
        for (const auto& t : lp.transfers) {
            if (t.columns >> cfg.ncb_per_cluster) r.violations.push_back(where(lp) + ": transfer column mask names a missing NCB column");
            if (t.cluster < 0 || t.cluster >= static_cast<int>(cfg.num_clusters)) r.violations.push_back(where(lp) + ": transfer on missing cluster " + std::to_string(t.cluster));
            const char* name = transfer_region(t.kind, lp.tile.double_buffer ? t.block : 0);
            const SramRegion* reg = lp.region(name);
            if (!reg) r.violations.push_back(where(lp) + ": " + transfer_kind_name(t.kind) + " transfer has no " + name + " region");
            else if (t.bytes > reg->bytes) r.violations.push_back(where(lp) + ": " + transfer_kind_name(t.kind) + " transfer of " + std::to_string(t.bytes) + " bytes overflows region " + name);
        }
        if (lp.macs && lp.waves) {
            // Useful output elements over the lane slots the waves provide.
            double useful = static_cast<double>(lp.geo.out_h) * lp.geo.out_w * lp.geo.out_c;
            double slots = static_cast<double>(lp.waves) * cfg.total_ncbs() * lp.tile.ht * lp.tile.wt * lp.tile.gt * cfg.pes_per_ncb;
            weighted += static_cast<double>(lp.macs) * useful / slots;
            macs += static_cast<double>(lp.macs);
        }
    }
    if (p.param_bytes > cfg.l2_bytes()) r.violations.push_back("parameters need " + std::to_string(p.param_bytes) + " bytes of L2, only " + std::to_string(cfg.l2_bytes()) + " exist");
    r.pe_utilization_pct = macs > 0 ? 100.0 * weighted / macs : 0.0;
    return r;
}

} // namespace j3dai::map
