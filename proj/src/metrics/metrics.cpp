#include "j3dai/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "j3dai/error.hpp"

namespace j3dai::metrics {

double latency_ms(std::uint64_t cycles, double clock_hz) {
    if (!(clock_hz > 0)) throw ValidationError("clock_hz must be positive");
    return 1000.0 * static_cast<double>(cycles) / clock_hz;
}

double rescale_latency_ms(double ms, double from_hz, double to_hz) {
    if (!(from_hz > 0) || !(to_hz > 0)) throw ValidationError("clock frequencies must be positive");
    return ms * from_hz / to_hz;
}

double efficiency_pct(std::uint64_t macs, std::uint64_t cycles, std::uint64_t peak) {
    if (cycles == 0 || peak == 0) throw ValidationError("efficiency needs positive cycles and peak");
    return 100.0 * static_cast<double>(macs) / (static_cast<double>(cycles) * static_cast<double>(peak));
}

double cycles_at_efficiency(std::uint64_t macs, double eff, std::uint64_t peak) {
    if (!(eff > 0) || peak == 0) throw ValidationError("efficiency and peak must be positive");
    return 100.0 * static_cast<double>(macs) / (eff * static_cast<double>(peak));
}

PowerModel fit_power_model(PowerPoint a, PowerPoint b) {
    if (a.fps == b.fps) throw ValidationError("power model needs two distinct frame rates");
    PowerModel m;
    m.energy_per_frame_mj = (b.mw - a.mw) / (b.fps - a.fps);
    m.idle_mw = a.mw - m.energy_per_frame_mj * a.fps;
    if (m.energy_per_frame_mj < 0 || m.idle_mw < 0) throw ValidationError("power points imply a negative energy or idle term");
    return m;
}

double predict_power(const PowerModel& m, double fps) {
    if (fps < 0) throw ValidationError("frame rate must be non-negative");
    return m.idle_mw + m.energy_per_frame_mj * fps;
}

double tops_per_watt(std::uint64_t macs, double fps, double power_mw) {
    if (!(power_mw > 0)) throw ValidationError("power must be positive");
    double ops_per_s = 2.0 * static_cast<double>(macs) * fps;
    return ops_per_s / 1e12 / (power_mw / 1000.0);
}

double area_efficiency(double tops, double area_mm2) {
    if (!(area_mm2 > 0)) throw ValidationError("area must be positive");
    return 1000.0 * tops / area_mm2;
}

const std::vector<ReferenceRow>& reference_rows() {
    static const std::vector<ReferenceRow> rows{
        {"MobileNetV1", 557, 192, 256, 4.96, 47.6, 291.2, 0.77, 76.8},
        {"MobileNetV2", 289, 192, 256, 4.04, 30.5, 186.7, 0.62, 46.6},
    };
    return rows;
}

const ReferenceRow& reference_row(const std::string& model) {
    for (const auto& r : reference_rows())
        if (r.model == model) return r;
    throw ValidationError("no reference figures for model \"" + model + "\"");
}

PowerModel reference_power_model(const std::string& model) {
    const auto& r = reference_row(model);
    return fit_power_model({30, r.power_30fps_mw}, {200, r.power_200fps_mw});
}

const std::vector<ComparisonRow>& comparison_rows() {
    static const std::vector<ComparisonRow> rows{
        {"2-layer stacked sensor, 2021", 262.5, 2304, 13.4, 122.5, 3.70, 0.98, 124, 7.9},
        {"3-layer stacked sensor, 2024", 219.6, 1024, 59.9, 90.4, 1.87, 1.33, 262, 5.1},
        {"J3DAI", 200, 768, 46.6, 186.7, 3.01, 0.62, 48, 12.9},
    };
    return rows;
}

Report make_report(const std::string& workload, std::uint64_t macs, int in_h, int in_w, const sim::SimReport& s, const arch::HardwareConfig& cfg,
                   const PowerModel& power) {
    Report r;
    r.workload = workload;
    r.macs = macs;
    r.in_h = in_h;
    r.in_w = in_w;
    r.cycles = s.total_cycles;
    r.clock_hz = cfg.clock_hz;
    r.peak_macs_per_cycle = arch::peak_macs_per_cycle(cfg);
    r.latency_ms = latency_ms(s.total_cycles, cfg.clock_hz);
    r.efficiency_pct = s.total_cycles ? efficiency_pct(macs, s.total_cycles, r.peak_macs_per_cycle) : 0;
    r.max_fps = r.latency_ms > 0 ? 1000.0 / r.latency_ms : 0;
    r.power = power;
    r.power_30fps_mw = predict_power(power, 30);
    r.power_200fps_mw = predict_power(power, 200);
    r.tops_per_watt = r.power_200fps_mw > 0 ? tops_per_watt(macs, 200, r.power_200fps_mw) : 0;
    r.gops_w_mm2 = area_efficiency(r.tops_per_watt, cfg.chip_area_mm2);
    r.stalls = s.stalls;
    for (const auto& l : s.layers) r.layers.push_back({l.name, l.cycles, l.mac_ops});
    return r;
}

nlohmann::json to_json(const Report& r) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : r.layers) layers.push_back({{"name", l.name}, {"cycles", l.cycles}, {"mac_ops", l.mac_ops}});
    return {{"workload", r.workload},
            {"macs", r.macs},
            {"input", {r.in_h, r.in_w}},
            {"total_cycles", r.cycles},
            {"clock_hz", r.clock_hz},
            {"peak_macs_per_cycle", r.peak_macs_per_cycle},
            {"latency_ms", r.latency_ms},
            {"mac_efficiency_pct", r.efficiency_pct},
            {"max_fps", r.max_fps},
            {"power_model", {{"energy_per_frame_mj", r.power.energy_per_frame_mj}, {"idle_mw", r.power.idle_mw}}},
            {"power_30fps_mw", r.power_30fps_mw},
            {"power_200fps_mw", r.power_200fps_mw},
            {"tops_per_watt", r.tops_per_watt},
            {"gops_per_watt_mm2", r.gops_w_mm2},
            {"stalls", {{"bank_conflict", r.stalls.bank_conflict}, {"dmpa_wait", r.stalls.dmpa_wait}, {"dma_wait", r.stalls.dma_wait}, {"sync", r.stalls.sync}}},
            {"layers", layers}};
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

} // namespace

std::string to_text(const Report& r) {
    std::ostringstream os;
    auto row = [&](const std::string& k, const std::string& v) {
        os << k << std::string(k.size() < 26 ? 26 - k.size() : 1, ' ') << v << "\n";
    };
    row("Model", r.workload);
    row("MMACs", fmt("%.2f", static_cast<double>(r.macs) / 1e6));
    row("Image Input", std::to_string(r.in_w) + "x" + std::to_string(r.in_h));
    row("Cycles", std::to_string(r.cycles));
    row("Latency @" + fmt("%g", r.clock_hz / 1e6) + "MHz", fmt("%.2f ms", r.latency_ms));
    row("Power @30FPS", fmt("%.1f mW", r.power_30fps_mw));
    row("Power @200FPS", fmt("%.1f mW", r.power_200fps_mw));
    row("Power efficiency", fmt("%.2f TOPs/W", r.tops_per_watt));
    row("Efficiency per area", fmt("%.1f GOPS/W/mm2", r.gops_w_mm2));
    row("MAC/Cycle efficiency", fmt("%.1f%%", r.efficiency_pct));
    row("Bank-conflict stalls", std::to_string(r.stalls.bank_conflict));
    if (!r.layers.empty()) {
        os << "\n";
        std::size_t w = 5;
        for (const auto& l : r.layers) w = std::max(w, l.name.size());
        os << "layer" << std::string(w - 5 + 2, ' ') << "cycles      mac_ops\n";
        for (const auto& l : r.layers) {
            std::string c = std::to_string(l.cycles), m = std::to_string(l.mac_ops);
            os << l.name << std::string(w - l.name.size() + 2, ' ') << std::string(c.size() < 10 ? 10 - c.size() : 0, ' ') << c << "  "
               << std::string(m.size() < 11 ? 11 - m.size() : 0, ' ') << m << "\n";
        }
    }
    return os.str();
}

} // namespace j3dai::metrics
