#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "j3dai/arch.hpp"
#include "j3dai/sim.hpp"

namespace j3dai::metrics {

// 1000 * cycles / clock_hz. Throws ValidationError unless clock_hz > 0.
double latency_ms(std::uint64_t cycles, double clock_hz);
// Same work timed at another clock: pure cycle-time scaling.
double rescale_latency_ms(double ms, double from_hz, double to_hz);

// 100 * macs / (cycles * peak). Throws ValidationError for zero cycles or peak.
double efficiency_pct(std::uint64_t macs, std::uint64_t cycles, std::uint64_t peak_macs_per_cycle);
// Cycles a given efficiency implies for `macs`.
double cycles_at_efficiency(std::uint64_t macs, double efficiency_pct, std::uint64_t peak_macs_per_cycle);

struct PowerPoint {
    double fps = 0;
    double mw = 0;
};

// P(fps) = idle_mw + energy_per_frame_mj * fps.
struct PowerModel {
    double energy_per_frame_mj = 0;
    double idle_mw = 0;
    bool operator==(const PowerModel&) const = default;
};

// Exact line through both points. Throws ValidationError on equal fps or a
// negative energy or idle term.
PowerModel fit_power_model(PowerPoint a, PowerPoint b);
double predict_power(const PowerModel& m, double fps);

// Two operations (multiply and accumulate) per MAC.
double tops_per_watt(std::uint64_t macs_per_frame, double fps, double power_mw);
// GOPS/W/mm2 = 1000 * TOPS/W / area. Throws ValidationError unless area > 0.
double area_efficiency(double tops_per_watt, double area_mm2);

// Published per-model figures of the silicon at 200 MHz.
struct ReferenceRow {
    std::string model;
    std::uint64_t mmacs = 0;
    int in_h = 0, in_w = 0;
    double latency_ms = 0;
    double power_30fps_mw = 0;
    double power_200fps_mw = 0;
    double tops_per_watt = 0;
    double efficiency_pct = 0;
};
const std::vector<ReferenceRow>& reference_rows();
const ReferenceRow& reference_row(const std::string& model); // "MobileNetV1" or "MobileNetV2"
// Linear power model through the row's 30 and 200 fps points.
PowerModel reference_power_model(const std::string& model);

// Published comparison against other in-sensor processors (MobileNetV2 workload).
struct ComparisonRow {
    std::string name;
    double clock_mhz = 0;
    int macs = 0;
    double efficiency_pct = 0;
    double power_mw = 0;
    double time_ms_at_262_5mhz = 0;
    double tops_per_watt = 0;
    double area_mm2 = 0;
    double gops_w_mm2 = 0;
};
const std::vector<ComparisonRow>& comparison_rows();

struct LayerLine {
    std::string name;
    std::uint64_t cycles = 0;
    std::uint64_t mac_ops = 0;
};

struct Report {
    std::string workload;
    std::uint64_t macs = 0; // graph MACs, not padded lane work
    int in_h = 0, in_w = 0;
    std::uint64_t cycles = 0;
    double clock_hz = 0;
    std::uint64_t peak_macs_per_cycle = 0;
    double latency_ms = 0;
    double efficiency_pct = 0;
    double max_fps = 0;
    PowerModel power;
    double power_30fps_mw = 0;
    double power_200fps_mw = 0;
    double tops_per_watt = 0; // at 200 fps
    double gops_w_mm2 = 0;
    sim::Stalls stalls;
    std::vector<LayerLine> layers;
};

// Pure function of its arguments.
Report make_report(const std::string& workload, std::uint64_t macs, int in_h, int in_w, const sim::SimReport& r, const arch::HardwareConfig& cfg,
                   const PowerModel& power);

nlohmann::json to_json(const Report& r);
// Aligned rows: MMACs, input, latency, power points, power and MAC efficiency, then per-layer cycles.
std::string to_text(const Report& r);

} // namespace j3dai::metrics
