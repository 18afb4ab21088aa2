#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "j3dai/ir.hpp"

namespace j3dai::quant {

struct TensorStats {
    float min = 0.0f;
    float max = 0.0f;
    std::uint64_t sample_count = 0;
};

using CalibStats = std::map<std::string, TensorStats>;
using ParamMap = std::map<std::string, ir::QuantParams>;

// Runs the float oracle on every sample and records per-tensor extrema of
// all activation tensors (graph inputs included).
CalibStats calibrate(const ir::Graph& g, const std::vector<ir::Tensor>& samples);

// Merges two stat sets; associative and commutative.
CalibStats merge(const CalibStats& a, const CalibStats& b);

std::int64_t round_half_away(double x);

// Symmetric signed 8-bit: scale = max|w| / 127, zero point 0.
ir::QuantParams weight_params(double max_abs);
// Asymmetric unsigned 8-bit over [min, max]. Degenerate range gives scale 1, zp 0.
ir::QuantParams activation_params(double min, double max);

// Fixed-point encoding of a positive real multiplier M = m0 * 2^-(30 + shift).
ir::Requant derive_requant(double multiplier);
double requant_value(const ir::Requant& r);

// round_half_away(acc * m0 * 2^-(30 + shift)) without offset or clamping.
std::int64_t scale_acc(std::int64_t acc, std::int64_t m0, int shift);
// clamp(scale_acc(acc, m0, shift) + zero_point, 0, 255).
std::uint8_t requantize(std::int64_t acc, std::int64_t m0, int shift, std::int32_t zero_point);
inline std::uint8_t requantize(std::int64_t acc, const ir::Requant& r, std::int32_t zero_point) {
    return requantize(acc, r.m0, r.shift, zero_point);
}

std::uint8_t quantize_value(double x, const ir::QuantParams& q);
double dequantize_value(std::int64_t q, const ir::QuantParams& p);
ir::Tensor quantize_tensor(const ir::Tensor& x, const ir::QuantParams& q);
ir::Tensor dequantize_tensor(const ir::Tensor& x, const ir::QuantParams& q);

// Integer clamp bounds of a ReLU / ReLU6 in the quantized domain.
std::pair<std::int32_t, std::int32_t> relu_bounds(ir::LayerKind kind, const ir::QuantParams& q);

// Weight, bias and activation parameters plus the per-layer requant data.
// Tensors fed through shape-only layers (ReLU, ReLU6, MaxPool,
// UpsampleNearest) share their input's parameters.
ParamMap derive_quant_params(const ir::Graph& g, const CalibStats& stats);

// Integer-typed copy of `g`: int8 weights, int32 biases, uint8 activations.
ir::Graph quantize_graph(const ir::Graph& g, const ParamMap& params);

// Convenience: calibrate on `samples`, derive, and quantize.
ir::Graph quantize(const ir::Graph& g, const std::vector<ir::Tensor>& samples);

// Deterministic uniform samples in [lo, hi) for calibration and tests.
std::vector<ir::Tensor> random_samples(const ir::Shape& shape, int count, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f);

} // namespace j3dai::quant
