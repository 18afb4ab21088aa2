#include <algorithm>
#include <cmath>
#include <limits>

#include "j3dai/error.hpp"
#include "j3dai/quant.hpp"

namespace j3dai::quant {

std::int64_t round_half_away(double x) { return static_cast<std::int64_t>(std::round(x)); }

ir::QuantParams weight_params(double max_abs) {
    ir::QuantParams q;
    q.scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
    q.zero_point = 0;
    q.bitwidth = 8;
    q.is_signed = true;
    return q;
}

ir::QuantParams activation_params(double min, double max) {
    if (min > max) throw QuantError("activation range has min > max");
    ir::QuantParams q;
    if (max == min) return q;
    q.scale = (max - min) / 255.0;
    q.zero_point = static_cast<std::int32_t>(std::clamp<std::int64_t>(round_half_away(-min / q.scale), 0, 255));
    return q;
}

ir::Requant derive_requant(double multiplier) {
    if (!(multiplier > 0.0) || !std::isfinite(multiplier))
        throw QuantError("requant multiplier must be positive and finite, got " + std::to_string(multiplier));
    int e = 0;
    double f = std::frexp(multiplier, &e);
    ir::Requant r;
    r.m0 = round_half_away(std::ldexp(f, 31));
    r.shift = 1 - e;
    if (r.m0 == (std::int64_t{1} << 31)) {
        r.m0 = std::int64_t{1} << 30;
        r.shift -= 1;
    }
    if (r.shift < -29 || r.shift > 32)
        throw QuantError("requant multiplier " + std::to_string(multiplier) + " outside the encodable range");
    return r;
}

double requant_value(const ir::Requant& r) { return std::ldexp(static_cast<double>(r.m0), -(30 + r.shift)); }

std::int64_t scale_acc(std::int64_t acc, std::int64_t m0, int shift) {
    const int n = 30 + shift;
    __int128 prod = static_cast<__int128>(acc) * m0;
    bool neg = prod < 0;
    __int128 mag = neg ? -prod : prod;
    if (n > 0) mag = (mag + (static_cast<__int128>(1) << (n - 1))) >> n;
    else mag <<= -n;
    __int128 v = neg ? -mag : mag;
    constexpr auto lo = std::numeric_limits<std::int64_t>::min();
    constexpr auto hi = std::numeric_limits<std::int64_t>::max();
    return static_cast<std::int64_t>(std::clamp<__int128>(v, lo, hi));
}

std::uint8_t requantize(std::int64_t acc, std::int64_t m0, int shift, std::int32_t zero_point) {
    std::int64_t v = scale_acc(acc, m0, shift) + zero_point;
    return static_cast<std::uint8_t>(std::clamp<std::int64_t>(v, 0, 255));
}

std::uint8_t quantize_value(double x, const ir::QuantParams& q) {
    std::int64_t v = round_half_away(x / q.scale) + q.zero_point;
    return static_cast<std::uint8_t>(std::clamp<std::int64_t>(v, 0, 255));
}

double dequantize_value(std::int64_t q, const ir::QuantParams& p) { return (static_cast<double>(q) - p.zero_point) * p.scale; }

ir::Tensor quantize_tensor(const ir::Tensor& x, const ir::QuantParams& q) {
    ir::Tensor out = ir::Tensor::zeros(x.shape, ir::DType::UInt8);
    const auto& src = x.as<float>();
    auto& dst = out.as<std::uint8_t>();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = quantize_value(src[i], q);
    return out;
}

ir::Tensor dequantize_tensor(const ir::Tensor& x, const ir::QuantParams& q) {
    ir::Tensor out = ir::Tensor::zeros(x.shape, ir::DType::Float32);
    auto& dst = out.as<float>();
    std::visit(
        [&](const auto& src) {
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(dequantize_value(src[i], q));
        },
        x.data);
    return out;
}

std::pair<std::int32_t, std::int32_t> relu_bounds(ir::LayerKind kind, const ir::QuantParams& q) {
    if (kind == ir::LayerKind::ReLU6) {
        auto hi = std::clamp<std::int64_t>(q.zero_point + round_half_away(6.0 / q.scale), 0, 255);
        return {q.zero_point, static_cast<std::int32_t>(hi)};
    }
    return {q.zero_point, 255};
}

} // namespace j3dai::quant
