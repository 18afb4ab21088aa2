#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "j3dai/error.hpp"
#include "j3dai/oracle.hpp"
#include "j3dai/quant.hpp"

namespace j3dai::quant {

using ir::LayerKind;

CalibStats calibrate(const ir::Graph& g, const std::vector<ir::Tensor>& samples) {
    if (samples.empty()) throw QuantError("calibration needs at least one sample");
    CalibStats stats;
    for (const auto& s : samples) {
        oracle::Values v = oracle::run_float(g, s);
        CalibStats one;
        for (const auto& [name, t] : v) {
            const auto& d = t.as<float>();
            if (d.empty()) continue;
            auto [lo, hi] = std::minmax_element(d.begin(), d.end());
            one[name] = {*lo, *hi, 1};
        }
        stats = merge(stats, one);
    }
    return stats;
}

CalibStats merge(const CalibStats& a, const CalibStats& b) {
    CalibStats out = a;
    for (const auto& [name, s] : b) {
        auto it = out.find(name);
        if (it == out.end()) {
            out[name] = s;
            continue;
        }
        it->second.min = std::min(it->second.min, s.min);
        it->second.max = std::max(it->second.max, s.max);
        it->second.sample_count += s.sample_count;
    }
    return out;
}

namespace {

const TensorStats& stat(const CalibStats& stats, const std::string& name) {
    auto it = stats.find(name);
    if (it == stats.end()) throw QuantError("no calibration statistics for tensor \"" + name + "\"");
    return it->second;
}

const ir::QuantParams& param(const ParamMap& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw QuantError("no quantization parameters for tensor \"" + name + "\"");
    return it->second;
}

ir::QuantParams act_from(const CalibStats& stats, const std::string& name) {
    const auto& s = stat(stats, name);
    return activation_params(s.min, s.max);
}

double max_abs(const ir::Tensor& t) {
    double m = 0.0;
    for (float v : t.as<float>()) m = std::max(m, std::fabs(static_cast<double>(v)));
    return m;
}

ir::QuantParams plain(const ir::QuantParams& q) {
    ir::QuantParams out;
    out.scale = q.scale;
    out.zero_point = q.zero_point;
    return out;
}

} // namespace

ParamMap derive_quant_params(const ir::Graph& g, const CalibStats& stats) {
    ParamMap p;
    for (const auto& in : g.inputs) p[in] = act_from(stats, in);
    for (int idx : ir::topological_order(g)) {
        const auto& l = g.layers[idx];
        const std::string& out = l.outputs[0];
        const auto& in = param(p, l.inputs[0]);
        switch (l.kind) {
        case LayerKind::Conv2D:
        case LayerKind::DepthwiseConv2D:
        case LayerKind::Dense: {
            const auto& w = g.constants.at(l.inputs[1]);
            ir::QuantParams wq = weight_params(max_abs(w));
            p[l.inputs[1]] = wq;
            if (l.inputs.size() > 2) {
                ir::QuantParams bq;
                bq.scale = in.scale * wq.scale;
                bq.bitwidth = 32;
                bq.is_signed = true;
                p[l.inputs[2]] = bq;
            }
            ir::QuantParams oq = act_from(stats, out);
            oq.requant = derive_requant(in.scale * wq.scale / oq.scale);
            p[out] = oq;
            break;
        }
        case LayerKind::ReLU:
        case LayerKind::ReLU6:
        case LayerKind::MaxPool:
        case LayerKind::UpsampleNearest: p[out] = plain(in); break;
        case LayerKind::Add: {
            const auto& b = param(p, l.inputs[1]);
            ir::QuantParams oq = act_from(stats, out);
            double u = std::max(in.scale, b.scale) / 127.0;
            oq.input_multipliers = {static_cast<std::int32_t>(round_half_away(in.scale / u)),
                                    static_cast<std::int32_t>(round_half_away(b.scale / u))};
            oq.requant = derive_requant(u / oq.scale);
            p[out] = oq;
            break;
        }
        case LayerKind::AvgPool: {
            ir::QuantParams oq = act_from(stats, out);
            oq.requant = derive_requant(in.scale / (oq.scale * l.attrs.kernel.h * l.attrs.kernel.w));
            p[out] = oq;
            break;
        }
        case LayerKind::GlobalAvgPool: {
            const auto& s = g.tensor(l.inputs[0]).shape;
            ir::QuantParams oq = act_from(stats, out);
            oq.requant = derive_requant(in.scale / (oq.scale * static_cast<double>(s[2] * s[3])));
            p[out] = oq;
            break;
        }
        case LayerKind::Concat: {
            ir::QuantParams oq = act_from(stats, out);
            for (const auto& x : l.inputs) oq.input_requants.push_back(derive_requant(param(p, x).scale / oq.scale));
            p[out] = oq;
            break;
        }
        }
    }
    return p;
}

ir::Graph quantize_graph(const ir::Graph& g, const ParamMap& params) {
    ir::Graph q = g;
    std::map<std::string, ir::DType> roles;
    for (const auto& l : g.layers) {
        if (!ir::has_weights(l.kind)) continue;
        roles[l.inputs[1]] = ir::DType::Int8;
        if (l.inputs.size() > 2) roles[l.inputs[2]] = ir::DType::Int32;
    }
    for (auto& [name, t] : q.tensors) {
        t.quant = param(params, name);
        if (!g.is_constant(name)) {
            t.dtype = ir::DType::UInt8;
            continue;
        }
        auto role = roles.find(name);
        if (role == roles.end()) throw QuantError("constant \"" + name + "\" is not a layer weight or bias");
        t.dtype = role->second;
        const auto& src = g.constants.at(name).as<float>();
        ir::Tensor dst = ir::Tensor::zeros(t.shape, t.dtype);
        if (t.dtype == ir::DType::Int8) {
            auto& d = dst.as<std::int8_t>();
            for (std::size_t i = 0; i < src.size(); ++i)
                d[i] = static_cast<std::int8_t>(std::clamp<std::int64_t>(round_half_away(src[i] / t.quant->scale), -127, 127));
        } else {
            auto& d = dst.as<std::int32_t>();
            for (std::size_t i = 0; i < src.size(); ++i) {
                std::int64_t v = round_half_away(src[i] / t.quant->scale);
                if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max())
                    throw QuantError("bias \"" + name + "\" does not fit in int32");
                d[i] = static_cast<std::int32_t>(v);
            }
        }
        q.constants[name] = std::move(dst);
    }
    return q;
}

ir::Graph quantize(const ir::Graph& g, const std::vector<ir::Tensor>& samples) {
    return quantize_graph(g, derive_quant_params(g, calibrate(g, samples)));
}

std::vector<ir::Tensor> random_samples(const ir::Shape& shape, int count, std::uint64_t seed, float lo, float hi) {
    std::mt19937_64 rng(seed);
    std::vector<ir::Tensor> out;
    for (int i = 0; i < count; ++i) {
        ir::Tensor t = ir::Tensor::zeros(shape, ir::DType::Float32);
        for (auto& v : t.as<float>()) v = lo + (hi - lo) * static_cast<float>(static_cast<double>(rng() >> 11) * 0x1.0p-53);
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace j3dai::quant
