#include <algorithm>
#include <limits>

#include "j3dai/error.hpp"
#include "j3dai/oracle.hpp"
#include "j3dai/quant.hpp"

namespace j3dai::oracle {

using ir::LayerKind;
using ir::Tensor;

namespace {

// int32 accumulator that refuses to wrap.
struct Acc {
    const std::string* layer;
    std::int64_t v = 0;
    void add(std::int64_t x) {
        v += x;
        if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max())
            throw QuantError("layer \"" + *layer + "\": accumulator overflow");
    }
};

const ir::QuantParams& qp(const ir::Graph& g, const ir::LayerNode& l, const std::string& name) {
    const auto& t = g.tensor(name);
    if (!t.quant) throw QuantError("layer \"" + l.id + "\": tensor \"" + name + "\" has no quantization parameters");
    return *t.quant;
}

const ir::Requant& rq(const ir::LayerNode& l, const ir::QuantParams& q) {
    if (!q.requant) throw QuantError("layer \"" + l.id + "\": output has no requant parameters");
    return *q.requant;
}

std::int64_t at(const Tensor& t, std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    const auto& s = t.shape;
    return t.as<std::uint8_t>()[((n * s[1] + c) * s[2] + y) * s[3] + x];
}

Tensor conv(const ir::Graph& g, const ir::LayerNode& l, const Tensor& x, const ir::Shape& os) {
    const auto& a = l.attrs;
    const auto& w = g.constants.at(l.inputs[1]).as<std::int8_t>();
    const std::int32_t* bias = l.inputs.size() > 2 ? g.constants.at(l.inputs[2]).as<std::int32_t>().data() : nullptr;
    const std::int64_t zp = qp(g, l, l.inputs[0]).zero_point;
    const auto& oq = qp(g, l, l.outputs[0]);
    const auto& r = rq(l, oq);
    const std::int64_t cin_g = x.shape[1] / a.groups, cout_g = os[1] / a.groups;
    Tensor out = Tensor::zeros(os, ir::DType::UInt8);
    std::size_t idx = 0;
    for (std::int64_t n = 0; n < os[0]; ++n)
        for (std::int64_t co = 0; co < os[1]; ++co) {
            const std::int64_t grp = co / cout_g;
            for (std::int64_t oy = 0; oy < os[2]; ++oy)
                for (std::int64_t ox = 0; ox < os[3]; ++ox) {
                    Acc acc{&l.id};
                    for (std::int64_t ci = 0; ci < cin_g; ++ci)
                        for (int ky = 0; ky < a.kernel.h; ++ky)
                            for (int kx = 0; kx < a.kernel.w; ++kx) {
                                std::int64_t iy = oy * a.stride.h - a.padding.h + ky;
                                std::int64_t ix = ox * a.stride.w - a.padding.w + kx;
                                if (iy < 0 || ix < 0 || iy >= x.shape[2] || ix >= x.shape[3]) continue;
                                std::int64_t wv = w[((co * cin_g + ci) * a.kernel.h + ky) * a.kernel.w + kx];
                                acc.add((at(x, n, grp * cin_g + ci, iy, ix) - zp) * wv);
                            }
                    if (bias) acc.add(bias[co]);
                    out.as<std::uint8_t>()[idx++] = quant::requantize(acc.v, r, oq.zero_point);
                }
        }
    return out;
}

Tensor dense(const ir::Graph& g, const ir::LayerNode& l, const Tensor& x, const ir::Shape& os) {
    const auto& w = g.constants.at(l.inputs[1]).as<std::int8_t>();
    const std::int32_t* bias = l.inputs.size() > 2 ? g.constants.at(l.inputs[2]).as<std::int32_t>().data() : nullptr;
    const std::int64_t zp = qp(g, l, l.inputs[0]).zero_point;
    const auto& oq = qp(g, l, l.outputs[0]);
    const auto& r = rq(l, oq);
    const std::int64_t k = x.shape[1] * x.shape[2] * x.shape[3];
    const auto& xv = x.as<std::uint8_t>();
    Tensor out = Tensor::zeros(os, ir::DType::UInt8);
    for (std::int64_t n = 0; n < os[0]; ++n)
        for (std::int64_t co = 0; co < os[1]; ++co) {
            Acc acc{&l.id};
            for (std::int64_t i = 0; i < k; ++i) acc.add((xv[n * k + i] - zp) * std::int64_t{w[co * k + i]});
            if (bias) acc.add(bias[co]);
            out.as<std::uint8_t>()[n * os[1] + co] = quant::requantize(acc.v, r, oq.zero_point);
        }
    return out;
}

Tensor pool(const ir::Graph& g, const ir::LayerNode& l, const Tensor& x, const ir::Shape& os) {
    const auto& a = l.attrs;
    const bool is_max = l.kind == LayerKind::MaxPool;
    const std::int64_t zp = qp(g, l, l.inputs[0]).zero_point;
    const auto& oq = qp(g, l, l.outputs[0]);
    Tensor out = Tensor::zeros(os, ir::DType::UInt8);
    std::size_t idx = 0;
    for (std::int64_t n = 0; n < os[0]; ++n)
        for (std::int64_t c = 0; c < os[1]; ++c)
            for (std::int64_t oy = 0; oy < os[2]; ++oy)
                for (std::int64_t ox = 0; ox < os[3]; ++ox) {
                    Acc acc{&l.id};
                    std::int64_t mx = 0;
                    for (int ky = 0; ky < a.kernel.h; ++ky)
                        for (int kx = 0; kx < a.kernel.w; ++kx) {
                            std::int64_t iy = oy * a.stride.h - a.padding.h + ky;
                            std::int64_t ix = ox * a.stride.w - a.padding.w + kx;
                            if (iy < 0 || ix < 0 || iy >= x.shape[2] || ix >= x.shape[3]) continue;
                            std::int64_t v = at(x, n, c, iy, ix);
                            if (is_max) mx = std::max(mx, v);
                            else acc.add(v - zp);
                        }
                    out.as<std::uint8_t>()[idx++] = is_max ? static_cast<std::uint8_t>(mx) : quant::requantize(acc.v, rq(l, oq), oq.zero_point);
                }
    return out;
}

Tensor global_pool(const ir::Graph& g, const ir::LayerNode& l, const Tensor& x, const ir::Shape& os) {
    const std::int64_t zp = qp(g, l, l.inputs[0]).zero_point;
    const auto& oq = qp(g, l, l.outputs[0]);
    const auto& r = rq(l, oq);
    const std::int64_t hw = x.shape[2] * x.shape[3];
    const auto& xv = x.as<std::uint8_t>();
    Tensor out = Tensor::zeros(os, ir::DType::UInt8);
    for (std::int64_t i = 0; i < os[0] * os[1]; ++i) {
        Acc acc{&l.id};
        for (std::int64_t j = 0; j < hw; ++j) acc.add(xv[i * hw + j] - zp);
        out.as<std::uint8_t>()[i] = quant::requantize(acc.v, r, oq.zero_point);
    }
    return out;
}

Tensor add(const ir::Graph& g, const ir::LayerNode& l, const Tensor& x, const Tensor& y) {
    const auto& qa = qp(g, l, l.inputs[0]);
    const auto& qb = qp(g, l, l.inputs[1]);
    const auto& oq = qp(g, l, l.outputs[0]);
    if (oq.input_multipliers.size() != 2) throw QuantError("layer \"" + l.id + "\": Add needs two input multipliers");
    const auto& r = rq(l, oq);
    Tensor out = Tensor::zeros(x.shape, ir::DType::UInt8);
    const auto& xa = x.as<std::uint8_t>();
    const auto& xb = y.as<std::uint8_t>();
    for (std::size_t i = 0; i < xa.size(); ++i) {
        Acc acc{&l.id};
        acc.add(std::int64_t{oq.input_multipliers[0]} * (xa[i] - qa.zero_point));
        acc.add(std::int64_t{oq.input_multipliers[1]} * (xb[i] - qb.zero_point));
        out.as<std::uint8_t>()[i] = quant::requantize(acc.v, r, oq.zero_point);
    }
    return out;
}

Tensor upsample(const Tensor& x, int s, const ir::Shape& os) {
    Tensor out = Tensor::zeros(os, ir::DType::UInt8);
    std::size_t idx = 0;
    for (std::int64_t n = 0; n < os[0]; ++n)
        for (std::int64_t c = 0; c < os[1]; ++c)
            for (std::int64_t y = 0; y < os[2]; ++y)
                for (std::int64_t xx = 0; xx < os[3]; ++xx) out.as<std::uint8_t>()[idx++] = static_cast<std::uint8_t>(at(x, n, c, y / s, xx / s));
    return out;
}

Tensor concat(const ir::Graph& g, const ir::LayerNode& l, const std::vector<const Tensor*>& xs, const ir::Shape& os) {
    const auto& oq = qp(g, l, l.outputs[0]);
    if (oq.input_requants.size() != xs.size()) throw QuantError("layer \"" + l.id + "\": Concat needs one requant per input");
    Tensor out = Tensor::zeros(os, ir::DType::UInt8);
    const std::int64_t hw = os[2] * os[3];
    auto& o = out.as<std::uint8_t>();
    for (std::int64_t n = 0; n < os[0]; ++n) {
        std::int64_t c0 = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const std::int64_t zp = qp(g, l, l.inputs[k]).zero_point;
            const std::int64_t c = xs[k]->shape[1];
            const auto& src = xs[k]->as<std::uint8_t>();
            for (std::int64_t i = 0; i < c * hw; ++i)
                o[(n * os[1] + c0) * hw + i] = quant::requantize(src[n * c * hw + i] - zp, oq.input_requants[k], oq.zero_point);
            c0 += c;
        }
    }
    return out;
}

} // namespace

Values run_int(const ir::Graph& g, const Values& inputs) {
    Values v;
    for (const auto& in : g.inputs) {
        auto it = inputs.find(in);
        if (it == inputs.end()) throw ShapeError("no value supplied for graph input \"" + in + "\"");
        if (it->second.shape != g.tensor(in).shape)
            throw ShapeError("graph input \"" + in + "\" expected " + ir::shape_str(g.tensor(in).shape) + ", got " + ir::shape_str(it->second.shape));
        if (it->second.dtype() != ir::DType::UInt8) throw QuantError("graph input \"" + in + "\" must be uint8");
        v[in] = it->second;
    }
    for (int idx : ir::topological_order(g)) {
        const auto& l = g.layers[idx];
        const auto& os = g.tensor(l.outputs[0]).shape;
        auto get = [&](const std::string& name) -> const Tensor& {
            auto it = v.find(name);
            if (it == v.end()) throw ShapeError("layer \"" + l.id + "\": input \"" + name + "\" has no value");
            return it->second;
        };
        const Tensor& x = get(l.inputs[0]);
        if (ir::has_weights(l.kind)) {
            if (g.tensor(l.inputs[1]).dtype != ir::DType::Int8) throw QuantError("layer \"" + l.id + "\": weights are not int8");
        }
        Tensor out;
        switch (l.kind) {
        case LayerKind::Conv2D:
        case LayerKind::DepthwiseConv2D: out = conv(g, l, x, os); break;
        case LayerKind::Dense: out = dense(g, l, x, os); break;
        case LayerKind::ReLU:
        case LayerKind::ReLU6: {
            auto [lo, hi] = quant::relu_bounds(l.kind, qp(g, l, l.inputs[0]));
            out = x;
            for (auto& e : out.as<std::uint8_t>()) e = static_cast<std::uint8_t>(std::clamp<std::int32_t>(e, lo, hi));
            break;
        }
        case LayerKind::Add: out = add(g, l, x, get(l.inputs[1])); break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: out = pool(g, l, x, os); break;
        case LayerKind::GlobalAvgPool: out = global_pool(g, l, x, os); break;
        case LayerKind::UpsampleNearest: out = upsample(x, l.attrs.scale, os); break;
        case LayerKind::Concat: {
            std::vector<const Tensor*> xs;
            for (const auto& in : l.inputs) xs.push_back(&get(in));
            out = concat(g, l, xs, os);
            break;
        }
        }
        v[l.outputs[0]] = std::move(out);
    }
    return v;
}

Values run_int(const ir::Graph& g, const Tensor& input) {
    if (g.inputs.size() != 1) throw ShapeError("graph has " + std::to_string(g.inputs.size()) + " inputs; pass a value map");
    return run_int(g, Values{{g.inputs[0], input}});
}

} // namespace j3dai::oracle
