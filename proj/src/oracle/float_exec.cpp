#include <algorithm>
#include <limits>

#include "j3dai/error.hpp"
#include "j3dai/oracle.hpp"

namespace j3dai::oracle {

using ir::LayerKind;
using ir::Tensor;

namespace {

struct View {
    const float* p;
    ir::Shape s;
    float at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return p[((n * s[1] + c) * s[2] + y) * s[3] + x];
    }
};

Tensor conv(const ir::LayerNode& l, const Tensor& x, const Tensor& w, const Tensor* b, const ir::Shape& os) {
    Tensor out = Tensor::zeros(os, ir::DType::Float32);
    auto& o = out.as<float>();
    View xv{x.as<float>().data(), x.shape};
    const auto& wv = w.as<float>();
    const auto& a = l.attrs;
    const std::int64_t cin_g = x.shape[1] / a.groups, cout_g = os[1] / a.groups;
    std::size_t idx = 0;
    for (std::int64_t n = 0; n < os[0]; ++n)
        for (std::int64_t co = 0; co < os[1]; ++co) {
            const std::int64_t g = co / cout_g;
            for (std::int64_t oy = 0; oy < os[2]; ++oy)
                for (std::int64_t ox = 0; ox < os[3]; ++ox) {
                    float acc = 0.0f;
                    for (std::int64_t ci = 0; ci < cin_g; ++ci)
                        for (int ky = 0; ky < a.kernel.h; ++ky)
                            for (int kx = 0; kx < a.kernel.w; ++kx) {
                                std::int64_t iy = oy * a.stride.h - a.padding.h + ky;
                                std::int64_t ix = ox * a.stride.w - a.padding.w + kx;
                                if (iy < 0 || ix < 0 || iy >= x.shape[2] || ix >= x.shape[3]) continue;
                                acc += xv.at(n, g * cin_g + ci, iy, ix) * wv[((co * cin_g + ci) * a.kernel.h + ky) * a.kernel.w + kx];
                            }
                    if (b) acc += b->as<float>()[co];
                    o[idx++] = acc;
                }
        }
    return out;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor* b, const ir::Shape& os) {
    Tensor out = Tensor::zeros(os, ir::DType::Float32);
    const std::int64_t k = x.shape[1] * x.shape[2] * x.shape[3];
    const auto& xv = x.as<float>();
    const auto& wv = w.as<float>();
    for (std::int64_t n = 0; n < os[0]; ++n)
        for (std::int64_t co = 0; co < os[1]; ++co) {
            float acc = 0.0f;
            for (std::int64_t i = 0; i < k; ++i) acc += xv[n * k + i] * wv[co * k + i];
            if (b) acc += b->as<float>()[co];
            out.as<float>()[n * os[1] + co] = acc;
        }
    return out;
}

Tensor pool(const ir::LayerNode& l, const Tensor& x, const ir::Shape& os) {
    Tensor out = Tensor::zeros(os, ir::DType::Float32);
    View xv{x.as<float>().data(), x.shape};
    const auto& a = l.attrs;
    const bool is_max = l.kind == LayerKind::MaxPool;
    std::size_t idx = 0;
    for (std::int64_t n = 0; n < os[0]; ++n)
        for (std::int64_t c = 0; c < os[1]; ++c)
            for (std::int64_t oy = 0; oy < os[2]; ++oy)
                for (std::int64_t ox = 0; ox < os[3]; ++ox) {
                    float acc = is_max ? -std::numeric_limits<float>::infinity() : 0.0f;
                    for (int ky = 0; ky < a.kernel.h; ++ky)
                        for (int kx = 0; kx < a.kernel.w; ++kx) {
                            std::int64_t iy = oy * a.stride.h - a.padding.h + ky;
                            std::int64_t ix = ox * a.stride.w - a.padding.w + kx;
                            if (iy < 0 || ix < 0 || iy >= x.shape[2] || ix >= x.shape[3]) continue;
                            float v = xv.at(n, c, iy, ix);
                            acc = is_max ? std::max(acc, v) : acc + v;
                        }
                    // Average counts padded positions as zeros.
                    out.as<float>()[idx++] = is_max ? acc : acc / static_cast<float>(a.kernel.h * a.kernel.w);
                }
    return out;
}

Tensor global_pool(const Tensor& x, const ir::Shape& os) {
    Tensor out = Tensor::zeros(os, ir::DType::Float32);
    const std::int64_t hw = x.shape[2] * x.shape[3];
    const auto& xv = x.as<float>();
    for (std::int64_t i = 0; i < os[0] * os[1]; ++i) {
        float acc = 0.0f;
        for (std::int64_t j = 0; j < hw; ++j) acc += xv[i * hw + j];
        out.as<float>()[i] = acc / static_cast<float>(hw);
    }
    return out;
}

Tensor upsample(const Tensor& x, int s, const ir::Shape& os) {
    Tensor out = Tensor::zeros(os, ir::DType::Float32);
    View xv{x.as<float>().data(), x.shape};
    std::size_t idx = 0;
    for (std::int64_t n = 0; n < os[0]; ++n)
        for (std::int64_t c = 0; c < os[1]; ++c)
            for (std::int64_t y = 0; y < os[2]; ++y)
                for (std::int64_t xx = 0; xx < os[3]; ++xx) out.as<float>()[idx++] = xv.at(n, c, y / s, xx / s);
    return out;
}

Tensor concat(const std::vector<const Tensor*>& xs, const ir::Shape& os) {
    Tensor out = Tensor::zeros(os, ir::DType::Float32);
    const std::int64_t hw = os[2] * os[3];
    auto& o = out.as<float>();
    for (std::int64_t n = 0; n < os[0]; ++n) {
        std::int64_t c0 = 0;
        for (const Tensor* t : xs) {
            const std::int64_t c = t->shape[1];
            std::copy_n(t->as<float>().begin() + n * c * hw, c * hw, o.begin() + (n * os[1] + c0) * hw);
            c0 += c;
        }
    }
    return out;
}

const Tensor& fetch(const ir::Graph& g, const Values& v, const ir::LayerNode& l, const std::string& name) {
    if (auto c = g.constants.find(name); c != g.constants.end()) return c->second;
    auto it = v.find(name);
    if (it == v.end()) throw ShapeError("layer \"" + l.id + "\": input \"" + name + "\" has no value");
    return it->second;
}

} // namespace

Values run_float(const ir::Graph& g, const Values& inputs) {
    Values v;
    for (const auto& in : g.inputs) {
        auto it = inputs.find(in);
        if (it == inputs.end()) throw ShapeError("no value supplied for graph input \"" + in + "\"");
        if (it->second.shape != g.tensor(in).shape)
            throw ShapeError("graph input \"" + in + "\" expected " + ir::shape_str(g.tensor(in).shape) + ", got " + ir::shape_str(it->second.shape));
        if (it->second.dtype() != ir::DType::Float32) throw ShapeError("graph input \"" + in + "\" must be float32");
        v[in] = it->second;
    }
    for (int idx : ir::topological_order(g)) {
        const auto& l = g.layers[idx];
        const auto& os = g.tensor(l.outputs[0]).shape;
        const Tensor& x = fetch(g, v, l, l.inputs[0]);
        const Tensor* bias = l.attrs.has_bias && l.inputs.size() > 2 ? &fetch(g, v, l, l.inputs[2]) : nullptr;
        Tensor out;
        switch (l.kind) {
        case LayerKind::Conv2D:
        case LayerKind::DepthwiseConv2D: out = conv(l, x, fetch(g, v, l, l.inputs[1]), bias, os); break;
        case LayerKind::Dense: out = dense(x, fetch(g, v, l, l.inputs[1]), bias, os); break;
        case LayerKind::ReLU:
        case LayerKind::ReLU6:
            out = x;
            for (auto& e : out.as<float>()) e = l.kind == LayerKind::ReLU ? std::max(e, 0.0f) : std::clamp(e, 0.0f, 6.0f);
            break;
        case LayerKind::Add: {
            out = x;
            const auto& y = fetch(g, v, l, l.inputs[1]).as<float>();
            for (std::size_t i = 0; i < y.size(); ++i) out.as<float>()[i] += y[i];
            break;
        }
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: out = pool(l, x, os); break;
        case LayerKind::GlobalAvgPool: out = global_pool(x, os); break;
        case LayerKind::UpsampleNearest: out = upsample(x, l.attrs.scale, os); break;
        case LayerKind::Concat: {
            std::vector<const Tensor*> xs;
            for (const auto& in : l.inputs) xs.push_back(&fetch(g, v, l, in));
            out = concat(xs, os);
            break;
        }
        }
        if (out.shape != os) throw ShapeError("layer \"" + l.id + "\": produced " + ir::shape_str(out.shape) + ", declared " + ir::shape_str(os));
        v[l.outputs[0]] = std::move(out);
    }
    return v;
}

Values run_float(const ir::Graph& g, const Tensor& input) {
    if (g.inputs.size() != 1) throw ShapeError("graph has " + std::to_string(g.inputs.size()) + " inputs; pass a value map");
    return run_float(g, Values{{g.inputs[0], input}});
}

Values outputs_of(const ir::Graph& g, const Values& all) {
    Values out;
    for (const auto& name : g.outputs) out[name] = all.at(name);
    return out;
}

} // namespace j3dai::oracle
