#include "j3dai/error.hpp"
#include "j3dai/ir.hpp"

namespace j3dai::ir {

namespace {

std::string expected(const LayerNode& l, const std::string& what, const Shape& want, const Shape& got) {
    return "layer \"" + l.id + "\": " + what + " expected " + shape_str(want) + ", got " + shape_str(got);
}

std::int64_t window_out(const LayerNode& l, std::int64_t in, int k, int s, int p) {
    std::int64_t span = in + 2 * p - k;
    if (span < 0) throw ShapeError("layer \"" + l.id + "\": kernel " + std::to_string(k) + " exceeds padded input " + std::to_string(in + 2 * p));
    return span / s + 1;
}

const Shape& act_shape(const Graph& g, const LayerNode& l, const std::string& name) {
    const auto& t = g.tensor(name);
    if (!t.resolved()) throw ShapeError("layer \"" + l.id + "\": input \"" + name + "\" has unresolved shape " + shape_str(t.shape));
    return t.shape;
}

void check_param(const Graph& g, const LayerNode& l, std::size_t idx, const Shape& want) {
    if (idx >= l.inputs.size()) return;
    const auto& got = g.tensor(l.inputs[idx]).shape;
    if (got != want) throw ShapeError(expected(l, "tensor \"" + l.inputs[idx] + "\"", want, got));
}

} // namespace

Shape infer_layer_shape(const Graph& g, const LayerNode& l) {
    const auto& a = l.attrs;
    const Shape& x = act_shape(g, l, l.inputs[0]);
    const std::int64_t n = x[0], c = x[1], h = x[2], w = x[3];
    switch (l.kind) {
    case LayerKind::Conv2D: {
        const auto& wt = g.tensor(l.inputs[1]).shape;
        if (c % a.groups != 0) throw ShapeError("layer \"" + l.id + "\": input channels " + std::to_string(c) + " not divisible by groups " + std::to_string(a.groups));
        std::int64_t cout = wt[0];
        if (cout % a.groups != 0) throw ShapeError("layer \"" + l.id + "\": output channels " + std::to_string(cout) + " not divisible by groups " + std::to_string(a.groups));
        check_param(g, l, 1, {cout, c / a.groups, a.kernel.h, a.kernel.w});
        if (a.has_bias) check_param(g, l, 2, {1, cout, 1, 1});
        return {n, cout, window_out(l, h, a.kernel.h, a.stride.h, a.padding.h), window_out(l, w, a.kernel.w, a.stride.w, a.padding.w)};
    }
    case LayerKind::DepthwiseConv2D: {
        if (a.groups != c) throw ShapeError("layer \"" + l.id + "\": depthwise groups " + std::to_string(a.groups) + " must equal input channels " + std::to_string(c));
        check_param(g, l, 1, {c, 1, a.kernel.h, a.kernel.w});
        if (a.has_bias) check_param(g, l, 2, {1, c, 1, 1});
        return {n, c, window_out(l, h, a.kernel.h, a.stride.h, a.padding.h), window_out(l, w, a.kernel.w, a.stride.w, a.padding.w)};
    }
    case LayerKind::Dense: {
        const auto& wt = g.tensor(l.inputs[1]).shape;
        std::int64_t cout = wt[0];
        check_param(g, l, 1, {cout, c * h * w, 1, 1});
        if (a.has_bias) check_param(g, l, 2, {1, cout, 1, 1});
        return {n, cout, 1, 1};
    }
    case LayerKind::ReLU:
    case LayerKind::ReLU6: return x;
    case LayerKind::Add: {
        const Shape& y = act_shape(g, l, l.inputs[1]);
        if (y != x) throw ShapeError(expected(l, "second operand \"" + l.inputs[1] + "\"", x, y));
        return x;
    }
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
        return {n, c, window_out(l, h, a.kernel.h, a.stride.h, a.padding.h), window_out(l, w, a.kernel.w, a.stride.w, a.padding.w)};
    case LayerKind::GlobalAvgPool: return {n, c, 1, 1};
    case LayerKind::UpsampleNearest: return {n, c, h * a.scale, w * a.scale};
    case LayerKind::Concat: {
        std::int64_t total = 0;
        for (const auto& in : l.inputs) {
            const Shape& y = act_shape(g, l, in);
            if (y[0] != n || y[2] != h || y[3] != w)
                throw ShapeError(expected(l, "operand \"" + in + "\"", {n, y[1], h, w}, y));
            total += y[1];
        }
        return {n, total, h, w};
    }
    }
    throw ShapeError("layer \"" + l.id + "\": unhandled kind");
}

Graph infer_shapes(const Graph& g) {
    validate(g);
    Graph out = g;
    for (const auto& in : out.inputs)
        if (!out.tensor(in).resolved()) throw ShapeError("graph input \"" + in + "\" has unresolved shape " + shape_str(out.tensor(in).shape));
    for (int idx : topological_order(out)) {
        const auto& l = out.layers[idx];
        Shape s = infer_layer_shape(out, l);
        auto& t = out.tensor(l.outputs[0]);
        if (t.resolved() && t.shape != s) throw ShapeError(expected(l, "output \"" + t.name + "\"", s, t.shape));
        t.shape = s;
    }
    return out;
}

std::uint64_t layer_macs(const Graph& g, const LayerNode& l) {
    const auto& a = l.attrs;
    auto dims = [&](const std::string& name) {
        const auto& t = g.tensor(name);
        if (!t.resolved()) throw ShapeError("layer \"" + l.id + "\": tensor \"" + name + "\" has unresolved shape");
        return t.shape;
    };
    switch (l.kind) {
    case LayerKind::Conv2D:
    case LayerKind::DepthwiseConv2D: {
        Shape x = dims(l.inputs[0]), y = dims(l.outputs[0]);
        return static_cast<std::uint64_t>(y[0] * y[2] * y[3] * y[1] * (x[1] / a.groups) * a.kernel.h * a.kernel.w);
    }
    case LayerKind::Dense: {
        Shape x = dims(l.inputs[0]), y = dims(l.outputs[0]);
        return static_cast<std::uint64_t>(y[0] * y[1] * x[1] * x[2] * x[3]);
    }
    default: return 0;
    }
}

MacReport mac_count(const Graph& g) {
    MacReport r;
    for (const auto& [name, t] : g.tensors)
        if (!t.resolved()) throw ShapeError("tensor \"" + name + "\" has unresolved shape " + shape_str(t.shape));
    for (const auto& l : g.layers) {
        auto m = layer_macs(g, l);
        r.per_layer.emplace_back(l.id, m);
        r.total += m;
    }
    return r;
}

} // namespace j3dai::ir
