#include <cmath>

#include "j3dai/error.hpp"
#include "j3dai/ir.hpp"

namespace j3dai::ir {

float GraphBuilder::uniform(float lo, float hi) {
    double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return static_cast<float>(lo + (hi - lo) * u);
}

Tensor GraphBuilder::random_weights(const Shape& s, float bound) {
    Tensor t = Tensor::zeros(s, DType::Float32);
    for (auto& v : t.as<float>()) v = uniform(-bound, bound);
    return t;
}

std::string GraphBuilder::add_layer(LayerNode node) {
    Shape s = infer_layer_shape(g_, node);
    const std::string out = node.id;
    g_.tensors[out] = TensorSpec{out, s, DType::Float32, std::nullopt};
    node.outputs = {out};
    g_.layers.push_back(std::move(node));
    return out;
}

std::string GraphBuilder::input(const std::string& name, const Shape& shape) {
    g_.tensors[name] = TensorSpec{name, shape, DType::Float32, std::nullopt};
    g_.inputs.push_back(name);
    return name;
}

std::int64_t GraphBuilder::channels(const std::string& x) const { return g_.tensor(x).shape[1]; }

namespace {
void add_const(Graph& g, const std::string& name, Tensor t) {
    g.tensors[name] = TensorSpec{name, t.shape, DType::Float32, std::nullopt};
    g.constants[name] = std::move(t);
}
} // namespace

// He-uniform weights keep activation magnitudes roughly stable through ReLU stacks.
std::string GraphBuilder::conv(const std::string& id, const std::string& x, int cout, int k, int stride, int pad, bool bias) {
    std::int64_t cin = channels(x);
    LayerNode n{id, LayerKind::Conv2D, {{k, k}, {stride, stride}, {pad, pad}, 1, bias, 1}, {x, id + ".w"}, {}};
    add_const(g_, id + ".w", random_weights({cout, cin, k, k}, std::sqrt(6.0f / static_cast<float>(cin * k * k))));
    if (bias) {
        add_const(g_, id + ".b", random_weights({1, cout, 1, 1}, 0.1f));
        n.inputs.push_back(id + ".b");
    }
    return add_layer(std::move(n));
}

std::string GraphBuilder::depthwise(const std::string& id, const std::string& x, int k, int stride, int pad, bool bias) {
    std::int64_t c = channels(x);
    LayerNode n{id, LayerKind::DepthwiseConv2D, {{k, k}, {stride, stride}, {pad, pad}, static_cast<int>(c), bias, 1}, {x, id + ".w"}, {}};
    add_const(g_, id + ".w", random_weights({c, 1, k, k}, std::sqrt(6.0f / static_cast<float>(k * k))));
    if (bias) {
        add_const(g_, id + ".b", random_weights({1, c, 1, 1}, 0.1f));
        n.inputs.push_back(id + ".b");
    }
    return add_layer(std::move(n));
}

std::string GraphBuilder::dense(const std::string& id, const std::string& x, int cout, bool bias) {
    const auto& s = g_.tensor(x).shape;
    std::int64_t cin = s[1] * s[2] * s[3];
    LayerNode n{id, LayerKind::Dense, {}, {x, id + ".w"}, {}};
    n.attrs.has_bias = bias;
    add_const(g_, id + ".w", random_weights({cout, cin, 1, 1}, std::sqrt(6.0f / static_cast<float>(cin))));
    if (bias) {
        add_const(g_, id + ".b", random_weights({1, cout, 1, 1}, 0.1f));
        n.inputs.push_back(id + ".b");
    }
    return add_layer(std::move(n));
}

std::string GraphBuilder::unary(const std::string& id, LayerKind kind, const std::string& x) {
    return add_layer({id, kind, {}, {x}, {}});
}

std::string GraphBuilder::add(const std::string& id, const std::string& a, const std::string& b) {
    return add_layer({id, LayerKind::Add, {}, {a, b}, {}});
}

std::string GraphBuilder::pool(const std::string& id, LayerKind kind, const std::string& x, int k, int stride, int pad) {
    return add_layer({id, kind, {{k, k}, {stride, stride}, {pad, pad}, 1, false, 1}, {x}, {}});
}

std::string GraphBuilder::global_avg_pool(const std::string& id, const std::string& x) {
    return add_layer({id, LayerKind::GlobalAvgPool, {}, {x}, {}});
}

std::string GraphBuilder::upsample(const std::string& id, const std::string& x, int scale) {
    LayerNode n{id, LayerKind::UpsampleNearest, {}, {x}, {}};
    n.attrs.scale = scale;
    return add_layer(std::move(n));
}

std::string GraphBuilder::concat(const std::string& id, const std::vector<std::string>& xs) {
    return add_layer({id, LayerKind::Concat, {}, xs, {}});
}

void GraphBuilder::output(const std::string& name) { g_.outputs.push_back(name); }

Graph GraphBuilder::finish() { return infer_shapes(g_); }

namespace {

void check_input(int height, int width) {
    if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0)
        throw ValidationError("input " + std::to_string(height) + "x" + std::to_string(width) + " must be positive and divisible by 32");
}

} // namespace

Graph build_mobilenet_v1(double alpha, int height, int width, std::uint64_t seed) {
    check_input(height, width);
    return build_mobilenet_v1_any(alpha, height, width, seed);
}

Graph build_mobilenet_v1_any(double alpha, int height, int width, std::uint64_t seed) {
    if (alpha != 0.25 && alpha != 0.5 && alpha != 0.75 && alpha != 1.0)
        throw ValidationError("unsupported alpha " + std::to_string(alpha) + " (expected 0.25, 0.5, 0.75 or 1.0)");
    if (height <= 0 || width <= 0) throw ValidationError("input extents must be positive");
    auto ch = [&](int c) { return static_cast<int>(c * alpha); };
    GraphBuilder b(seed);
    std::string x = b.input("input", {1, 3, height, width});
    x = b.conv("conv1", x, ch(32), 3, 2, 1);
    x = b.unary("conv1_relu", LayerKind::ReLU, x);
    const std::pair<int, int> blocks[] = {{1, 64}, {2, 128}, {1, 128}, {2, 256}, {1, 256}, {2, 512}, {1, 512},
                                          {1, 512}, {1, 512}, {1, 512}, {1, 512}, {2, 1024}, {1, 1024}};
    int i = 1;
    for (auto [stride, cout] : blocks) {
        std::string n = std::to_string(i++);
        x = b.depthwise("dw" + n, x, 3, stride, 1);
        x = b.unary("dw" + n + "_relu", LayerKind::ReLU, x);
        x = b.conv("pw" + n, x, ch(cout), 1, 1, 0);
        x = b.unary("pw" + n + "_relu", LayerKind::ReLU, x);
    }
    x = b.global_avg_pool("pool", x);
    x = b.dense("fc", x, 1000);
    b.output(x);
    auto g = b.finish();
    g.name = "mobilenet_v1";
    return g;
}

Graph build_mobilenet_v2(int height, int width, std::uint64_t seed) {
    check_input(height, width);
    GraphBuilder b(seed);
    std::string x = b.input("input", {1, 3, height, width});
    x = b.conv("conv1", x, 32, 3, 2, 1);
    x = b.unary("conv1_relu6", LayerKind::ReLU6, x);
    struct Stage { int t, c, n, s; };
    const Stage stages[] = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2}, {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
    int blk = 0;
    for (const auto& st : stages) {
        for (int r = 0; r < st.n; ++r) {
            std::string p = "b" + std::to_string(blk++) + "_";
            int stride = r == 0 ? st.s : 1;
            auto cin = b.channels(x);
            std::string y = x;
            if (st.t != 1) {
                y = b.conv(p + "expand", y, static_cast<int>(cin * st.t), 1, 1, 0);
                y = b.unary(p + "expand_relu6", LayerKind::ReLU6, y);
            }
            y = b.depthwise(p + "dw", y, 3, stride, 1);
            y = b.unary(p + "dw_relu6", LayerKind::ReLU6, y);
            y = b.conv(p + "project", y, st.c, 1, 1, 0);
            if (stride == 1 && cin == st.c) y = b.add(p + "add", x, y);
            x = y;
        }
    }
    x = b.conv("conv_last", x, 1280, 1, 1, 0);
    x = b.unary("conv_last_relu6", LayerKind::ReLU6, x);
    x = b.global_avg_pool("pool", x);
    x = b.dense("fc", x, 1000);
    b.output(x);
    auto g = b.finish();
    g.name = "mobilenet_v2";
    return g;
}

} // namespace j3dai::ir
