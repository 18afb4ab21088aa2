#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

#include "j3dai/error.hpp"
#include "j3dai/ir.hpp"

namespace j3dai::ir {

const char* dtype_name(DType t) {
    switch (t) {
    case DType::Float32: return "float32";
    case DType::Int8: return "int8";
    case DType::UInt8: return "uint8";
    case DType::Int32: return "int32";
    }
    return "?";
}

DType dtype_from(const std::string& s) {
    if (s == "float32") return DType::Float32;
    if (s == "int8") return DType::Int8;
    if (s == "uint8") return DType::UInt8;
    if (s == "int32") return DType::Int32;
    throw ValidationError("unknown dtype \"" + s + "\"");
}

std::size_t dtype_size(DType t) {
    switch (t) {
    case DType::Float32: return 4;
    case DType::Int8: return 1;
    case DType::UInt8: return 1;
    case DType::Int32: return 4;
    }
    return 0;
}

std::int64_t numel(const Shape& s) { return s[0] * s[1] * s[2] * s[3]; }

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << s[0] << "x" << s[1] << "x" << s[2] << "x" << s[3];
    return os.str();
}

bool TensorSpec::resolved() const {
    return std::all_of(shape.begin(), shape.end(), [](std::int64_t e) { return e >= 1; });
}

DType Tensor::dtype() const {
    switch (data.index()) {
    case 0: return DType::Float32;
    case 1: return DType::Int8;
    case 2: return DType::UInt8;
    default: return DType::Int32;
    }
}

Tensor Tensor::zeros(const Shape& s, DType t) {
    Tensor out;
    out.shape = s;
    auto n = static_cast<std::size_t>(numel(s));
    switch (t) {
    case DType::Float32: out.data = std::vector<float>(n, 0.0f); break;
    case DType::Int8: out.data = std::vector<std::int8_t>(n, 0); break;
    case DType::UInt8: out.data = std::vector<std::uint8_t>(n, 0); break;
    case DType::Int32: out.data = std::vector<std::int32_t>(n, 0); break;
    }
    return out;
}

namespace {
constexpr std::pair<LayerKind, const char*> kKinds[] = {
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::DepthwiseConv2D, "DepthwiseConv2D"},
    {LayerKind::Dense, "Dense"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::ReLU6, "ReLU6"},
    {LayerKind::Add, "Add"},
    {LayerKind::MaxPool, "MaxPool"},
    {LayerKind::AvgPool, "AvgPool"},
    {LayerKind::GlobalAvgPool, "GlobalAvgPool"},
    {LayerKind::UpsampleNearest, "UpsampleNearest"},
    {LayerKind::Concat, "Concat"},
};
} // namespace

const char* kind_name(LayerKind k) {
    for (auto [kind, name] : kKinds)
        if (kind == k) return name;
    return "?";
}

LayerKind kind_from(const std::string& s) {
    for (auto [kind, name] : kKinds)
        if (s == name) return kind;
    throw ValidationError("unknown layer kind \"" + s + "\"");
}

bool has_weights(LayerKind k) {
    return k == LayerKind::Conv2D || k == LayerKind::DepthwiseConv2D || k == LayerKind::Dense;
}

const TensorSpec& Graph::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("undefined tensor \"" + name + "\"");
    return it->second;
}

TensorSpec& Graph::tensor(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("undefined tensor \"" + name + "\"");
    return it->second;
}

const LayerNode& Graph::layer(const std::string& id) const {
    for (const auto& l : layers)
        if (l.id == id) return l;
    throw ValidationError("undefined layer \"" + id + "\"");
}

std::vector<std::string> Graph::activation_inputs(const LayerNode& l) const {
    std::vector<std::string> out;
    for (const auto& n : l.inputs)
        if (!is_constant(n)) out.push_back(n);
    return out;
}

int Graph::producer(const std::string& t) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        for (const auto& o : layers[i].outputs)
            if (o == t) return static_cast<int>(i);
    return -1;
}

std::vector<int> Graph::consumers(const std::string& t) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
        for (const auto& n : layers[i].inputs)
            if (n == t) {
                out.push_back(static_cast<int>(i));
                break;
            }
    return out;
}

std::vector<int> topological_order(const Graph& g) {
    const auto n = g.layers.size();
    std::map<std::string, int> producer;
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& o : g.layers[i].outputs) producer[o] = static_cast<int>(i);

    std::vector<int> indeg(n, 0);
    std::vector<std::vector<int>> succ(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::set<int> preds;
        for (const auto& in : g.layers[i].inputs) {
            auto it = producer.find(in);
            if (it != producer.end()) preds.insert(it->second);
        }
        for (int p : preds) {
            succ[p].push_back(static_cast<int>(i));
            ++indeg[i];
        }
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push(static_cast<int>(i));
    std::vector<int> order;
    while (!ready.empty()) {
        int i = ready.top();
        ready.pop();
        order.push_back(i);
        for (int s : succ[i])
            if (--indeg[s] == 0) ready.push(s);
    }
    if (order.size() != n) {
        for (std::size_t i = 0; i < n; ++i)
            if (indeg[i] > 0) throw ValidationError("cycle detected through layer \"" + g.layers[i].id + "\"");
    }
    return order;
}

void validate(const Graph& g) {
    for (const auto& [name, t] : g.tensors) {
        if (name != t.name) throw ValidationError("tensor key \"" + name + "\" does not match its name \"" + t.name + "\"");
        for (auto e : t.shape)
            if (e < 0) throw ValidationError("tensor \"" + name + "\" has a negative extent");
    }
    for (const auto& [name, c] : g.constants) {
        const auto& spec = g.tensor(name);
        if (c.shape != spec.shape) throw ValidationError("constant \"" + name + "\" data shape differs from its spec");
        if (c.dtype() != spec.dtype) throw ValidationError("constant \"" + name + "\" data dtype differs from its spec");
        if (static_cast<std::int64_t>(std::visit([](const auto& v) { return v.size(); }, c.data)) != numel(c.shape))
            throw ValidationError("constant \"" + name + "\" has the wrong element count");
    }
    std::set<std::string> ids;
    std::map<std::string, std::string> produced_by;
    for (const auto& l : g.layers) {
        if (!ids.insert(l.id).second) throw ValidationError("duplicate layer id \"" + l.id + "\"");
        for (const auto& in : l.inputs)
            if (!g.tensors.count(in)) throw ValidationError("layer \"" + l.id + "\" references undefined tensor \"" + in + "\"");
        if (l.outputs.size() != 1) throw ValidationError("layer \"" + l.id + "\" must have exactly one output");
        for (const auto& out : l.outputs) {
            if (!g.tensors.count(out)) throw ValidationError("layer \"" + l.id + "\" references undefined tensor \"" + out + "\"");
            if (g.is_constant(out)) throw ValidationError("layer \"" + l.id + "\" writes constant \"" + out + "\"");
            auto [it, fresh] = produced_by.emplace(out, l.id);
            if (!fresh)
                throw ValidationError("tensor \"" + out + "\" produced by both \"" + it->second + "\" and \"" + l.id + "\"");
        }
        auto acts = g.activation_inputs(l);
        switch (l.kind) {
        case LayerKind::Conv2D:
        case LayerKind::DepthwiseConv2D:
        case LayerKind::Dense: {
            std::size_t want = l.attrs.has_bias ? 3 : 2;
            if (l.inputs.size() != want || acts.size() != 1 || !g.is_constant(l.inputs[1]) ||
                (l.attrs.has_bias && !g.is_constant(l.inputs[2])))
                throw ValidationError("layer \"" + l.id + "\" expects [activation, weight" +
                                      std::string(l.attrs.has_bias ? ", bias]" : "]"));
            break;
        }
        case LayerKind::Add:
            if (l.inputs.size() != 2 || acts.size() != 2) throw ValidationError("layer \"" + l.id + "\" expects two activations");
            break;
        case LayerKind::Concat:
            if (l.inputs.empty() || acts.size() != l.inputs.size())
                throw ValidationError("layer \"" + l.id + "\" expects one or more activations");
            break;
        default:
            if (l.inputs.size() != 1 || acts.size() != 1) throw ValidationError("layer \"" + l.id + "\" expects one activation");
        }
        if (l.attrs.kernel.h < 1 || l.attrs.kernel.w < 1 || l.attrs.stride.h < 1 || l.attrs.stride.w < 1 ||
            l.attrs.padding.h < 0 || l.attrs.padding.w < 0 || l.attrs.groups < 1 || l.attrs.scale < 1)
            throw ValidationError("layer \"" + l.id + "\" has out-of-range attributes");
    }
    for (const auto& in : g.inputs) {
        g.tensor(in);
        if (produced_by.count(in)) throw ValidationError("graph input \"" + in + "\" is produced by a layer");
        if (g.is_constant(in)) throw ValidationError("graph input \"" + in + "\" is a constant");
    }
    for (const auto& out : g.outputs) {
        g.tensor(out);
        if (!produced_by.count(out) && std::find(g.inputs.begin(), g.inputs.end(), out) == g.inputs.end())
            throw ValidationError("graph output \"" + out + "\" is never produced");
    }
    for (const auto& [name, t] : g.tensors) {
        if (g.is_constant(name)) continue;
        bool is_input = std::find(g.inputs.begin(), g.inputs.end(), name) != g.inputs.end();
        if (!is_input && !produced_by.count(name)) throw ValidationError("tensor \"" + name + "\" is never produced");
    }
    topological_order(g);
}

} // namespace j3dai::ir
