#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace j3dai::ir {

enum class DType { Float32, Int8, UInt8, Int32 };

const char* dtype_name(DType t);
DType dtype_from(const std::string& s);
std::size_t dtype_size(DType t);

// Fixed-point multiplier: real ratio = m0 * 2^-(30 + shift), m0 in [2^30, 2^31).
struct Requant {
    std::int64_t m0 = 1ll << 30;
    int shift = 0;
    bool operator==(const Requant&) const = default;
};

struct QuantParams {
    double scale = 1.0;
    std::int32_t zero_point = 0;
    int bitwidth = 8;
    bool is_signed = false;
    // Set on tensors produced by a layer that narrows a 32-bit accumulator.
    std::optional<Requant> requant;
    // Add: integer weights applied to each operand before the shared requant.
    std::vector<std::int32_t> input_multipliers;
    // Concat: one requant per operand.
    std::vector<Requant> input_requants;

    bool operator==(const QuantParams&) const = default;
};

// N, C, H, W. Zero marks an extent that shape inference has not resolved yet.
using Shape = std::array<std::int64_t, 4>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorSpec {
    std::string name;
    Shape shape{0, 0, 0, 0};
    DType dtype = DType::Float32;
    std::optional<QuantParams> quant;

    bool resolved() const;
    bool operator==(const TensorSpec&) const = default;
};

using Buffer = std::variant<std::vector<float>, std::vector<std::int8_t>, std::vector<std::uint8_t>, std::vector<std::int32_t>>;

// Dense NCHW tensor value.
struct Tensor {
    Shape shape{1, 1, 1, 1};
    Buffer data = std::vector<float>{};

    DType dtype() const;
    std::int64_t size() const { return numel(shape); }

    static Tensor zeros(const Shape& s, DType t);

    template <typename T>
    std::vector<T>& as() { return std::get<std::vector<T>>(data); }
    template <typename T>
    const std::vector<T>& as() const { return std::get<std::vector<T>>(data); }

    bool operator==(const Tensor&) const = default;
};

enum class LayerKind {
    Conv2D,
    DepthwiseConv2D,
    Dense,
    ReLU,
    ReLU6,
    Add,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    UpsampleNearest,
    Concat,
};

const char* kind_name(LayerKind k);
LayerKind kind_from(const std::string& s);

struct Pair {
    int h = 1;
    int w = 1;
    bool operator==(const Pair&) const = default;
};

struct LayerAttrs {
    Pair kernel{1, 1};
    Pair stride{1, 1};
    Pair padding{0, 0};
    int groups = 1;
    bool has_bias = false;
    int scale = 1; // UpsampleNearest factor
    bool operator==(const LayerAttrs&) const = default;
};

// Inputs: Conv2D/DepthwiseConv2D/Dense take [x, weight, (bias)]; Add takes two
// activations; Concat takes any number (channel axis); the rest take one.
struct LayerNode {
    std::string id;
    LayerKind kind = LayerKind::ReLU;
    LayerAttrs attrs;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    bool operator==(const LayerNode&) const = default;
};

bool has_weights(LayerKind k);

struct Graph {
    std::string name; // workload label, optional
    std::map<std::string, TensorSpec> tensors;
    std::map<std::string, Tensor> constants;
    std::vector<LayerNode> layers;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    const TensorSpec& tensor(const std::string& name) const;
    TensorSpec& tensor(const std::string& name);
    const LayerNode& layer(const std::string& id) const;
    bool is_constant(const std::string& name) const { return constants.count(name) > 0; }
    // Activation inputs of a layer (constants excluded).
    std::vector<std::string> activation_inputs(const LayerNode& l) const;
    // Index of the layer producing a tensor, or -1 for graph inputs/constants.
    int producer(const std::string& tensor) const;
    std::vector<int> consumers(const std::string& tensor) const;

    bool operator==(const Graph&) const = default;
};

// Checks names, references, producers and acyclicity. Throws ValidationError.
void validate(const Graph& g);

// Kahn order; ties broken by position in `layers`. Throws on a cycle, naming a layer on it.
std::vector<int> topological_order(const Graph& g);

// ---- serialization ----

struct ContainerEntry {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    DType dtype = DType::UInt8;
    Shape shape{1, 1, 1, 1};
};

// Flat little-endian binary plus a JSON manifest mapping names to byte ranges.
struct Container {
    std::map<std::string, Tensor> tensors;

    nlohmann::json manifest(const std::string& bin_file) const;
    std::vector<std::uint8_t> blob() const;
    static Container parse(const nlohmann::json& manifest, const std::vector<std::uint8_t>& blob);

    void save(const std::string& manifest_path, const std::string& bin_path) const;
    static Container load(const std::string& manifest_path);
};

nlohmann::json export_json(const Graph& g);
// `weights` supplies the data for every tensor the document marks "constant".
Graph import_json(const nlohmann::json& doc, const Container& weights);
Graph import_json(const nlohmann::json& doc);

// Writes <stem>.json (IR), <stem>.weights.json (manifest) and <stem>.weights.bin.
void save_graph(const Graph& g, const std::string& dir, const std::string& stem);
Graph load_graph(const std::string& ir_path);

// ---- analysis ----

Graph infer_shapes(const Graph& g);
// Output shape of one layer given resolved input shapes in `g`.
Shape infer_layer_shape(const Graph& g, const LayerNode& l);

struct MacReport {
    std::vector<std::pair<std::string, std::uint64_t>> per_layer;
    std::uint64_t total = 0;
};

std::uint64_t layer_macs(const Graph& g, const LayerNode& l);
MacReport mac_count(const Graph& g);

// ---- workload builders (deterministic placeholder weights) ----

Graph build_mobilenet_v1(double alpha, int height, int width, std::uint64_t seed = 1);
Graph build_mobilenet_v2(int height, int width, std::uint64_t seed = 1);
// MobileNetV1 topology for any positive input size (small fixtures such as 64x48).
Graph build_mobilenet_v1_any(double alpha, int height, int width, std::uint64_t seed = 1);

// Small float graphs for end-to-end checks. Each takes one input named "x".
//   tiny_cnn(0)  conv, fused ReLU, maxpool, pointwise conv, GAP, dense
//   tiny_cnn(1)  residual Add, depthwise conv, ReLU6, avgpool
//   tiny_cnn(2)  upsample, concat of two branches, standalone ReLU
//   tiny_cnn(3)  chunked pointwise reduction over 40 channels, strided 5x5 conv
Graph build_tiny_cnn(int variant, std::uint64_t seed = 1);
constexpr int kTinyCnnVariants = 4;
// Two layers where the second one's parameters can load while the first computes.
Graph build_overlap_pair(std::uint64_t seed = 1);
// 2 to 6 random layers on a small random input; every layer kind can appear.
Graph build_random_tiny(std::uint64_t seed);

// Incremental builder used by the workload builders and tests.
class GraphBuilder {
public:
    explicit GraphBuilder(std::uint64_t seed = 1) : rng_(seed) {}

    std::string input(const std::string& name, const Shape& shape);
    std::string conv(const std::string& id, const std::string& x, int cout, int k, int stride, int pad, bool bias = true);
    std::string depthwise(const std::string& id, const std::string& x, int k, int stride, int pad, bool bias = true);
    std::string dense(const std::string& id, const std::string& x, int cout, bool bias = true);
    std::string unary(const std::string& id, LayerKind kind, const std::string& x);
    std::string add(const std::string& id, const std::string& a, const std::string& b);
    std::string pool(const std::string& id, LayerKind kind, const std::string& x, int k, int stride, int pad);
    std::string global_avg_pool(const std::string& id, const std::string& x);
    std::string upsample(const std::string& id, const std::string& x, int scale);
    std::string concat(const std::string& id, const std::vector<std::string>& xs);
    void output(const std::string& name);

    // Shapes are inferred on return.
    Graph finish();

    // Channel count of an activation tensor (requires inferred shapes upstream).
    std::int64_t channels(const std::string& x) const;

private:
    float uniform(float lo, float hi);
    std::string add_layer(LayerNode node);
    Tensor random_weights(const Shape& s, float bound);

    Graph g_;
    std::mt19937_64 rng_;
};

} // namespace j3dai::ir
