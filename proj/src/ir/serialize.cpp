#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "j3dai/error.hpp"
#include "j3dai/ir.hpp"

namespace j3dai::ir {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ValidationError(where + ": unknown field \"" + it.key() + "\"");
}

const json& need(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing field \"" + key + "\"");
    return j.at(key);
}

template <typename T>
T typed(const json& v, const std::string& what) {
    try {
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ValidationError(what + ": expected a string");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ValidationError(what + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ValidationError(what + ": expected an integer");
        } else {
            if (!v.is_number()) throw ValidationError(what + ": expected a number");
        }
        return v.get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(what + ": " + e.what());
    }
}

Shape shape_from(const json& v, const std::string& what) {
    if (!v.is_array() || v.size() != 4) throw ValidationError(what + ": shape must be a 4-element array");
    Shape s{};
    for (std::size_t i = 0; i < 4; ++i) s[i] = typed<std::int64_t>(v[i], what);
    return s;
}

Pair pair_from(const json& v, const std::string& what) {
    if (!v.is_array() || v.size() != 2) throw ValidationError(what + ": expected [h, w]");
    return {typed<int>(v[0], what), typed<int>(v[1], what)};
}

json requant_json(const Requant& r) { return {{"m0", r.m0}, {"shift", r.shift}}; }

Requant requant_from(const json& j, const std::string& where) {
    reject_unknown(j, {"m0", "shift"}, where);
    return {typed<std::int64_t>(need(j, "m0", where), where + ".m0"), typed<int>(need(j, "shift", where), where + ".shift")};
}

json quant_json(const QuantParams& q) {
    json j = {{"scale", q.scale}, {"zero_point", q.zero_point}, {"bitwidth", q.bitwidth}, {"signed", q.is_signed}};
    if (q.requant) j["requant"] = requant_json(*q.requant);
    if (!q.input_multipliers.empty()) j["input_multipliers"] = q.input_multipliers;
    if (!q.input_requants.empty()) {
        json arr = json::array();
        for (const auto& r : q.input_requants) arr.push_back(requant_json(r));
        j["input_requants"] = arr;
    }
    return j;
}

QuantParams quant_from(const json& j, const std::string& where) {
    reject_unknown(j, {"scale", "zero_point", "bitwidth", "signed", "requant", "input_multipliers", "input_requants"}, where);
    QuantParams q;
    q.scale = typed<double>(need(j, "scale", where), where + ".scale");
    q.zero_point = typed<std::int32_t>(need(j, "zero_point", where), where + ".zero_point");
    q.bitwidth = typed<int>(need(j, "bitwidth", where), where + ".bitwidth");
    q.is_signed = typed<bool>(need(j, "signed", where), where + ".signed");
    if (j.contains("requant")) q.requant = requant_from(j.at("requant"), where + ".requant");
    if (j.contains("input_multipliers")) {
        for (const auto& v : j.at("input_multipliers")) q.input_multipliers.push_back(typed<std::int32_t>(v, where));
    }
    if (j.contains("input_requants")) {
        for (const auto& v : j.at("input_requants")) q.input_requants.push_back(requant_from(v, where + ".input_requants"));
    }
    return q;
}

template <typename T>
void append_bytes(std::vector<std::uint8_t>& out, const std::vector<T>& v) {
    auto off = out.size();
    out.resize(off + v.size() * sizeof(T));
    if (!v.empty()) std::memcpy(out.data() + off, v.data(), v.size() * sizeof(T));
}

template <typename T>
std::vector<T> read_vec(const std::vector<std::uint8_t>& blob, std::uint64_t off, std::uint64_t n) {
    std::vector<T> v(n);
    if (n) std::memcpy(v.data(), blob.data() + off, n * sizeof(T));
    return v;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

} // namespace

// ---- container ----

json Container::manifest(const std::string& bin_file) const {
    json entries = json::object();
    std::uint64_t off = 0;
    for (const auto& [name, t] : tensors) {
        std::uint64_t len = static_cast<std::uint64_t>(t.size()) * dtype_size(t.dtype());
        entries[name] = {{"offset", off},
                         {"length", len},
                         {"dtype", dtype_name(t.dtype())},
                         {"shape", std::vector<std::int64_t>(t.shape.begin(), t.shape.end())}};
        off += (len + 7) / 8 * 8;
    }
    return {{"file", bin_file}, {"tensors", entries}};
}

std::vector<std::uint8_t> Container::blob() const {
    std::vector<std::uint8_t> out;
    for (const auto& [name, t] : tensors) {
        std::visit([&](const auto& v) { append_bytes(out, v); }, t.data);
        out.resize((out.size() + 7) / 8 * 8, 0);
    }
    return out;
}

Container Container::parse(const json& manifest, const std::vector<std::uint8_t>& blob) {
    reject_unknown(manifest, {"file", "tensors"}, "manifest");
    Container c;
    const json& entries = need(manifest, "tensors", "manifest");
    for (auto it = entries.begin(); it != entries.end(); ++it) {
        const std::string where = "manifest tensor \"" + it.key() + "\"";
        reject_unknown(it.value(), {"offset", "length", "dtype", "shape"}, where);
        auto off = typed<std::uint64_t>(need(it.value(), "offset", where), where);
        auto len = typed<std::uint64_t>(need(it.value(), "length", where), where);
        DType dt = dtype_from(typed<std::string>(need(it.value(), "dtype", where), where));
        Tensor t;
        t.shape = shape_from(need(it.value(), "shape", where), where);
        auto n = static_cast<std::uint64_t>(numel(t.shape));
        if (n * dtype_size(dt) != len) throw ValidationError(where + ": length does not match shape and dtype");
        if (off + len > blob.size()) throw ValidationError(where + ": byte range exceeds the binary file");
        switch (dt) {
        case DType::Float32: t.data = read_vec<float>(blob, off, n); break;
        case DType::Int8: t.data = read_vec<std::int8_t>(blob, off, n); break;
        case DType::UInt8: t.data = read_vec<std::uint8_t>(blob, off, n); break;
        case DType::Int32: t.data = read_vec<std::int32_t>(blob, off, n); break;
        }
        c.tensors.emplace(it.key(), std::move(t));
    }
    return c;
}

void Container::save(const std::string& manifest_path, const std::string& bin_path) const {
    std::ofstream m(manifest_path);
    if (!m) throw ValidationError("cannot write " + manifest_path);
    m << manifest(std::filesystem::path(bin_path).filename().string()).dump(2) << "\n";
    std::ofstream b(bin_path, std::ios::binary);
    if (!b) throw ValidationError("cannot write " + bin_path);
    auto bytes = blob();
    b.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Container Container::load(const std::string& manifest_path) {
    json m = read_json_file(manifest_path);
    auto dir = std::filesystem::path(manifest_path).parent_path();
    auto file = typed<std::string>(need(m, "file", "manifest"), "manifest.file");
    return parse(m, read_file((dir / file).string()));
}

// ---- IR document ----

json export_json(const Graph& g) {
    json tensors = json::array();
    for (const auto& [name, t] : g.tensors) {
        json jt = {{"name", name},
                   {"shape", std::vector<std::int64_t>(t.shape.begin(), t.shape.end())},
                   {"dtype", dtype_name(t.dtype)},
                   {"constant", g.is_constant(name)}};
        if (t.quant) jt["quant"] = quant_json(*t.quant);
        tensors.push_back(jt);
    }
    json layers = json::array();
    for (const auto& l : g.layers) {
        const auto& a = l.attrs;
        layers.push_back({{"id", l.id},
                          {"kind", kind_name(l.kind)},
                          {"inputs", l.inputs},
                          {"outputs", l.outputs},
                          {"attrs",
                           {{"kernel", {a.kernel.h, a.kernel.w}},
                            {"stride", {a.stride.h, a.stride.w}},
                            {"padding", {a.padding.h, a.padding.w}},
                            {"groups", a.groups},
                            {"has_bias", a.has_bias},
                            {"scale", a.scale}}}});
    }
    json doc = {{"tensors", tensors}, {"layers", layers}, {"inputs", g.inputs}, {"outputs", g.outputs}};
    if (!g.name.empty()) doc["name"] = g.name;
    return doc;
}

Graph import_json(const json& doc, const Container& weights) {
    reject_unknown(doc, {"name", "tensors", "layers", "inputs", "outputs", "weights"}, "IR document");
    Graph g;
    if (doc.contains("name")) g.name = typed<std::string>(doc.at("name"), "name");
    const json& tensors = need(doc, "tensors", "IR document");
    if (!tensors.is_array()) throw ValidationError("IR document: \"tensors\" must be an array");
    for (const auto& jt : tensors) {
        std::string name = typed<std::string>(need(jt, "name", "tensor"), "tensor.name");
        const std::string where = "tensor \"" + name + "\"";
        reject_unknown(jt, {"name", "shape", "dtype", "constant", "quant"}, where);
        TensorSpec t;
        t.name = name;
        t.shape = shape_from(need(jt, "shape", where), where);
        t.dtype = dtype_from(typed<std::string>(need(jt, "dtype", where), where + ".dtype"));
        if (jt.contains("quant")) t.quant = quant_from(jt.at("quant"), where + ".quant");
        bool constant = jt.contains("constant") && typed<bool>(jt.at("constant"), where + ".constant");
        if (constant) {
            auto it = weights.tensors.find(name);
            if (it == weights.tensors.end()) throw ValidationError(where + ": no data in the weight container");
            if (it->second.shape != t.shape || it->second.dtype() != t.dtype)
                throw ValidationError(where + ": weight container entry disagrees on shape or dtype");
            g.constants.emplace(name, it->second);
        }
        if (!g.tensors.emplace(name, std::move(t)).second) throw ValidationError("duplicate tensor \"" + name + "\"");
    }
    const json& layers = need(doc, "layers", "IR document");
    if (!layers.is_array()) throw ValidationError("IR document: \"layers\" must be an array");
    for (const auto& jl : layers) {
        LayerNode l;
        l.id = typed<std::string>(need(jl, "id", "layer"), "layer.id");
        const std::string where = "layer \"" + l.id + "\"";
        reject_unknown(jl, {"id", "kind", "inputs", "outputs", "attrs"}, where);
        l.kind = kind_from(typed<std::string>(need(jl, "kind", where), where + ".kind"));
        for (const auto& v : need(jl, "inputs", where)) l.inputs.push_back(typed<std::string>(v, where + ".inputs"));
        for (const auto& v : need(jl, "outputs", where)) l.outputs.push_back(typed<std::string>(v, where + ".outputs"));
        if (jl.contains("attrs")) {
            const json& a = jl.at("attrs");
            reject_unknown(a, {"kernel", "stride", "padding", "groups", "has_bias", "scale"}, where + ".attrs");
            if (a.contains("kernel")) l.attrs.kernel = pair_from(a.at("kernel"), where + ".kernel");
            if (a.contains("stride")) l.attrs.stride = pair_from(a.at("stride"), where + ".stride");
            if (a.contains("padding")) l.attrs.padding = pair_from(a.at("padding"), where + ".padding");
            if (a.contains("groups")) l.attrs.groups = typed<int>(a.at("groups"), where + ".groups");
            if (a.contains("has_bias")) l.attrs.has_bias = typed<bool>(a.at("has_bias"), where + ".has_bias");
            if (a.contains("scale")) l.attrs.scale = typed<int>(a.at("scale"), where + ".scale");
        }
        g.layers.push_back(std::move(l));
    }
    for (const auto& v : need(doc, "inputs", "IR document")) g.inputs.push_back(typed<std::string>(v, "inputs"));
    for (const auto& v : need(doc, "outputs", "IR document")) g.outputs.push_back(typed<std::string>(v, "outputs"));
    validate(g);
    return g;
}

Graph import_json(const json& doc) { return import_json(doc, Container{}); }

void save_graph(const Graph& g, const std::string& dir, const std::string& stem) {
    std::filesystem::create_directories(dir);
    auto base = std::filesystem::path(dir);
    Container c;
    c.tensors = g.constants;
    c.save((base / (stem + ".weights.json")).string(), (base / (stem + ".weights.bin")).string());
    json doc = export_json(g);
    doc["weights"] = stem + ".weights.json";
    std::ofstream out(base / (stem + ".json"));
    if (!out) throw ValidationError("cannot write " + (base / (stem + ".json")).string());
    out << doc.dump(1) << "\n";
}

Graph load_graph(const std::string& ir_path) {
    json doc = read_json_file(ir_path);
    Container c;
    if (doc.contains("weights")) {
        auto manifest = std::filesystem::path(ir_path).parent_path() / typed<std::string>(doc.at("weights"), "weights");
        c = Container::load(manifest.string());
    }
    return import_json(doc, c);
}

} // namespace j3dai::ir
