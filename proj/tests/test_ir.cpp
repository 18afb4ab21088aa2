#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>
#include <random>

#include "j3dai/error.hpp"
#include "j3dai/ir.hpp"

using namespace j3dai;
using namespace j3dai::ir;
using nlohmann::json;

namespace {

json relu_doc() {
    return json::parse(R"({
      "tensors": [
        {"name": "x", "shape": [1, 8, 4, 4], "dtype": "float32"},
        {"name": "y", "shape": [1, 8, 4, 4], "dtype": "float32"}
      ],
      "layers": [{"id": "r", "kind": "ReLU", "inputs": ["x"], "outputs": ["y"]}],
      "inputs": ["x"],
      "outputs": ["y"]
    })");
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

// Independent MAC model: walks the layer table by hand, no graph involved.
std::uint64_t v1_macs_oracle(double alpha, std::int64_t h, std::int64_t w) {
    auto ch = [&](int c) { return static_cast<std::int64_t>(c * alpha); };
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    std::int64_t c = ch(32);
    std::uint64_t total = h * w * c * 3 * 9;
    const int blocks[][2] = {{1, 64}, {2, 128}, {1, 128}, {2, 256}, {1, 256}, {2, 512}, {1, 512},
                             {1, 512}, {1, 512}, {1, 512}, {1, 512}, {2, 1024}, {1, 1024}};
    for (auto& b : blocks) {
        if (b[0] == 2) {
            h = (h + 1) / 2;
            w = (w + 1) / 2;
        }
        total += h * w * c * 9;
        total += h * w * c * ch(b[1]);
        c = ch(b[1]);
    }
    return total + c * 1000;
}

std::uint64_t v2_macs_oracle(std::int64_t h, std::int64_t w) {
    h /= 2;
    w /= 2;
    std::uint64_t total = h * w * 32 * 27;
    std::int64_t c = 32;
    const int stages[][4] = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2}, {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
    for (auto& s : stages) {
        for (int r = 0; r < s[2]; ++r) {
            std::int64_t e = c * s[0];
            if (s[0] != 1) total += h * w * c * e;
            if (r == 0 && s[3] == 2) {
                h /= 2;
                w /= 2;
            }
            total += h * w * e * 9 + h * w * e * s[1];
            c = s[1];
        }
    }
    return total + h * w * c * 1280 + 1280 * 1000;
}

} // namespace

TEST_CASE("import of a one-ReLU document") {
    Graph g = import_json(relu_doc());
    CHECK(g.layers.size() == 1);
    CHECK(g.tensors.size() == 2);
}

TEST_CASE("export(import(doc)) equals doc up to key order and defaulted fields") {
    json doc = relu_doc();
    json round = export_json(import_json(doc));
    CHECK(import_json(round) == import_json(doc));
    CHECK(export_json(import_json(round)) == round);
    CHECK(round["layers"][0]["id"] == "r");
    CHECK(round["tensors"].size() == 2);
}

TEST_CASE("import errors name the offending element") {
    json doc = relu_doc();
    doc["layers"][0]["inputs"] = {"w1"};
    CHECK(error_of([&] { import_json(doc); }).find("\"w1\"") != std::string::npos);

    doc = relu_doc();
    doc["tensors"][0].erase("dtype");
    CHECK(error_of([&] { import_json(doc); }).find("dtype") != std::string::npos);

    doc = relu_doc();
    doc["tensors"][0]["shape"] = "big";
    CHECK(error_of([&] { import_json(doc); }).find("\"x\"") != std::string::npos);

    doc = relu_doc();
    doc["layers"][0]["colour"] = 1;
    CHECK(error_of([&] { import_json(doc); }).find("colour") != std::string::npos);

    // a -> b -> a
    doc = json::parse(R"({
      "tensors": [
        {"name": "x", "shape": [1, 1, 1, 1], "dtype": "float32"},
        {"name": "p", "shape": [1, 1, 1, 1], "dtype": "float32"},
        {"name": "q", "shape": [1, 1, 1, 1], "dtype": "float32"},
        {"name": "s", "shape": [1, 1, 1, 1], "dtype": "float32"}
      ],
      "layers": [
        {"id": "a", "kind": "Add", "inputs": ["x", "q"], "outputs": ["p"]},
        {"id": "b", "kind": "ReLU", "inputs": ["p"], "outputs": ["q"]},
        {"id": "c", "kind": "ReLU", "inputs": ["p"], "outputs": ["s"]}
      ],
      "inputs": ["x"], "outputs": ["s"]})");
    auto msg = error_of([&] { import_json(doc); });
    CHECK(msg.find("cycle") != std::string::npos);
    CHECK((msg.find("\"a\"") != std::string::npos || msg.find("\"b\"") != std::string::npos));
}

TEST_CASE("weight container round trip") {
    Container c;
    c.tensors["a"] = Tensor{{1, 1, 1, 3}, std::vector<float>{1.5f, -2.0f, 0.25f}};
    c.tensors["b"] = Tensor{{1, 1, 1, 5}, std::vector<std::int8_t>{-128, -1, 0, 1, 127}};
    c.tensors["c"] = Tensor{{2, 1, 1, 1}, std::vector<std::int32_t>{-70000, 123456789}};
    c.tensors["d"] = Tensor{{1, 1, 1, 2}, std::vector<std::uint8_t>{0, 255}};
    auto blob = c.blob();
    auto m = c.manifest("w.bin");
    CHECK(Container::parse(m, blob).tensors == c.tensors);
    // Two's complement, little endian.
    auto off = m["tensors"]["c"]["offset"].get<std::size_t>();
    CHECK(blob[off] == 0x90);
    CHECK(blob[off + 1] == 0xEE);
    CHECK(blob[off + 2] == 0xFE);
    CHECK(blob[off + 3] == 0xFF);
    auto boff = m["tensors"]["b"]["offset"].get<std::size_t>();
    CHECK(blob[boff] == 0x80);

    m["tensors"]["a"]["length"] = 8;
    CHECK_THROWS_AS(Container::parse(m, blob), ValidationError);
}

TEST_CASE("graph save/load keeps weights") {
    Graph g = build_mobilenet_v1(0.25, 64, 64, 3);
    auto dir = std::filesystem::temp_directory_path() / "j3dai_ir_test";
    save_graph(g, dir.string(), "net");
    Graph back = load_graph((dir / "net.json").string());
    CHECK(back == g);
    std::filesystem::remove_all(dir);
}

TEST_CASE("shape inference") {
    GraphBuilder b;
    auto x = b.input("x", {1, 3, 256, 192});
    auto y = b.conv("c", x, 32, 3, 2, 1);
    b.output(y);
    Graph g = b.finish();
    // floor((256 + 2 - 3)/2) + 1 = 128, floor((192 + 2 - 3)/2) + 1 = 96
    CHECK(g.tensor(y).shape == Shape{1, 32, 128, 96});

    json doc = relu_doc();
    doc["tensors"][1]["shape"] = {0, 0, 0, 0};
    Graph r = infer_shapes(import_json(doc));
    CHECK(r.tensor("y").shape == Shape{1, 8, 4, 4});
    CHECK(infer_shapes(r) == r);

    GraphBuilder bad;
    auto a = bad.input("a", {1, 8, 4, 4});
    auto c = bad.input("c", {1, 16, 4, 4});
    auto msg = error_of([&] { bad.add("sum", a, c); });
    CHECK(msg.find("\"sum\"") != std::string::npos);
    CHECK(msg.find("1x8x4x4") != std::string::npos);
    CHECK(msg.find("1x16x4x4") != std::string::npos);
}

TEST_CASE("MAC counting") {
    GraphBuilder b;
    auto x = b.input("x", {1, 8, 4, 4});
    auto y = b.conv("pw", x, 16, 1, 1, 0);
    auto z = b.unary("r", LayerKind::ReLU, y);
    b.output(z);
    Graph g = b.finish();
    // 4*4 * 16 * 8 * 1 * 1
    CHECK(mac_count(g).total == 2048);
    CHECK(mac_count(g).per_layer[1].second == 0);

    GraphBuilder u;
    auto in = u.input("x", {1, 8, 4, 4});
    u.output(u.unary("r", LayerKind::ReLU, in));
    Graph ug = u.finish();
    ug.tensor("r").shape = {0, 0, 0, 0};
    CHECK_THROWS_AS(mac_count(ug), ShapeError);
}

TEST_CASE("MobileNet builders agree with the independent MAC model") {
    CHECK(mac_count(build_mobilenet_v1(1.0, 256, 192)).total == v1_macs_oracle(1.0, 256, 192));
    CHECK(mac_count(build_mobilenet_v1(1.0, 224, 224)).total == v1_macs_oracle(1.0, 224, 224));
    CHECK(mac_count(build_mobilenet_v1(0.5, 256, 192)).total == v1_macs_oracle(0.5, 256, 192));
    CHECK(mac_count(build_mobilenet_v2(224, 224)).total == v2_macs_oracle(224, 224));
    CHECK(mac_count(build_mobilenet_v2(256, 192)).total == v2_macs_oracle(256, 192));

    auto v1 = mac_count(build_mobilenet_v1(1.0, 256, 192)).total;
    CHECK(mac_count(build_mobilenet_v1(0.5, 256, 192)).total < v1 / 2);
    CHECK(mac_count(build_mobilenet_v2(256, 192)).total < v1);

    Graph v2 = build_mobilenet_v2(256, 192);
    CHECK(std::count_if(v2.layers.begin(), v2.layers.end(), [](const LayerNode& l) { return l.kind == LayerKind::Add; }) >= 1);

    Graph v1g = build_mobilenet_v1(1.0, 256, 192);
    auto weighted = std::count_if(v1g.layers.begin(), v1g.layers.end(), [](const LayerNode& l) { return has_weights(l.kind); });
    CHECK(weighted == 28);

    CHECK_THROWS_AS(build_mobilenet_v1(0.3, 256, 192), ValidationError);
    CHECK_THROWS_AS(build_mobilenet_v1(1.0, 250, 192), ValidationError);
    CHECK_THROWS_AS(build_mobilenet_v2(256, 190), ValidationError);
}

TEST_CASE("property: MAC total invariant under topological reordering") {
    Graph g = build_mobilenet_v2(64, 64);
    auto base = mac_count(g).total;
    std::mt19937 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        // Random topological order: repeatedly pick a random ready layer.
        Graph h = g;
        h.layers.clear();
        std::vector<bool> done(g.layers.size(), false);
        std::set<std::string> avail(g.inputs.begin(), g.inputs.end());
        for (const auto& [n, t] : g.constants) avail.insert(n);
        while (h.layers.size() < g.layers.size()) {
            std::vector<std::size_t> ready;
            for (std::size_t i = 0; i < g.layers.size(); ++i) {
                if (done[i]) continue;
                const auto& ins = g.layers[i].inputs;
                if (std::all_of(ins.begin(), ins.end(), [&](const std::string& s) { return avail.count(s) > 0; })) ready.push_back(i);
            }
            REQUIRE(!ready.empty());
            auto pick = ready[rng() % ready.size()];
            done[pick] = true;
            h.layers.push_back(g.layers[pick]);
            avail.insert(g.layers[pick].outputs[0]);
        }
        validate(h);
        CHECK(mac_count(h).total == base);
        CHECK(infer_shapes(h).tensors == g.tensors);
    }
}
