#include <doctest.h>

#include <bit>
#include <random>

#include "j3dai/error.hpp"
#include "j3dai/mapper.hpp"

using namespace j3dai;
using ir::LayerKind;

namespace {

// 2 clusters of 2 NCBs, 4 banks of 512 bytes.
arch::HardwareConfig small_config() {
    auto cfg = arch::j3dai_default();
    cfg.num_clusters = 2;
    cfg.ncb_per_cluster = 2;
    cfg.ncb_bank_bytes = 512;
    cfg.dmpa_width_bits = 2 * cfg.ncb_bank_width_bits;
    return cfg;
}

ir::Graph pointwise_graph() {
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 8, 4, 4});
    b.output(b.conv("pw", x, 16, 1, 1, 0));
    return b.finish();
}

// Small random graphs over every lowered kernel.
ir::Graph toy_graph(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int n) { return static_cast<int>(rng() % n); };
    ir::GraphBuilder b(seed);
    int h = 2 + pick(5), w = 2 + pick(5), c = 1 + pick(12);
    auto x = b.input("x", {1, c, h, w});
    int n = 1 + pick(3);
    for (int i = 0; i < n; ++i) {
        std::string id = "l" + std::to_string(i);
        int kind = pick(8);
        if ((kind == 3 || kind == 7) && (h < 2 || w < 2)) kind = 1;
        switch (kind) {
        case 0: {
            int s = 1 + pick(2);
            x = b.conv(id, x, 1 + pick(12), 3, s, 1);
            h = (h - 1) / s + 1;
            w = (w - 1) / s + 1;
            break;
        }
        case 1: x = b.conv(id, x, 1 + pick(16), 1, 1, 0); break;
        case 2: x = b.depthwise(id, x, 3, 1, 1); break;
        case 3: x = b.pool(id, LayerKind::MaxPool, x, 2, 1, 0), --h, --w; break;
        case 4: x = b.add(id, x, b.unary(id + "r", LayerKind::ReLU, x)); break;
        case 5: x = b.upsample(id, x, 2), h *= 2, w *= 2; break;
        case 6: x = b.concat(id, {x, b.conv(id + "c", x, 1 + pick(6), 1, 1, 0)}); break;
        default: x = b.unary(id, LayerKind::ReLU6, b.pool(id + "p", LayerKind::AvgPool, x, 2, 1, 0)), --h, --w; break;
        }
    }
    b.output(x);
    return b.finish();
}

int items_covered(const map::LayerPlan& lp) {
    int n = 0;
    for (const auto& t : lp.transfers)
        if (t.kind == map::TransferKind::Input) n += std::popcount(t.columns);
    return n;
}

} // namespace

TEST_CASE("pointwise layer maps to a single wave") {
    auto cfg = arch::j3dai_default();
    auto p = map::plan_mapping(pointwise_graph(), cfg);
    REQUIRE(p.layers.size() == 1);
    const auto& lp = p.layers[0];
    CHECK(lp.kernel == map::Kernel::Conv);
    CHECK(lp.waves == 1);
    CHECK(lp.chunks == 1);
    CHECK(lp.groups == 2);
    CHECK(lp.macs == 16u * 8 * 16);
    CHECK(items_covered(lp) == lp.items);
    int blocks = map::param_blocks(lp);
    CHECK(blocks == lp.tile.gt);
    // Per active cluster: one input, one output and every parameter block.
    std::map<int, int> in, out, params;
    for (const auto& t : lp.transfers) {
        if (t.kind == map::TransferKind::Input) ++in[t.cluster];
        if (t.kind == map::TransferKind::Output) ++out[t.cluster];
        if (t.kind == map::TransferKind::Params) ++params[t.cluster];
    }
    for (const auto& [c, n] : in) {
        CHECK(n == 1);
        CHECK(out[c] == 1);
        CHECK(params[c] == blocks);
    }
    CHECK(map::block_bytes(lp, 0, cfg) == 32 + 8 * 8);
    CHECK(lp.param_bytes == static_cast<std::uint64_t>((lp.groups + lp.tile.gt - 1) / lp.tile.gt * lp.tile.gt) * (32 + 64));
    CHECK(map::check_fit(p, cfg).ok());
    CHECK(p.est_cycles == map::estimate_cycles(p, cfg));
}

TEST_CASE("large layer on a small machine needs several waves") {
    auto cfg = small_config();
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 16, 12, 12});
    b.output(b.conv("c", x, 16, 3, 1, 1));
    auto p = map::plan_mapping(b.finish(), cfg);
    const auto& lp = p.layers[0];
    CHECK(lp.items > static_cast<int>(cfg.total_ncbs()));
    CHECK(lp.waves > 1);
    CHECK(items_covered(lp) == lp.items);
    auto fit = map::check_fit(p, cfg);
    CHECK(fit.ok());
    for (double pct : fit.bank_occupancy_pct) CHECK(pct <= 100.0);
    CHECK(fit.pe_utilization_pct > 0.0);
    CHECK(fit.pe_utilization_pct <= 100.0);
}

TEST_CASE("layer that cannot fit names itself") {
    auto cfg = small_config();
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 200, 4, 4});
    b.output(b.conv("too_wide", x, 8, 3, 1, 1));
    auto g = b.finish();
    CHECK_THROWS_WITH_AS(map::plan_mapping(g, cfg), doctest::Contains("\"too_wide\""), MappingError);
}

TEST_CASE("unsupported layers") {
    auto cfg = arch::j3dai_default();
    ir::GraphBuilder b;
    auto x = b.input("x", {2, 8, 4, 4});
    b.output(b.conv("batched", x, 8, 1, 1, 0));
    CHECK_THROWS_WITH_AS(map::plan_mapping(b.finish(), cfg), doctest::Contains("batch"), MappingError);

    auto g = pointwise_graph();
    g.layers[0].attrs.groups = 2;
    CHECK_THROWS_WITH_AS(map::plan_mapping(g, cfg), doctest::Contains("grouped"), MappingError);
}

TEST_CASE("fusion and concat parts") {
    auto cfg = arch::j3dai_default();
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 3, 8, 8});
    auto c = b.unary("r", LayerKind::ReLU, b.conv("c", x, 8, 3, 1, 1));
    auto m = b.pool("m", LayerKind::MaxPool, c, 2, 2, 0);
    auto r6 = b.unary("r6", LayerKind::ReLU6, m);
    b.output(b.concat("cat", {r6, b.conv("d", r6, 4, 1, 1, 0)}));
    auto g = b.finish();
    auto p = map::plan_mapping(g, cfg);
    std::vector<std::string> names;
    for (const auto& lp : p.layers) names.push_back(lp.layer + "/" + map::kernel_name(lp.kernel));
    CHECK(names == std::vector<std::string>{"c/conv", "m/maxpool", "r6/clamp", "d/conv", "cat/copy", "cat/copy"});
    CHECK(p.layers[0].fused == std::vector<std::string>{"r"});
    CHECK(p.layers[0].output == "r");
    CHECK(p.layers[4].part == 0);
    CHECK(p.layers[5].part == 1);
    CHECK(p.layers[5].geo.c_offset == 8);
    CHECK(p.layers[5].geo.in_c == 4);
    CHECK(p.layers[5].geo.out_c == 12);
}

TEST_CASE("dense lowers to a full-window convolution") {
    auto cfg = arch::j3dai_default();
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 4, 3, 3});
    b.output(b.dense("fc", x, 10));
    auto p = map::plan_mapping(b.finish(), cfg);
    const auto& lp = p.layers[0];
    CHECK(lp.kernel == map::Kernel::Conv);
    CHECK(lp.geo.kh == 3);
    CHECK(lp.geo.kw == 3);
    CHECK(lp.geo.out_h == 1);
    CHECK(lp.macs == 10u * 36);
}

TEST_CASE("fixed tiles") {
    auto cfg = small_config();
    auto g = pointwise_graph();
    map::Tile t{2, 2, 1, 4, true, map::Placement::BankAligned};
    auto p = map::plan_with_tiles(g, cfg, {{"pw", t}});
    const auto& lp = p.layers[0];
    CHECK(lp.tile == t);
    CHECK(lp.chunks == 2);
    CHECK(lp.items == 4 * 2);
    CHECK(lp.waves == 2);
    REQUIRE(lp.region("psum"));
    REQUIRE(lp.region("buf1"));
    CHECK(lp.region("buf0")->offset % cfg.ncb_bank_bytes == 0);
    CHECK(lp.region("buf1")->offset % cfg.ncb_bank_bytes == 0);
    CHECK(map::block_bytes(lp, 0, cfg) == 32 + 4 * 8);
    CHECK(map::block_bytes(lp, 1, cfg) == 4 * 8);
    CHECK(map::check_fit(p, cfg).ok());

    map::Tile bad = t;
    bad.ht = 5;
    CHECK_THROWS_WITH_AS(map::plan_with_tiles(g, cfg, {{"pw", bad}}), doctest::Contains("larger than the output"), MappingError);
    map::Tile huge{4, 4, 2, 8, true, map::Placement::BankAligned};
    cfg.ncb_bank_bytes = 64;
    CHECK_THROWS_WITH_AS(map::plan_with_tiles(g, cfg, {{"pw", huge}}), doctest::Contains("does not fit"), MappingError);
}

TEST_CASE("fit check on hand-built plans") {
    auto cfg = arch::j3dai_default();
    map::MappingPlan p;
    map::LayerPlan lp;
    lp.layer = "h";
    lp.regions = {{"in", 0, 4096}};
    p.layers.push_back(lp);
    auto fit = map::check_fit(p, cfg);
    CHECK(fit.ok());
    CHECK(fit.bank_occupancy_pct[0] == doctest::Approx(100.0));
    CHECK(fit.bank_occupancy_pct[1] == 0.0);

    p.layers[0].regions = {{"in", 0, 1024}, {"buf0", 512, 64}};
    fit = map::check_fit(p, cfg);
    REQUIRE(fit.violations.size() == 1);
    CHECK(fit.violations[0].find("in") != std::string::npos);
    CHECK(fit.violations[0].find("buf0") != std::string::npos);

    p.layers[0].regions = {{"out", 16000, 1000}};
    fit = map::check_fit(p, cfg);
    REQUIRE(fit.violations.size() == 1);
    CHECK(fit.violations[0].find("exceeds") != std::string::npos);
}

TEST_CASE("cycle model anchors") {
    auto cfg = arch::j3dai_default();
    CHECK(map::ideal_compute_cycles(768000, 6, cfg) == 1000);
    CHECK(map::ideal_compute_cycles(768001, 6, cfg) == 1001);
    CHECK(map::estimate_cycles(map::MappingPlan{}, cfg) == 0);
}

TEST_CASE("prefetch hides the first parameter load") {
    auto cfg = arch::j3dai_default();
    auto p = map::plan_mapping(pointwise_graph(), cfg);
    const auto& lp = p.layers[0];
    std::uint64_t w = map::first_block_words(lp, cfg);
    CHECK(w == (32 + 64) / 8);
    CHECK(map::layer_cycles(lp, cfg, true) + w == map::layer_cycles(lp, cfg));
}

TEST_CASE("lattice search matches exhaustive search") {
    auto cfg = small_config();
    int compared = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        auto g = toy_graph(seed);
        auto fast = map::plan_mapping(g, cfg);
        auto slow = map::brute_force_plan(g, cfg);
        CHECK(map::objective(fast) == map::objective(slow));
        REQUIRE(fast.layers.size() == slow.layers.size());
        for (std::size_t i = 0; i < fast.layers.size(); ++i) CHECK(fast.layers[i].tile == slow.layers[i].tile);
        ++compared;
    }
    CHECK(compared >= 20);
}

TEST_CASE("planned layers are well formed") {
    auto cfg = small_config();
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
        auto p = map::plan_mapping(toy_graph(seed), cfg);
        auto fit = map::check_fit(p, cfg);
        CHECK_MESSAGE(fit.ok(), "seed ", seed, ": ", fit.violations.empty() ? "" : fit.violations[0]);
        std::uint64_t moved = 0;
        for (const auto& lp : p.layers) {
            CHECK(items_covered(lp) == lp.items);
            CHECK(lp.waves == static_cast<int>((lp.items + cfg.total_ncbs() - 1) / cfg.total_ncbs()));
            moved += lp.bytes_moved;
            std::uint64_t tb = 0;
            for (const auto& t : lp.transfers) tb += t.bytes * std::popcount(t.columns);
            CHECK(tb == lp.bytes_moved);
        }
        CHECK(moved == p.bytes_moved);
        CHECK(p.est_cycles == map::estimate_cycles(p, cfg));
    }
}

TEST_CASE("item geometry") {
    auto cfg = small_config();
    auto g = pointwise_graph();
    auto p = map::plan_with_tiles(g, cfg, {{"pw", map::Tile{2, 2, 1, 8, false, map::Placement::Packed}}});
    const auto& lp = p.layers[0];
    CHECK(lp.items == 8);
    auto it = map::item_at(lp, 5); // tile 2, group range 1
    CHECK(it.y0 == 2);
    CHECK(it.x0 == 0);
    CHECK(it.g0 == 1);
    CHECK(map::item_cluster(lp, 5, cfg) == 1);
    CHECK(map::item_column(lp, 5, cfg) == 0);
    CHECK(map::item_column(lp, 2, cfg) == 1);
}

TEST_CASE("plans are deterministic and round-trip through JSON") {
    auto cfg = arch::j3dai_default();
    auto g = toy_graph(7);
    auto a = map::plan_mapping(g, cfg);
    auto b = map::plan_mapping(g, cfg);
    CHECK(a == b);
    CHECK(map::to_json(a).dump() == map::to_json(b).dump());
    CHECK(map::plan_from_json(map::to_json(a)) == a);
    CHECK_THROWS_AS(map::plan_from_json(nlohmann::json::object()), ValidationError);
}

TEST_CASE("brute force respects its cap") {
    auto cfg = arch::j3dai_default();
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 64, 32, 32});
    b.output(b.conv("big", x, 64, 1, 1, 0));
    CHECK_THROWS_WITH_AS(map::brute_force_plan(b.finish(), cfg, 1000), doctest::Contains("cap"), MappingError);
}

TEST_CASE("activations that overflow L2 force single-wave aliasing") {
    auto cfg = small_config();
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 8, 8, 8});
    x = b.conv("up", x, 16, 1, 1, 0);
    b.output(b.conv("down", x, 8, 1, 1, 0));
    auto g = b.finish();
    std::vector<int> order{0, 1};

    auto roomy = map::plan_mapping(g, cfg);
    auto loose = map::allocate_activations(roomy, order, cfg);
    CHECK(loose.base == (roomy.param_bytes + 63) / 64 * 64);

    cfg.l2_partitions = {{"l2", 1536, arch::Die::Bottom}};
    auto p = map::plan_mapping(g, cfg);
    auto a = map::allocate_activations(p, order, cfg);
    CHECK(a.end <= cfg.l2_bytes());
    bool any = false;
    for (std::size_t i = 0; i < order.size(); ++i)
        if (a.alias[i]) {
            any = true;
            CHECK(p.layers[order[i]].waves == 1);
        }
    CHECK(any);
    CHECK(a.find("x")->first == -1);
    CHECK(a.find("down")->last == 2);

    cfg.l2_partitions = {{"l2", 900, arch::Die::Bottom}};
    CHECK_THROWS_WITH_AS(map::plan_mapping(g, cfg), doctest::Contains("activations"), MappingError);
}
