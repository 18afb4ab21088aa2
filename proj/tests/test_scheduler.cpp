#include <doctest.h>

#include <random>

#include "j3dai/error.hpp"
#include "j3dai/scheduler.hpp"

using namespace j3dai;
using ir::LayerKind;

namespace {

ir::Graph two_convs() {
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 8, 8, 8});
    x = b.conv("a", x, 16, 3, 1, 1);
    b.output(b.conv("b", x, 64, 1, 1, 0));
    return b.finish();
}

// Two branches joined by an Add, plus a Concat.
ir::Graph branchy(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ir::GraphBuilder b(seed);
    int c = 4 + static_cast<int>(rng() % 8);
    auto x = b.input("x", {1, c, 6, 6});
    auto l = b.conv("left", x, c, 3, 1, 1);
    auto r = b.depthwise("right", x, 3, 1, 1);
    auto s = b.add("sum", l, r);
    auto m = b.conv("more", s, 4 + static_cast<int>(rng() % 8), 1, 1, 0);
    b.output(b.concat("cat", {s, m}));
    return b.finish();
}

bool overlaps(const map::ActivationBuffer& a, const map::ActivationBuffer& b) { return a.addr < b.addr + b.bytes && b.addr < a.addr + a.bytes; }

} // namespace

TEST_CASE("chain schedule accounts every cycle") {
    auto cfg = arch::j3dai_default();
    auto p = map::plan_mapping(two_convs(), cfg);
    auto s = sched::build_schedule(p, cfg);
    REQUIRE(s.steps.size() == 2);
    CHECK(s.order() == std::vector<int>{0, 1});
    CHECK(s.steps[0].start == s.host_in_cycles);
    CHECK(s.steps[1].start == s.steps[0].start + s.steps[0].duration);
    CHECK(s.makespan == s.steps[1].start + s.steps[1].duration + s.host_out_cycles);
    CHECK(s.host_in_cycles == 1 + arch::dma_cycles(8 * 8 * 8 * 8, cfg));
    CHECK(s.host_out_cycles == arch::dma_cycles(8 * 8 * 64 * 8, cfg));
}

TEST_CASE("prefetch shortens the two-layer chain") {
    auto cfg = arch::j3dai_default();
    auto p = map::plan_mapping(two_convs(), cfg);
    auto overlapped = sched::build_schedule(p, cfg);
    auto serialized = sched::build_schedule(p, cfg, {.prefetch = false});
    CHECK(overlapped.steps[0].prefetch_to >= 0);
    CHECK(overlapped.steps[1].prefetched);
    CHECK_FALSE(serialized.steps[1].prefetched);
    CHECK(serialized.steps[0].prefetch_to == -1);
    CHECK(overlapped.makespan < serialized.makespan);
    std::uint64_t serial_sum = 0;
    for (const auto& st : serialized.steps) serial_sum += st.duration;
    CHECK(serialized.makespan == serialized.host_in_cycles + serial_sum + serialized.host_out_cycles);
}

TEST_CASE("prefetch target keeps clear of the running layer") {
    auto cfg = arch::j3dai_default();
    auto p = map::plan_mapping(two_convs(), cfg);
    auto off = sched::prefetch_target(p.layers[0], p.layers[1], cfg);
    REQUIRE(off >= 0);
    auto o = static_cast<std::uint64_t>(off);
    std::uint64_t end = o + map::block_bytes(p.layers[1], 0, cfg);
    for (const auto& r : p.layers[0].regions) {
        std::uint64_t first = r.offset / cfg.ncb_bank_bytes, last = (r.offset + r.bytes - 1) / cfg.ncb_bank_bytes;
        CHECK((last < o / cfg.ncb_bank_bytes || first > (end - 1) / cfg.ncb_bank_bytes));
    }
    // Nothing to prefetch into a layer without parameters.
    CHECK(sched::prefetch_target(p.layers[1], map::LayerPlan{}, cfg) == -1);
}

TEST_CASE("orders respect dependencies and buffers never collide") {
    auto cfg = arch::j3dai_default();
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto p = map::plan_mapping(branchy(seed), cfg);
        auto s = sched::build_schedule(p, cfg);
        auto order = s.order();
        REQUIRE(order.size() == p.layers.size());
        std::vector<int> pos(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
        for (std::size_t a = 0; a < p.layers.size(); ++a)
            for (std::size_t b = 0; b < p.layers.size(); ++b) {
                const auto& la = p.layers[a];
                const auto& lb = p.layers[b];
                bool reads = std::find(lb.inputs.begin(), lb.inputs.end(), la.output) != lb.inputs.end();
                if (reads || (la.output == lb.output && la.part < lb.part)) CHECK(pos[a] < pos[b]);
            }
        const auto& bufs = s.activations.buffers;
        for (std::size_t i = 0; i < bufs.size(); ++i) {
            CHECK(bufs[i].addr >= s.activations.base);
            CHECK(bufs[i].addr + bufs[i].bytes <= s.activations.end);
            for (std::size_t j = i + 1; j < bufs.size(); ++j) {
                const auto& x = bufs[i];
                const auto& y = bufs[j];
                bool live_together = x.first <= y.last && y.first <= x.last;
                bool handoff = (x.last == y.first && map::may_alias(p.layers[order[y.first]])) || (y.last == x.first && map::may_alias(p.layers[order[x.first]]));
                if (live_together && !handoff) CHECK_FALSE(overlaps(x, y));
            }
        }
    }
}

TEST_CASE("alias barriers only on single-wave steps") {
    auto cfg = arch::j3dai_default();
    cfg.l2_partitions = {{"l2", 12 * 1024, arch::Die::Bottom}};
    ir::GraphBuilder b;
    auto x = b.input("x", {1, 16, 16, 8});
    x = b.depthwise("d", x, 3, 1, 1);
    b.output(b.conv("p", x, 16, 1, 1, 0));
    auto p = map::plan_mapping(b.finish(), cfg);
    auto s = sched::build_schedule(p, cfg);
    bool any = false;
    for (const auto& st : s.steps)
        if (st.alias_barrier) {
            any = true;
            CHECK(p.layers[st.layer].waves == 1);
        }
    CHECK(any);
}

TEST_CASE("schedules are deterministic and round-trip") {
    auto cfg = arch::j3dai_default();
    auto p = map::plan_mapping(branchy(3), cfg);
    auto a = sched::build_schedule(p, cfg);
    auto b = sched::build_schedule(p, cfg);
    CHECK(a == b);
    CHECK(sched::to_json(a).dump() == sched::to_json(b).dump());
    CHECK(sched::schedule_from_json(sched::to_json(a)) == a);
    CHECK_THROWS_AS(sched::schedule_from_json(nlohmann::json::object()), ValidationError);
}

TEST_CASE("empty plan") {
    auto cfg = arch::j3dai_default();
    auto s = sched::build_schedule(map::MappingPlan{}, cfg);
    CHECK(s.steps.empty());
    CHECK(s.makespan == 0);
}
