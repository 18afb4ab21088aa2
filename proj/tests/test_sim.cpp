#include <doctest.h>

#include <cstring>

#include "j3dai/error.hpp"
#include "j3dai/sim.hpp"

using namespace j3dai;

namespace {

arch::HardwareConfig cfg() { return arch::j3dai_default(); }

sim::Result run_text(const std::string& text, const sim::MemoryImage& init, const sim::RunOptions& opt = {}) {
    return sim::run(isa::assemble(text, cfg()), cfg(), init, opt);
}

std::string columns(const std::string& first) {
    std::string s = first;
    for (int i = 1; i < 16; ++i) s += " -";
    return s;
}

std::int32_t read32(const std::vector<std::uint8_t>& m, std::size_t at) {
    std::int32_t v;
    std::memcpy(&v, &m[at], 4);
    return v;
}

} // namespace

TEST_CASE("HALT-only program") {
    auto r = run_text(".host\nHALT\n.cluster 0\nHALT", sim::MemoryImage::blank(cfg()));
    CHECK(r.report.total_cycles == 0);
    CHECK(r.report.mac_ops_executed == 0);
    CHECK(r.report.stalls == sim::Stalls{});
    CHECK(r.memory == sim::MemoryImage::blank(cfg()));
}

TEST_CASE("one SIMD MAC issue") {
    auto init = sim::MemoryImage::blank(cfg());
    for (int p = 0; p < 8; ++p) {
        init.l2[p] = 2;
        init.l2[8 + p] = 3;
    }
    // Column 0 loads a=2 into 0x0 and w=3 into 0x8; every NCB of the cluster issues the MAC.
    std::string text = ".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\n"
                       "DMPA in, flat, 0x0, 16, {" + columns("0x0") + "}\n"
                       "SYNC dmpa\n"
                       "AGU_CFG a0, 0x0\nAGU_CFG a1, 0x8\nAGU_CFG a2, 0x40\n"
                       "MAC a0.w, a1.w\n"
                       "ST32 a2, acc\n"
                       "DMPA out, flat, 0x40, 32, {" + columns("0x1000") + "}\n"
                       "SYNC dmpa\nHALT\n";
    auto r = run_text(text, init);
    for (int p = 0; p < 8; ++p) CHECK(read32(r.memory.l2, 0x1000 + 4 * p) == 6);
    CHECK(r.report.mac_ops_executed == 8 * 16);
}

TEST_CASE("masked lanes and NCBs neither count nor store") {
    auto init = sim::MemoryImage::blank(cfg());
    std::string text = ".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\n"
                       "CSRW lane_mask, #0x0f\nCSRW ncb_mask, #0x3\n"
                       "ALU mov acc, #7\n"
                       "MAC #1, #1\n"
                       "AGU_CFG a0, 0x0\nST8 a0, acc\n"
                       "DMPA out, flat, 0x0, 8, {0x0 0x8 0x10 - - - - - - - - - - - - -}\n"
                       "SYNC dmpa\nHALT\n";
    auto r = run_text(text, init);
    CHECK(r.report.mac_ops_executed == 4 * 2);
    for (int p = 0; p < 4; ++p) CHECK(r.memory.l2[p] == 8);
    for (int p = 4; p < 8; ++p) CHECK(r.memory.l2[p] == 0);
    CHECK(r.memory.l2[0x10] == 0);
}

TEST_CASE("DMPA timing and DMA ratio") {
    auto init = sim::MemoryImage::blank(cfg());
    // 16 columns x 8 bytes = 1024 bits in one engine cycle.
    auto r = run_text(".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\nDMPA in, flat, 0x0, 8, {0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0}\nSYNC dmpa\nHALT", init);
    CHECK(r.report.dmpa_busy == 1);
    // 8 KiB per column: 1024 engine cycles, the issuing cluster waits them out.
    r = run_text(".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\nDMPA in, flat, 0x0, 8192, {" + columns("0x0") + "}\nSYNC dmpa\nHALT", init);
    CHECK(r.report.dmpa_busy == 1024);
    CHECK(r.report.stalls.dmpa_wait == 1023);
    // The same 16 x 8 KiB payload over the 64-bit interconnect.
    r = run_text(".host\nDMA_XFER l2:0x0, l2:0x40000, 131072\nHALT", init);
    CHECK(r.report.dma_busy == 16 * 1024);
    CHECK(r.report.total_cycles == 16 * 1024);
}

TEST_CASE("bank conflicts stall only when banks overlap") {
    auto init = sim::MemoryImage::blank(cfg());
    auto prog = [&](const std::string& mac_base) {
        return ".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\n"
               "AGU_CFG a0, " + mac_base + "\n"
               "DMPA in, flat, 0x0, 256, {" + columns("0x0") + "}\n"
               "LOOP_CFG 10\nMAC a0.b, #1\nLOOP_END\nSYNC dmpa\nHALT";
    };
    auto clash = run_text(prog("0x10"), init);
    auto apart = run_text(prog("b2:0x0"), init);
    CHECK(clash.report.stalls.bank_conflict == 10);
    CHECK(apart.report.stalls.bank_conflict == 0);
    CHECK(clash.report.total_cycles > apart.report.total_cycles);

    sim::RunOptions off;
    off.model_bank_conflicts = false;
    auto unmodelled = run_text(prog("0x10"), init, off);
    CHECK(unmodelled.report.stalls.bank_conflict == 0);
    CHECK(unmodelled.memory == clash.memory);
}

TEST_CASE("barriers align cluster clocks") {
    auto init = sim::MemoryImage::blank(cfg());
    std::string text = ".host\nLAUNCH 0x3\nWAIT 0x3\nHALT\n"
                       ".cluster 0\nMARK work\nLOOP_CFG 100\nNOP\nLOOP_END\nSYNC barrier\nHALT\n"
                       ".cluster 1\nMARK work\nNOP\nSYNC barrier\nHALT\n";
    auto r = run_text(text, init);
    CHECK(r.report.stalls.sync == 100 - 1 + 1);
    CHECK(r.report.clusters[0].cycles == r.report.clusters[1].cycles);
    REQUIRE(r.report.layers.size() == 1);
    CHECK(r.report.layers[0].cycles <= r.report.total_cycles);

    CHECK_THROWS_AS(run_text(".host\nLAUNCH 0x3\nWAIT 0x3\nHALT\n.cluster 0\nSYNC barrier\nHALT\n.cluster 1\nHALT\n", init), SimError);
}

TEST_CASE("watchdog and accumulator wrap") {
    auto init = sim::MemoryImage::blank(cfg());
    sim::RunOptions cap;
    cap.cycle_cap = 50;
    CHECK_THROWS_WITH_AS(run_text(".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\nLOOP_CFG 100\nNOP\nLOOP_END\nHALT", init, cap),
                         doctest::Contains("cycle cap"), SimError);

    auto r = run_text(".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\nALU mov acc, #2147483647\nMAC #1, #1\n"
                      "CSRR r1, status\nAGU_CFG a0, 0\nST32 a0, acc\nAGU_CFG a0, 0x20\nST32 a0, r1\n"
                      "DMPA out, flat, 0x0, 64, {" + columns("0x0") + "}\nSYNC dmpa\nHALT",
                      init);
    CHECK(r.report.accumulator_overflow);
    CHECK(read32(r.memory.l2, 0) == INT32_MIN);
    CHECK(read32(r.memory.l2, 0x20) == 1);
}

TEST_CASE("tensor DMPA pads and clips") {
    auto init = sim::MemoryImage::blank(cfg());
    // 2x2x3 NHWC tensor at 0x100 holding 1..12.
    for (int i = 0; i < 12; ++i) init.l2[0x100 + i] = static_cast<std::uint8_t>(i + 1);
    std::string text = ".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\n"
                       "DMPA in, tensor, 0x0, 4, 9, (0x100 2 2 3), (3 3 3), {" + columns("(-1 -1 0)") + "}\nSYNC dmpa\n"
                       "DMPA out, flat, 0x0, 36, {" + columns("0x200") + "}\nSYNC dmpa\n"
                       "DMPA out, tensor, 0x0, 4, 0, (0x300 2 2 3), (3 3 3), {" + columns("(-1 -1 0)") + "}\nSYNC dmpa\nHALT";
    auto r = run_text(text, init);
    // SRAM pixel (i, j) holds tensor pixel (i-1, j-1); outside pixels hold the pad value.
    CHECK(r.memory.l2[0x200 + 0] == 9);
    CHECK(r.memory.l2[0x200 + (1 * 3 + 1) * 4 + 0] == 1);
    CHECK(r.memory.l2[0x200 + (1 * 3 + 1) * 4 + 2] == 3);
    CHECK(r.memory.l2[0x200 + (2 * 3 + 2) * 4 + 1] == 11);
    // The clipped store writes back exactly the 12 in-bounds bytes.
    for (int i = 0; i < 12; ++i) CHECK(r.memory.l2[0x300 + i] == i + 1);
    CHECK(r.memory.l2[0x300 + 12] == 0);

    // A channel window running past C keeps only the channels that exist.
    text = ".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\n"
           "DMPA in, tensor, 0x0, 8, 7, (0x100 2 2 3), (1 1 8), {" + columns("(1 1 1)") + "}\nSYNC dmpa\n"
           "DMPA out, flat, 0x0, 8, {" + columns("0x200") + "}\nSYNC dmpa\n"
           "DMPA out, tensor, 0x0, 8, 0, (0x400 2 2 3), (1 1 8), {" + columns("(0 1 1)") + "}\nSYNC dmpa\nHALT";
    r = run_text(text, init);
    CHECK(r.memory.l2[0x200] == 11);
    CHECK(r.memory.l2[0x201] == 12);
    for (int i = 2; i < 8; ++i) CHECK(r.memory.l2[0x200 + i] == 7);
    CHECK(r.memory.l2[0x400 + 4] == 11);
    CHECK(r.memory.l2[0x400 + 5] == 12);
    CHECK(r.memory.l2[0x400 + 6] == 0);
}

TEST_CASE("determinism") {
    auto init = sim::MemoryImage::blank(cfg());
    for (std::size_t i = 0; i < 4096; ++i) init.l2[i] = static_cast<std::uint8_t>(i * 7);
    std::string text = ".host\nLAUNCH 0x1\nWAIT 0x1\nHALT\n.cluster 0\n"
                       "DMPA in, flat, 0x0, 256, {" + columns("0x0") + "}\nSYNC dmpa\n"
                       "AGU_CFG a0, 0, (32, 1)\nAGU_CFG a1, 0x80, (32, 1)\nLOOP_CFG 32\nMAC a0.w, a1.b\nLOOP_END\n"
                       "AGU_CFG a2, 0x400\nREQ a2, 1073741824, 6, 3, 0, 255\n"
                       "DMPA out, flat, 0x400, 8, {" + columns("0x2000") + "}\nSYNC dmpa\nHALT";
    auto a = run_text(text, init);
    auto b = run_text(text, init);
    CHECK(a.memory == b.memory);
    CHECK(a.report == b.report);
    CHECK(sim::to_json(a.report) == sim::to_json(b.report));
}

TEST_CASE("MAC efficiency") {
    auto c = cfg();
    CHECK(sim::mac_efficiency(289'000'000, 808'000, c) == doctest::Approx(46.57).epsilon(0.001));
    CHECK(sim::mac_efficiency(768, 1, c) == doctest::Approx(100.0));
    CHECK(sim::mac_efficiency(0, 10, c) == 0.0);
    CHECK_THROWS_AS(sim::mac_efficiency(5, 0, c), SimError);
}

TEST_CASE("memory image container round trip") {
    auto m = sim::MemoryImage::blank(cfg());
    m.l2[5] = 9;
    m.hdm[7] = 4;
    auto c = m.to_container();
    CHECK(sim::MemoryImage::from_container(ir::Container::parse(c.manifest("m.bin"), c.blob())) == m);
}

TEST_CASE("simulation report survives a JSON round trip") {
    sim::SimReport r;
    r.total_cycles = 808000;
    r.mac_ops_executed = 12;
    r.stalls.bank_conflict = 3;
    r.layers.push_back({"conv", 40, 12});
    r.clusters.push_back({.cycles = 7, .issue_cycles = 5, .dmpa_busy = 2, .mac_ops = 12, .stalls = {1, 2, 3, 4}});
    r.accumulator_overflow = true;
    CHECK(sim::report_from_json(sim::to_json(r)) == r);
    CHECK_THROWS_AS(sim::report_from_json(nlohmann::json::object()), ValidationError);
}
