#include <doctest.h>

#include "j3dai/error.hpp"
#include "j3dai/isa.hpp"

using namespace j3dai;
using namespace j3dai::isa;

namespace {

const char* kSample = R"(; exercise every mnemonic
.region IN l2 0x100 0x400
.region IMG hdm 0x0 0x400
.host
    DMA_XFER l2:@IN, hdm:@IMG, 1024
    LAUNCH 0x3
    WAIT 0x3
    DMA_XFER hdm:@IMG+512, l2:@IN, 8
    HALT
.cluster 0
    MARK conv1
    CSRW lane_mask, #0xff
    AGU_CFG a0, b1:0x10, (4, 1), (2, 8)
    AGU_CFG a1, 0x0, (8, 8)
    AGU_CFG a2, 0x200
    LOOP_CFG 4
      LOOP_CFG 2
        MAC a0.b, a1.w
        MAC mc, #-3
      LOOP_END
      NOP
    LOOP_END
    ALU add acc, acc, #5
    ALU max r1, acc, r2
    ALU mov r3, #-7
    ACT relu6 r1, acc, 3, 200
    ACT relu acc, acc, 0
    ACT hsig r2, r1, 4
    REQ a2, 1073741824, 3, 12, 0, 255
    LD8 r1, a2.w
    LD8 r2, a2.b
    LD32 r3, a2
    ST8 a2, r1
    ST32 a2, r3
    MCAST 3, a2, 0xfffe
    CSRR r1, status
    DMPA in, flat, 0x0, 64, {0x100 - - - - - - - - - - - - - - 0x140}
    DMPA out, tensor, 0x400, 16, 0, (@IN 4 4 16), (2 2 8), {(0 0 0) (-1 -1 8) - - - - - - - - - - - - - -}
    SYNC dmpa
    SYNC barrier
    MARK conv2
    HALT
.cluster 1
    SYNC barrier
    HALT
)";

std::string error_of(const std::string& src) {
    try {
        assemble(src, arch::j3dai_default());
    } catch (const AssemblyError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("single HALT") {
    Program p = assemble("HALT", arch::j3dai_default());
    REQUIRE(p.clusters.count(0));
    CHECK(p.clusters.at(0).size() == 1);
    CHECK(p.clusters.at(0)[0].op == Op::Halt);
}

TEST_CASE("text round trip") {
    auto cfg = arch::j3dai_default();
    Program p = assemble(kSample, cfg);
    std::string text = disassemble(p);
    Program q = assemble(text, cfg);
    CHECK(q == p);
    CHECK(disassemble(q) == text);
    CHECK(p.markers == std::vector<std::string>{"conv1", "conv2"});
    // Symbols resolve to region addresses.
    CHECK(p.host[0].a[1] == 0x100);
    CHECK(p.host[3].a[1] == 512);
    // Bank-qualified base: bank 1 of 4096-byte banks plus 0x10.
    CHECK(p.clusters.at(0)[2].a[1] == 4096 + 0x10);
}

TEST_CASE("empty streams disassemble to a HALT per cluster") {
    Program p;
    p.clusters[0] = {Instr{Op::Halt, {}}};
    p.clusters[2] = {Instr{Op::Halt, {}}};
    std::string text = disassemble(p);
    CHECK(text.find(".cluster 0\n    HALT") != std::string::npos);
    CHECK(text.find(".cluster 2\n    HALT") != std::string::npos);
    CHECK(assemble(text, arch::j3dai_default()) == p);
}

TEST_CASE("binary round trip") {
    Program p = assemble(kSample, arch::j3dai_default());
    for (const auto& [idx, s] : p.clusters) {
        auto words = encode(s);
        CHECK((words[0] & 0xff) == static_cast<std::uint32_t>(s[0].op));
        CHECK(decode(words) == s);
    }
    CHECK(decode(encode(p.host)) == p.host);
    CHECK_THROWS_AS(decode({0xff}), AssemblyError);
    CHECK_THROWS_AS(decode({static_cast<std::uint32_t>(Op::LoopCfg) | (1u << 8)}), AssemblyError);
}

TEST_CASE("diagnostics carry line numbers and name the operand") {
    auto msg = error_of("AGU_CFG a0, b99:0x0, (1, 0)\nAGU_CFG a1, 0\nMAC a0.b, a1.w\nHALT\n");
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("a0.b") != std::string::npos);
    CHECK(msg.find("bank 99") != std::string::npos);

    msg = error_of("NOP\nFROB r1\nHALT");
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("FROB") != std::string::npos);

    msg = error_of(".host\nDMA_XFER l2:@NOWHERE, hdm:0, 8\nHALT\n.cluster 0\nHALT");
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("NOWHERE") != std::string::npos);

    CHECK(error_of("MAC a0.b, #1\nHALT").find("before AGU_CFG") != std::string::npos);
    CHECK(error_of("AGU_CFG a0, 0\nMAC a0.b, #300\nHALT").find("9-bit") != std::string::npos);
    CHECK(error_of("LOOP_CFG 2\nLOOP_CFG 2\nLOOP_CFG 2\nLOOP_CFG 2\nLOOP_CFG 2\nNOP\nLOOP_END\nLOOP_END\nLOOP_END\nLOOP_END\nLOOP_END\nHALT")
              .find("line 5") != std::string::npos);
    CHECK(error_of("NOP").find("HALT") != std::string::npos);
    CHECK(error_of("LOOP_END\nHALT").find("line 1") != std::string::npos);
    CHECK(error_of(".cluster 6\nHALT").find("out of range") != std::string::npos);
    CHECK(error_of("AGU_CFG a4, 0\nHALT").find("AGU index") != std::string::npos);
    CHECK(error_of("AGU_CFG a0, 16380\nLD32 r1, a0\nHALT").find("LD32") != std::string::npos);
    CHECK(error_of("REQ a0, 5, 0, 0, 0, 255\nHALT").find("line 1") != std::string::npos);
    CHECK(error_of("DMPA in, flat, 0x3ff0, 64, {0 - - - - - - - - - - - - - - -}\nHALT").find("NCB SRAM") != std::string::npos);
    CHECK(error_of("DMPA in, tensor, 0, 8, 0, (0 2 2 8), (1 1 8), {(0 0 8) - - - - - - - - - - - - - - -}\nHALT").find("channel window starts outside") != std::string::npos);
    CHECK(error_of(".host\nLAUNCH 0x2\nWAIT 0x2\nHALT\n.cluster 0\nHALT").find("no stream") != std::string::npos);
    CHECK(error_of(".host\nLAUNCH 0x1\nDMA_XFER l2:0, hdm:0, 8\nWAIT 0x1\nHALT\n.cluster 0\nHALT").find("WAIT first") != std::string::npos);
    CHECK(error_of(".host\nMAC mc, mc\nHALT").find("not a host") != std::string::npos);
}

TEST_CASE("DMPA tensor word count") {
    // Contiguous rows: 2 rows of ceil(3*16/8) words.
    CHECK(dmpa_tensor_words(2, 3, 16, 16, 16, 8) == 12);
    // Channel window narrower than the tensor: per pixel ceil(5/8).
    CHECK(dmpa_tensor_words(2, 3, 5, 16, 8, 8) == 6);
    CHECK(dmpa_tensor_words(1, 3, 3, 3, 3, 8) == 2);
}
