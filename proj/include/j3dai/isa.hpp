#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "j3dai/arch.hpp"

namespace j3dai::isa {

// Operand layouts (Instr::a), in order. Registers: 0 acc, 1..3 r1..r3.
//   Nop, Halt, LoopEnd        -
//   Mark                      marker index into Program::markers
//   AguCfg                    agu, base, e0, s0, e1, s1, e2, s2, e3, s3
//   LoopCfg                   trip count
//   Mac                       act mode, act value, wgt mode, wgt value
//   Alu                       op, dst, srcA, srcB is_imm, srcB value
//   Act                       fn, dst, src, p0, p1
//   Req                       agu, m0, shift, zero point, lo, hi
//   Ld8                       dst, mode (Word|Byte), agu
//   Ld32                      dst, agu
//   St8, St32                 agu, src
//   Mcast                     source ncb, agu, destination ncb mask
//   Dmpa flat                 dir, 0, sram, bytes, column mask, l2 base per column
//   Dmpa tensor               dir, 1, sram, channel stride, pad,
//                             base, H, W, C, h, w, cn, column mask, (y, x, c0) per column
//                             (NHWC window; pixels and channels outside the tensor
//                             read as `pad` and are dropped on writes)
//   Sync                      kind
//   Csrw                      csr, src is_imm, value
//   Csrr                      dst, csr
//   DmaXfer                   dst space, dst addr, src space, src addr, bytes
//   Launch, Wait              cluster mask
enum class Op : std::uint8_t {
    Nop,
    Halt,
    Mark,
    AguCfg,
    LoopCfg,
    LoopEnd,
    Mac,
    Alu,
    Act,
    Req,
    Ld8,
    St8,
    Ld32,
    St32,
    Mcast,
    Dmpa,
    Sync,
    Csrw,
    Csrr,
    DmaXfer,
    Launch,
    Wait,
};

enum class Mode : std::uint8_t { Word, Byte, Mcast, Imm };
enum class AluOp : std::uint8_t { Add, Sub, Max, Min, Shl, Shr, Mov };
enum class ActFn : std::uint8_t { Relu, Relu6, HardSigmoid };
enum class Csr : std::uint8_t { LaneMask, NcbMask, Status };
enum class Space : std::uint8_t { L2, Hdm, Sram };
enum class SyncKind : std::uint8_t { Dmpa, Barrier };
enum class Dir : std::uint8_t { In, Out };

constexpr int kNumAgus = 4;
constexpr int kAguDims = 4;
constexpr int kMaxLoopDepth = 4;
constexpr int kNumRegs = 4;
constexpr int kImmMin = -256;
constexpr int kImmMax = 255;

const char* op_name(Op op);

struct Instr {
    Op op = Op::Nop;
    std::vector<std::int64_t> a;
    // Source line, for diagnostics only; not part of equality.
    int line = 0;

    bool operator==(const Instr& o) const { return op == o.op && a == o.a; }
};

struct Region {
    std::string name;
    Space space = Space::L2;
    std::uint64_t addr = 0;
    std::uint64_t size = 0;
    bool operator==(const Region&) const = default;
};

struct Program {
    std::vector<Region> regions;
    std::vector<std::string> markers;
    std::vector<Instr> host;
    std::map<int, std::vector<Instr>> clusters;

    bool operator==(const Program&) const = default;
    const Region* region(const std::string& name) const;
};

// Parses and statically checks assembly text against `cfg`. Errors carry the
// source line. Every SRAM, L2 and host address a program can touch is proven
// in range here, so the simulator never faults on a program that assembled.
Program assemble(const std::string& text, const arch::HardwareConfig& cfg);

// Re-runs the static checks on an in-memory program.
void verify(const Program& p, const arch::HardwareConfig& cfg);

// Canonical text; assemble(disassemble(p)) == p.
std::string disassemble(const Program& p);
std::string disassemble(const Instr& in, const Program& p);

// Binary form of one stream: per instruction a header word
// (opcode | operand count << 8) followed by one 32-bit word per operand.
std::vector<std::uint32_t> encode(const std::vector<Instr>& stream);
std::vector<Instr> decode(const std::vector<std::uint32_t>& words);

// Cost of a tensor-mode DMPA on one column, in bus words.
std::uint64_t dmpa_tensor_words(std::int64_t h, std::int64_t w, std::int64_t cn, std::int64_t C, std::int64_t cs, std::uint32_t row_bytes);

} // namespace j3dai::isa
