#include <array>
#include <optional>

#include "j3dai/error.hpp"
#include "j3dai/isa.hpp"

namespace j3dai::isa {

namespace {

struct AguCfg {
    std::int64_t base = 0;
    std::array<std::int64_t, kAguDims> ext{};
    std::array<std::int64_t, kAguDims> stride{};
};

class Checker {
public:
    Checker(const Program& p, const arch::HardwareConfig& cfg) : p_(p), cfg_(cfg) {}

    void run() {
        for (const auto& r : p_.regions) {
            std::uint64_t cap = r.space == Space::L2 ? cfg_.l2_bytes() : r.space == Space::Hdm ? cfg_.host_dmem_bytes : cfg_.ncb_sram_bytes();
            if (r.addr + r.size > cap) throw AssemblyError(0, "region \"" + r.name + "\" exceeds its address space");
        }
        where_ = "host";
        host(p_.host);
        for (const auto& [idx, s] : p_.clusters) {
            if (idx < 0 || idx >= static_cast<int>(cfg_.num_clusters))
                throw AssemblyError(0, "cluster " + std::to_string(idx) + " out of range (" + std::to_string(cfg_.num_clusters) + " clusters)");
            where_ = "cluster " + std::to_string(idx);
            cluster(s);
        }
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw AssemblyError(line_, where_ + ": " + msg); }

    void need(bool ok, const std::string& msg) const {
        if (!ok) fail(msg);
    }

    void count(const Instr& in, std::size_t n) const {
        need(in.a.size() == n, std::string(op_name(in.op)) + " expects " + std::to_string(n) + " operands, has " + std::to_string(in.a.size()));
    }

    void start(const Instr& in, std::size_t idx) { line_ = in.line ? in.line : static_cast<int>(idx + 1); }

    void finish(const std::vector<Instr>& s) const {
        need(!s.empty() && s.back().op == Op::Halt, "stream must end in HALT");
    }

    void host(const std::vector<Instr>& s) {
        int launched = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto& in = s[i];
            start(in, i);
            const std::string name = op_name(in.op);
            switch (in.op) {
            case Op::Nop: count(in, 0); break;
            case Op::Halt:
                count(in, 0);
                need(i + 1 == s.size(), "HALT must be the last instruction");
                need(launched == 0, "HALT while clusters are still launched");
                break;
            case Op::DmaXfer: {
                count(in, 5);
                need(launched == 0, "DMA_XFER while clusters are running; WAIT first");
                std::int64_t bytes = in.a[4];
                need(bytes >= 1, "DMA_XFER byte count must be positive");
                space_range(in.a[0], in.a[1], bytes, "destination");
                space_range(in.a[2], in.a[3], bytes, "source");
                break;
            }
            case Op::Launch:
            case Op::Wait: {
                count(in, 1);
                std::int64_t m = in.a[0];
                need(m > 0 && m < (std::int64_t{1} << cfg_.num_clusters), name + " mask out of range");
                for (unsigned c = 0; c < cfg_.num_clusters; ++c)
                    if ((m >> c) & 1) need(p_.clusters.count(static_cast<int>(c)) > 0, name + " names cluster " + std::to_string(c) + " which has no stream");
                if (in.op == Op::Launch) {
                    need((launched & m) == 0, "LAUNCH of a cluster that is already running");
                    launched |= static_cast<int>(m);
                } else {
                    need((launched & m) == m, "WAIT on a cluster that was not launched");
                    launched &= ~static_cast<int>(m);
                }
                break;
            }
            default: fail(name + " is not a host instruction");
            }
        }
        if (!s.empty()) finish(s);
    }

    void space_range(std::int64_t space, std::int64_t addr, std::int64_t bytes, const char* what) const {
        need(space == static_cast<int>(Space::L2) || space == static_cast<int>(Space::Hdm), std::string(what) + " space must be l2 or hdm");
        std::int64_t cap = space == static_cast<int>(Space::L2) ? static_cast<std::int64_t>(cfg_.l2_bytes()) : static_cast<std::int64_t>(cfg_.host_dmem_bytes);
        need(addr >= 0 && addr + bytes <= cap, std::string(what) + " range [" + std::to_string(addr) + ", " + std::to_string(addr + bytes) + ") outside its space");
    }

    void reg(std::int64_t r, const char* what) const { need(r >= 0 && r < kNumRegs, std::string(what) + " register out of range"); }

    // Every address the AGU can produce, widened by the access width, must sit in NCB SRAM.
    void agu_use(std::int64_t a, std::int64_t width, const std::string& operand) const {
        need(a >= 0 && a < kNumAgus, "AGU index out of range in operand " + operand);
        need(agus_[a].has_value(), "operand " + operand + " uses AGU a" + std::to_string(a) + " before AGU_CFG");
        const auto& c = *agus_[a];
        std::int64_t lo = c.base, hi = c.base;
        for (int k = 0; k < kAguDims; ++k) {
            std::int64_t span = (c.ext[k] - 1) * c.stride[k];
            (span < 0 ? lo : hi) += span;
        }
        hi += width - 1;
        const std::int64_t size = cfg_.ncb_sram_bytes();
        if (lo < 0) fail("operand " + operand + ": address " + std::to_string(lo) + " is negative");
        if (hi >= size)
            fail("operand " + operand + ": address " + std::to_string(hi) + " is in bank " + std::to_string(hi / cfg_.ncb_bank_bytes) +
                 ", outside NCB SRAM (" + std::to_string(cfg_.ncb_sram_banks) + " banks of " + std::to_string(cfg_.ncb_bank_bytes) + " bytes)");
    }

    void mem_source(std::int64_t mode, std::int64_t v, const char* role) const {
        const std::int64_t lanes = cfg_.pes_per_ncb;
        std::string operand = std::string(role) + " a" + std::to_string(v);
        switch (mode) {
        case static_cast<int>(Mode::Word): agu_use(v, lanes, operand + ".w"); break;
        case static_cast<int>(Mode::Byte): agu_use(v, 1, operand + ".b"); break;
        case static_cast<int>(Mode::Mcast): break;
        case static_cast<int>(Mode::Imm): need(v >= kImmMin && v <= kImmMax, std::string(role) + " immediate " + std::to_string(v) + " outside 9-bit signed range"); break;
        default: fail(std::string(role) + " operand mode invalid");
        }
    }

    void dmpa(const Instr& in) const {
        const auto& a = in.a;
        need(a.size() >= 2, "DMPA operands incomplete");
        need(a[0] == 0 || a[0] == 1, "DMPA direction invalid");
        const std::int64_t cols = cfg_.ncb_per_cluster;
        const std::int64_t sram = cfg_.ncb_sram_bytes();
        const std::int64_t l2 = static_cast<std::int64_t>(cfg_.l2_bytes());
        if (a[1] == 0) {
            count(in, static_cast<std::size_t>(5 + cols));
            std::int64_t off = a[2], bytes = a[3], mask = a[4];
            need(bytes >= 1, "DMPA byte count must be positive");
            need(off >= 0 && off + bytes <= sram, "DMPA SRAM range [" + std::to_string(off) + ", " + std::to_string(off + bytes) + ") outside NCB SRAM");
            need(mask >= 0 && mask < (std::int64_t{1} << cols), "DMPA column mask out of range");
            for (std::int64_t c = 0; c < cols; ++c)
                if ((mask >> c) & 1)
                    need(a[5 + c] >= 0 && a[5 + c] + bytes <= l2, "DMPA column " + std::to_string(c) + " L2 range outside L2");
        } else if (a[1] == 1) {
            count(in, static_cast<std::size_t>(13 + 3 * cols));
            std::int64_t off = a[2], cs = a[3], pad = a[4], base = a[5], H = a[6], W = a[7], C = a[8], h = a[9], w = a[10], cn = a[11], mask = a[12];
            need(H >= 1 && W >= 1 && C >= 1, "DMPA tensor extents must be positive");
            need(h >= 1 && w >= 1 && cn >= 1, "DMPA window extents must be positive");
            need(cs >= cn, "DMPA channel stride smaller than window channels");
            need(pad >= 0 && pad <= 255, "DMPA pad value outside 0..255");
            need(base >= 0 && base + H * W * C <= l2, "DMPA tensor outside L2");
            need(off >= 0 && off + h * w * cs <= sram, "DMPA SRAM window [" + std::to_string(off) + ", " + std::to_string(off + h * w * cs) + ") outside NCB SRAM");
            need(mask >= 0 && mask < (std::int64_t{1} << cols), "DMPA column mask out of range");
            for (std::int64_t c = 0; c < cols; ++c) {
                if (!((mask >> c) & 1)) continue;
                std::int64_t c0 = a[15 + 3 * c];
                need(c0 >= 0 && c0 < C, "DMPA column " + std::to_string(c) + " channel window starts outside the tensor");
            }
        } else {
            fail("DMPA mode invalid");
        }
    }

    void cluster(const std::vector<Instr>& s) {
        agus_ = {};
        int depth = 0;
        const std::int64_t lanes = cfg_.pes_per_ncb;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto& in = s[i];
            start(in, i);
            const auto& a = in.a;
            switch (in.op) {
            case Op::Nop: count(in, 0); break;
            case Op::Halt:
                count(in, 0);
                need(i + 1 == s.size(), "HALT must be the last instruction");
                need(depth == 0, "HALT inside an open loop");
                break;
            case Op::Mark:
                count(in, 1);
                need(a[0] >= 0 && a[0] < static_cast<std::int64_t>(p_.markers.size()), "MARK index out of range");
                break;
            case Op::AguCfg: {
                count(in, 2 + 2 * kAguDims);
                need(a[0] >= 0 && a[0] < kNumAgus, "AGU index " + std::to_string(a[0]) + " out of range");
                AguCfg c;
                c.base = a[1];
                for (int k = 0; k < kAguDims; ++k) {
                    c.ext[k] = a[2 + 2 * k];
                    c.stride[k] = a[3 + 2 * k];
                    need(c.ext[k] >= 1, "AGU extent must be at least 1");
                }
                agus_[a[0]] = c;
                break;
            }
            case Op::LoopCfg:
                count(in, 1);
                need(a[0] >= 1, "LOOP_CFG trip count must be at least 1");
                need(++depth <= kMaxLoopDepth, "loop nesting deeper than " + std::to_string(kMaxLoopDepth));
                break;
            case Op::LoopEnd:
                count(in, 0);
                need(--depth >= 0, "LOOP_END without LOOP_CFG");
                break;
            case Op::Mac:
                count(in, 4);
                mem_source(a[0], a[1], "act");
                mem_source(a[2], a[3], "wgt");
                break;
            case Op::Alu:
                count(in, 5);
                need(a[0] >= 0 && a[0] <= static_cast<int>(AluOp::Mov), "ALU operation invalid");
                reg(a[1], "ALU destination");
                reg(a[2], "ALU source");
                if (a[3]) need(a[4] >= INT32_MIN && a[4] <= INT32_MAX, "ALU immediate does not fit 32 bits");
                else reg(a[4], "ALU source");
                break;
            case Op::Act:
                count(in, 5);
                need(a[0] >= 0 && a[0] <= static_cast<int>(ActFn::HardSigmoid), "ACT function invalid");
                reg(a[1], "ACT destination");
                reg(a[2], "ACT source");
                if (a[0] == static_cast<int>(ActFn::Relu6)) need(a[3] <= a[4], "ACT relu6 bounds reversed");
                if (a[0] == static_cast<int>(ActFn::HardSigmoid)) need(a[3] >= 0 && a[3] <= 24, "ACT hsig fraction bits outside 0..24");
                break;
            case Op::Req:
                count(in, 6);
                agu_use(a[0], lanes, "REQ a" + std::to_string(a[0]));
                need(a[1] >= (std::int64_t{1} << 30) && a[1] < (std::int64_t{1} << 31), "REQ m0 outside [2^30, 2^31)");
                need(a[2] >= -29 && a[2] <= 32, "REQ shift outside -29..32");
                need(a[3] >= 0 && a[3] <= 255, "REQ zero point outside 0..255");
                need(a[4] >= 0 && a[4] <= a[5] && a[5] <= 255, "REQ clamp bounds invalid");
                break;
            case Op::Ld8:
                count(in, 3);
                reg(a[0], "LD8 destination");
                need(a[1] == static_cast<int>(Mode::Word) || a[1] == static_cast<int>(Mode::Byte), "LD8 reads through an AGU");
                mem_source(a[1], a[2], "LD8");
                break;
            case Op::Ld32:
                count(in, 2);
                reg(a[0], "LD32 destination");
                agu_use(a[1], 4 * lanes, "LD32 a" + std::to_string(a[1]));
                break;
            case Op::St8:
                count(in, 2);
                agu_use(a[0], lanes, "ST8 a" + std::to_string(a[0]));
                reg(a[1], "ST8 source");
                break;
            case Op::St32:
                count(in, 2);
                agu_use(a[0], 4 * lanes, "ST32 a" + std::to_string(a[0]));
                reg(a[1], "ST32 source");
                break;
            case Op::Mcast:
                count(in, 3);
                need(a[0] >= 0 && a[0] < cfg_.ncb_per_cluster, "MCAST source NCB " + std::to_string(a[0]) + " out of range");
                agu_use(a[1], lanes, "MCAST a" + std::to_string(a[1]));
                need(a[2] >= 0 && a[2] < (std::int64_t{1} << cfg_.ncb_per_cluster), "MCAST destination mask out of range");
                break;
            case Op::Dmpa: dmpa(in); break;
            case Op::Sync:
                count(in, 1);
                need(a[0] == 0 || a[0] == 1, "SYNC target invalid");
                break;
            case Op::Csrw:
                count(in, 3);
                need(a[0] == static_cast<int>(Csr::LaneMask) || a[0] == static_cast<int>(Csr::NcbMask), "CSRW target is not writable");
                if (a[1]) {
                    std::int64_t bits = a[0] == static_cast<int>(Csr::LaneMask) ? cfg_.pes_per_ncb : cfg_.ncb_per_cluster;
                    need(a[2] >= 0 && a[2] < (std::int64_t{1} << bits), "CSRW mask value out of range");
                } else {
                    reg(a[2], "CSRW source");
                }
                break;
            case Op::Csrr:
                count(in, 2);
                reg(a[0], "CSRR destination");
                need(a[1] >= 0 && a[1] <= static_cast<int>(Csr::Status), "CSRR source invalid");
                break;
            default: fail(std::string(op_name(in.op)) + " is not a cluster instruction");
            }
        }
        finish(s);
    }

    const Program& p_;
    const arch::HardwareConfig& cfg_;
    std::array<std::optional<AguCfg>, kNumAgus> agus_{};
    std::string where_;
    int line_ = 0;
};

} // namespace

void verify(const Program& p, const arch::HardwareConfig& cfg) { Checker(p, cfg).run(); }

} // namespace j3dai::isa
