#include <algorithm>
#include <array>
#include <cstring>

#include "j3dai/error.hpp"
#include "j3dai/quant.hpp"
#include "j3dai/sim.hpp"

namespace j3dai::sim {

using isa::Instr;
using isa::Op;

MemoryImage MemoryImage::blank(const arch::HardwareConfig& cfg) {
    return {std::vector<std::uint8_t>(cfg.l2_bytes(), 0), std::vector<std::uint8_t>(cfg.host_dmem_bytes, 0)};
}

ir::Container MemoryImage::to_container() const {
    ir::Container c;
    c.tensors["l2"] = ir::Tensor{{1, 1, 1, static_cast<std::int64_t>(l2.size())}, l2};
    c.tensors["hdm"] = ir::Tensor{{1, 1, 1, static_cast<std::int64_t>(hdm.size())}, hdm};
    return c;
}

MemoryImage MemoryImage::from_container(const ir::Container& c) {
    MemoryImage m;
    for (const char* name : {"l2", "hdm"}) {
        auto it = c.tensors.find(name);
        if (it == c.tensors.end()) throw ValidationError(std::string("memory image has no \"") + name + "\" region");
        if (it->second.dtype() != ir::DType::UInt8) throw ValidationError(std::string("memory image region \"") + name + "\" must be uint8");
        (std::string(name) == "l2" ? m.l2 : m.hdm) = it->second.as<std::uint8_t>();
    }
    return m;
}

namespace {

struct Agu {
    std::int64_t base = 0, cur = 0;
    std::array<std::int64_t, isa::kAguDims> ext{1, 1, 1, 1}, stride{}, idx{};

    std::int64_t use() {
        std::int64_t a = cur;
        for (int k = 0; k < isa::kAguDims; ++k) {
            cur += stride[k];
            if (++idx[k] < ext[k]) break;
            idx[k] = 0;
            cur -= ext[k] * stride[k];
        }
        return a;
    }
};

struct Loop {
    std::size_t start;
    std::int64_t remaining;
};

struct Shared {
    const arch::HardwareConfig& cfg;
    const RunOptions& opt;
    std::vector<std::uint8_t>& l2;
    bool overflow = false;
};

class Cluster {
public:
    enum class Stop { Halt, Barrier };

    Cluster(int id, const std::vector<Instr>& code, Shared& sh, std::size_t markers)
        : id_(id), code_(code), sh_(sh), cfg_(sh.cfg), ncbs_(cfg_.ncb_per_cluster), lanes_(cfg_.pes_per_ncb),
          sram_bytes_(cfg_.ncb_sram_bytes()), sram_(static_cast<std::size_t>(ncbs_) * sram_bytes_, 0),
          regs_(static_cast<std::size_t>(ncbs_) * lanes_ * isa::kNumRegs, 0), mc_(static_cast<std::size_t>(ncbs_) * lanes_, 0),
          mark_cycles_(markers, 0), mark_macs_(markers, 0) {
        if (cfg_.ncb_sram_banks > 64) throw SimError("simulator supports at most 64 SRAM banks per NCB");
    }

    void launch(std::uint64_t t) {
        t_ = t;
        pc_ = 0;
        loops_.clear();
        halted_ = false;
        set_ncb_mask((std::uint64_t{1} << ncbs_) - 1);
        set_lane_mask((std::uint64_t{1} << lanes_) - 1);
        mark_ = -1;
    }

    bool halted() const { return halted_; }
    std::uint64_t time() const { return t_; }
    int id() const { return id_; }

    // Called by the epoch loop once every cluster has reached the barrier.
    void release(std::uint64_t t) {
        stat_.stalls.sync += t - t_;
        t_ = t;
        issue(0);
        ++pc_;
    }

    Stop run() {
        for (;;) {
            const Instr& in = code_[pc_];
            const auto& a = in.a;
            ++instructions_;
            switch (in.op) {
            case Op::Nop: issue(0); break;
            case Op::Halt:
                close_mark();
                halted_ = true;
                stat_.cycles = std::max(stat_.cycles, t_);
                return Stop::Halt;
            case Op::Mark:
                close_mark();
                mark_ = static_cast<int>(a[0]);
                break;
            case Op::AguCfg: {
                Agu& g = agu_[a[0]];
                g.base = g.cur = a[1];
                for (int k = 0; k < isa::kAguDims; ++k) {
                    g.ext[k] = a[2 + 2 * k];
                    g.stride[k] = a[3 + 2 * k];
                    g.idx[k] = 0;
                }
                issue(0);
                break;
            }
            case Op::LoopCfg:
                if (loops_.size() >= isa::kMaxLoopDepth) fail(in, "loop stack overflow");
                loops_.push_back({pc_ + 1, a[0]});
                issue(0);
                break;
            case Op::LoopEnd:
                if (--loops_.back().remaining > 0) {
                    pc_ = loops_.back().start;
                    continue;
                }
                loops_.pop_back();
                break;
            case Op::Mac: mac(a); break;
            case Op::Alu: alu(a); break;
            case Op::Act: act(a); break;
            case Op::Req: req(a); break;
            case Op::Ld8: {
                std::int64_t addr = agu_[a[2]].use();
                bool word = a[1] == static_cast<int>(isa::Mode::Word);
                issue(banks(addr, word ? lanes_ : 1));
                for (int n : ncb_on_) {
                    const std::uint8_t* s = &sram_[n * sram_bytes_ + addr];
                    for (int p : lane_on_) reg(n, p, a[0]) = word ? s[p] : s[0];
                }
                break;
            }
            case Op::Ld32: {
                std::int64_t addr = agu_[a[1]].use();
                issue(banks(addr, 4 * lanes_));
                for (int n : ncb_on_)
                    for (int p : lane_on_) std::memcpy(&reg(n, p, a[0]), &sram_[n * sram_bytes_ + addr + 4 * p], 4);
                break;
            }
            case Op::St8: {
                std::int64_t addr = agu_[a[0]].use();
                issue(banks(addr, lanes_));
                for (int n : ncb_on_)
                    for (int p : lane_on_) sram_[n * sram_bytes_ + addr + p] = static_cast<std::uint8_t>(reg(n, p, a[1]));
                break;
            }
            case Op::St32: {
                std::int64_t addr = agu_[a[0]].use();
                issue(banks(addr, 4 * lanes_));
                for (int n : ncb_on_)
                    for (int p : lane_on_) std::memcpy(&sram_[n * sram_bytes_ + addr + 4 * p], &reg(n, p, a[1]), 4);
                break;
            }
            case Op::Mcast: {
                std::int64_t addr = agu_[a[1]].use();
                issue(banks(addr, lanes_));
                const std::uint8_t* src = &sram_[a[0] * sram_bytes_ + addr];
                for (int n : ncb_on_)
                    if ((a[2] >> n) & 1) std::memcpy(&mc_[n * lanes_], src, lanes_);
                break;
            }
            case Op::Dmpa: dmpa(a); break;
            case Op::Sync:
                if (a[0] == static_cast<int>(isa::SyncKind::Barrier)) return Stop::Barrier;
                if (t_ < dmpa_until_) {
                    stat_.stalls.dmpa_wait += dmpa_until_ - t_;
                    t_ = dmpa_until_;
                }
                issue(0);
                break;
            case Op::Csrw: {
                std::uint64_t v = a[1] ? static_cast<std::uint64_t>(a[2]) : static_cast<std::uint32_t>(reg(0, 0, a[2]));
                if (a[0] == static_cast<int>(isa::Csr::LaneMask)) set_lane_mask(v & ((std::uint64_t{1} << lanes_) - 1));
                else set_ncb_mask(v & ((std::uint64_t{1} << ncbs_) - 1));
                issue(0);
                break;
            }
            case Op::Csrr: {
                std::int32_t v = 0;
                switch (static_cast<isa::Csr>(a[1])) {
                case isa::Csr::LaneMask: v = static_cast<std::int32_t>(lane_mask_); break;
                case isa::Csr::NcbMask: v = static_cast<std::int32_t>(ncb_mask_); break;
                case isa::Csr::Status: v = sh_.overflow ? 1 : 0; break;
                }
                for (int n : ncb_on_)
                    for (int p : lane_on_) reg(n, p, a[0]) = v;
                issue(0);
                break;
            }
            default: fail(in, "not a cluster instruction");
            }
            ++pc_;
        }
    }

    const ClusterStat& stat() const { return stat_; }
    std::uint64_t instructions() const { return instructions_; }
    const std::vector<std::uint64_t>& mark_cycles() const { return mark_cycles_; }
    const std::vector<std::uint64_t>& mark_macs() const { return mark_macs_; }

private:
    [[noreturn]] void fail(const Instr& in, const std::string& msg) const {
        throw SimError("cluster " + std::to_string(id_) + " pc " + std::to_string(pc_) + " (" + isa::op_name(in.op) + "): " + msg);
    }

    std::int32_t& reg(int n, int p, std::int64_t r) { return regs_[(static_cast<std::size_t>(n) * lanes_ + p) * isa::kNumRegs + r]; }

    void set_lane_mask(std::uint64_t m) {
        lane_mask_ = m;
        lane_on_.clear();
        for (int p = 0; p < lanes_; ++p)
            if ((m >> p) & 1) lane_on_.push_back(p);
    }

    void set_ncb_mask(std::uint64_t m) {
        ncb_mask_ = m;
        ncb_on_.clear();
        for (int n = 0; n < ncbs_; ++n)
            if ((m >> n) & 1) ncb_on_.push_back(n);
    }

    std::uint64_t banks(std::int64_t addr, std::int64_t width) const {
        std::int64_t first = addr / cfg_.ncb_bank_bytes, last = (addr + width - 1) / cfg_.ncb_bank_bytes;
        std::uint64_t m = 0;
        for (std::int64_t b = first; b <= last; ++b) m |= std::uint64_t{1} << b;
        return m;
    }

    // One issue cycle, plus a bank-conflict stall when the in-flight DMPA owns a touched bank.
    void issue(std::uint64_t touched) {
        if (touched && sh_.opt.model_bank_conflicts && t_ < dmpa_until_ && (touched & dmpa_banks_)) {
            ++t_;
            ++dmpa_until_;
            ++stat_.stalls.bank_conflict;
            ++stat_.dmpa_busy;
        }
        ++t_;
        ++stat_.issue_cycles;
        if (sh_.opt.cycle_cap && t_ > sh_.opt.cycle_cap)
            throw SimError("watchdog: cluster " + std::to_string(id_) + " exceeded the cycle cap of " + std::to_string(sh_.opt.cycle_cap));
    }

    void close_mark() {
        if (mark_ >= 0) mark_cycles_[mark_] += t_ - mark_start_;
        mark_start_ = t_;
    }

    void count_macs(std::uint64_t n) {
        stat_.mac_ops += n;
        if (mark_ >= 0) mark_macs_[mark_] += n;
    }

    void accumulate(std::int32_t& acc, std::int64_t prod) {
        std::int64_t s = static_cast<std::int64_t>(acc) + prod;
        if (s < INT32_MIN || s > INT32_MAX) sh_.overflow = true;
        acc = static_cast<std::int32_t>(static_cast<std::uint32_t>(s));
    }

    void mac(const std::vector<std::int64_t>& a) {
        using isa::Mode;
        const auto ma = static_cast<Mode>(a[0]), mb = static_cast<Mode>(a[2]);
        std::int64_t addr_a = 0, addr_b = 0;
        std::uint64_t touched = 0;
        if (ma == Mode::Word || ma == Mode::Byte) {
            addr_a = agu_[a[1]].use();
            touched |= banks(addr_a, ma == Mode::Word ? lanes_ : 1);
        }
        if (mb == Mode::Word || mb == Mode::Byte) {
            addr_b = agu_[a[3]].use();
            touched |= banks(addr_b, mb == Mode::Word ? lanes_ : 1);
        }
        issue(touched);
        for (int n : ncb_on_) {
            const std::uint8_t* s = &sram_[n * sram_bytes_];
            const std::uint8_t* m = &mc_[n * lanes_];
            for (int p : lane_on_) {
                std::int64_t x = 0, w = 0;
                switch (ma) {
                case Mode::Word: x = s[addr_a + p]; break;
                case Mode::Byte: x = s[addr_a]; break;
                case Mode::Mcast: x = m[p]; break;
                case Mode::Imm: x = a[1]; break;
                }
                switch (mb) {
                case Mode::Word: w = static_cast<std::int8_t>(s[addr_b + p]); break;
                case Mode::Byte: w = static_cast<std::int8_t>(s[addr_b]); break;
                case Mode::Mcast: w = static_cast<std::int8_t>(m[p]); break;
                case Mode::Imm: w = a[3]; break;
                }
                accumulate(reg(n, p, 0), x * w);
            }
        }
        count_macs(ncb_on_.size() * lane_on_.size());
    }

    void alu(const std::vector<std::int64_t>& a) {
        issue(0);
        const auto op = static_cast<isa::AluOp>(a[0]);
        for (int n : ncb_on_)
            for (int p : lane_on_) {
                std::int64_t x = reg(n, p, a[2]);
                std::int64_t y = a[3] ? a[4] : reg(n, p, a[4]);
                std::int64_t r = 0;
                switch (op) {
                case isa::AluOp::Add: r = x + y; break;
                case isa::AluOp::Sub: r = x - y; break;
                case isa::AluOp::Max: r = std::max(x, y); break;
                case isa::AluOp::Min: r = std::min(x, y); break;
                case isa::AluOp::Shl: r = static_cast<std::int32_t>(static_cast<std::uint32_t>(x) << (y & 31)); break;
                case isa::AluOp::Shr: r = static_cast<std::int32_t>(x) >> (y & 31); break;
                case isa::AluOp::Mov: r = y; break;
                }
                if ((op == isa::AluOp::Add || op == isa::AluOp::Sub) && (r < INT32_MIN || r > INT32_MAX)) sh_.overflow = true;
                reg(n, p, a[1]) = static_cast<std::int32_t>(static_cast<std::uint32_t>(r));
            }
    }

    void act(const std::vector<std::int64_t>& a) {
        issue(0);
        const auto fn = static_cast<isa::ActFn>(a[0]);
        for (int n : ncb_on_)
            for (int p : lane_on_) {
                std::int64_t x = reg(n, p, a[2]), y = 0;
                switch (fn) {
                case isa::ActFn::Relu: y = std::max(x, a[3]); break;
                case isa::ActFn::Relu6: y = std::clamp(x, a[3], a[4]); break;
                case isa::ActFn::HardSigmoid: {
                    // relu6(x + 3) / 6 with `a[3]` fraction bits.
                    std::int64_t one = std::int64_t{1} << a[3];
                    y = std::clamp<std::int64_t>(quant::round_half_away(static_cast<double>(x + 3 * one) / 6.0), 0, one);
                    break;
                }
                }
                reg(n, p, a[1]) = static_cast<std::int32_t>(y);
            }
    }

    void req(const std::vector<std::int64_t>& a) {
        std::int64_t addr = agu_[a[0]].use();
        issue(banks(addr, lanes_));
        for (int n : ncb_on_)
            for (int p : lane_on_) {
                std::int64_t v = quant::scale_acc(reg(n, p, 0), a[1], static_cast<int>(a[2])) + a[3];
                sram_[n * sram_bytes_ + addr + p] = static_cast<std::uint8_t>(std::clamp(v, a[4], a[5]));
            }
    }

    void dmpa(const std::vector<std::int64_t>& a) {
        if (t_ < dmpa_until_) {
            stat_.stalls.dmpa_wait += dmpa_until_ - t_;
            t_ = dmpa_until_;
        }
        const bool in = a[0] == static_cast<int>(isa::Dir::In);
        const std::uint32_t row = cfg_.dmpa_row_bytes();
        std::uint64_t words = 0;
        std::int64_t footprint = 0;
        const std::int64_t off = a[2];
        auto& l2 = sh_.l2;
        if (a[1] == 0) {
            const std::int64_t bytes = a[3], mask = a[4];
            footprint = bytes;
            words = (bytes + row - 1) / row;
            for (int c = 0; c < ncbs_; ++c) {
                if (!((mask >> c) & 1)) continue;
                std::uint8_t* s = &sram_[c * sram_bytes_ + off];
                std::uint8_t* g = &l2[a[5 + c]];
                if (in) std::memcpy(s, g, bytes);
                else std::memcpy(g, s, bytes);
            }
        } else {
            const std::int64_t cs = a[3], base = a[5], H = a[6], W = a[7], C = a[8], h = a[9], w = a[10], cn = a[11], mask = a[12];
            const auto pad = static_cast<std::uint8_t>(a[4]);
            footprint = h * w * cs;
            words = isa::dmpa_tensor_words(h, w, cn, C, cs, row);
            for (int c = 0; c < ncbs_; ++c) {
                if (!((mask >> c) & 1)) continue;
                const std::int64_t y0 = a[13 + 3 * c], x0 = a[14 + 3 * c], c0 = a[15 + 3 * c];
                // Channels past C are clipped like rows and columns.
                const std::int64_t cv = std::min(cn, C - c0);
                std::uint8_t* s = &sram_[c * sram_bytes_ + off];
                for (std::int64_t i = 0; i < h; ++i) {
                    const std::int64_t y = y0 + i;
                    for (std::int64_t j = 0; j < w; ++j) {
                        const std::int64_t x = x0 + j;
                        std::uint8_t* dst = s + (i * w + j) * cs;
                        const bool inside = y >= 0 && y < H && x >= 0 && x < W;
                        if (in) {
                            if (inside) {
                                std::memcpy(dst, &l2[base + (y * W + x) * C + c0], cv);
                                std::memset(dst + cv, pad, cn - cv);
                            } else {
                                std::memset(dst, pad, cn);
                            }
                        } else if (inside) {
                            std::memcpy(&l2[base + (y * W + x) * C + c0], dst, cv);
                        }
                    }
                }
            }
        }
        dmpa_banks_ = banks(off, footprint);
        dmpa_until_ = t_ + words;
        stat_.dmpa_busy += words;
        issue(0);
    }

    int id_;
    const std::vector<Instr>& code_;
    Shared& sh_;
    const arch::HardwareConfig& cfg_;
    int ncbs_, lanes_;
    std::size_t sram_bytes_;
    std::vector<std::uint8_t> sram_;
    std::vector<std::int32_t> regs_;
    std::vector<std::uint8_t> mc_;
    std::array<Agu, isa::kNumAgus> agu_{};
    std::vector<Loop> loops_;
    std::vector<int> ncb_on_, lane_on_;
    std::uint64_t ncb_mask_ = 0, lane_mask_ = 0;
    std::uint64_t t_ = 0, dmpa_until_ = 0, dmpa_banks_ = 0;
    std::size_t pc_ = 0;
    bool halted_ = true;
    int mark_ = -1;
    std::uint64_t mark_start_ = 0;
    std::vector<std::uint64_t> mark_cycles_, mark_macs_;
    std::uint64_t instructions_ = 0;
    ClusterStat stat_;
};

// Runs every launched cluster to HALT, aligning clocks at each barrier.
void run_epochs(std::vector<Cluster*>& live) {
    for (;;) {
        for (Cluster* c : live)
            if (!c->halted()) c->run();
        std::vector<Cluster*> waiting;
        for (Cluster* c : live)
            if (!c->halted()) waiting.push_back(c);
        if (waiting.empty()) return;
        if (waiting.size() != live.size()) {
            int h = -1;
            for (Cluster* c : live)
                if (c->halted()) h = c->id();
            throw SimError("barrier mismatch: cluster " + std::to_string(h) + " halted while cluster " + std::to_string(waiting[0]->id()) + " waits at a barrier");
        }
        std::uint64_t t = 0;
        for (Cluster* c : waiting) t = std::max(t, c->time());
        for (Cluster* c : waiting) c->release(t);
    }
}

} // namespace

Result run(const isa::Program& p, const arch::HardwareConfig& cfg, const MemoryImage& init, const RunOptions& opt) {
    arch::require_valid(cfg);
    isa::verify(p, cfg);
    Result res;
    res.memory = MemoryImage::blank(cfg);
    if (init.l2.size() > res.memory.l2.size()) throw SimError("initial L2 image larger than L2");
    if (init.hdm.size() > res.memory.hdm.size()) throw SimError("initial host data image larger than host data memory");
    std::copy(init.l2.begin(), init.l2.end(), res.memory.l2.begin());
    std::copy(init.hdm.begin(), init.hdm.end(), res.memory.hdm.begin());

    Shared sh{cfg, opt, res.memory.l2};
    std::map<int, Cluster> clusters;
    for (const auto& [idx, code] : p.clusters) clusters.emplace(std::piecewise_construct, std::forward_as_tuple(idx), std::forward_as_tuple(idx, code, sh, p.markers.size()));

    SimReport& r = res.report;
    std::uint64_t T = 0;
    std::vector<Cluster*> launched;
    auto mem = [&](std::int64_t space) -> std::vector<std::uint8_t>& { return space == static_cast<int>(isa::Space::L2) ? res.memory.l2 : res.memory.hdm; };
    for (const auto& in : p.host) {
        ++r.instructions;
        const auto& a = in.a;
        switch (in.op) {
        case Op::Nop: ++T; break;
        case Op::Halt: break;
        case Op::DmaXfer: {
            auto& dst = mem(a[0]);
            auto& src = mem(a[2]);
            std::memmove(&dst[a[1]], &src[a[3]], a[4]);
            std::uint64_t c = arch::dma_cycles(static_cast<std::uint64_t>(a[4]) * 8, cfg);
            T += c;
            r.dma_busy += c;
            break;
        }
        case Op::Launch:
            ++T;
            for (auto& [idx, c] : clusters)
                if ((a[0] >> idx) & 1) {
                    c.launch(T);
                    launched.push_back(&c);
                }
            break;
        case Op::Wait: {
            run_epochs(launched);
            for (Cluster* c : launched)
                if ((a[0] >> c->id()) & 1) T = std::max(T, c->time());
            std::erase_if(launched, [&](Cluster* c) { return (a[0] >> c->id()) & 1; });
            break;
        }
        default: throw SimError(std::string(isa::op_name(in.op)) + " in host stream");
        }
        if (opt.cycle_cap && T > opt.cycle_cap) throw SimError("watchdog: host exceeded the cycle cap of " + std::to_string(opt.cycle_cap));
    }
    r.total_cycles = T;
    r.layers.resize(p.markers.size());
    for (std::size_t m = 0; m < p.markers.size(); ++m) r.layers[m].name = p.markers[m];
    for (const auto& [idx, c] : clusters) {
        const auto& s = c.stat();
        r.clusters.push_back(s);
        r.instructions += c.instructions();
        r.mac_ops_executed += s.mac_ops;
        r.compute_busy = std::max(r.compute_busy, s.issue_cycles);
        r.dmpa_busy = std::max(r.dmpa_busy, s.dmpa_busy);
        r.stalls.bank_conflict += s.stalls.bank_conflict;
        r.stalls.dmpa_wait += s.stalls.dmpa_wait;
        r.stalls.dma_wait += s.stalls.dma_wait;
        r.stalls.sync += s.stalls.sync;
        for (std::size_t m = 0; m < p.markers.size(); ++m) {
            r.layers[m].cycles = std::max(r.layers[m].cycles, c.mark_cycles()[m]);
            r.layers[m].mac_ops += c.mark_macs()[m];
        }
    }
    r.accumulator_overflow = sh.overflow;
    return res;
}

double mac_efficiency(std::uint64_t mac_ops, std::uint64_t cycles, const arch::HardwareConfig& cfg) {
    if (cycles == 0) throw SimError("MAC efficiency of a zero-cycle run is undefined");
    return 100.0 * static_cast<double>(mac_ops) / (static_cast<double>(cycles) * static_cast<double>(arch::peak_macs_per_cycle(cfg)));
}

double mac_efficiency(const SimReport& r, const arch::HardwareConfig& cfg) { return mac_efficiency(r.mac_ops_executed, r.total_cycles, cfg); }

nlohmann::json to_json(const SimReport& r) {
    auto stalls = [](const Stalls& s) {
        return nlohmann::json{{"bank_conflict", s.bank_conflict}, {"dmpa_wait", s.dmpa_wait}, {"dma_wait", s.dma_wait}, {"sync", s.sync}};
    };
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : r.layers) layers.push_back({{"name", l.name}, {"cycles", l.cycles}, {"mac_ops", l.mac_ops}});
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& c : r.clusters)
        clusters.push_back({{"cycles", c.cycles}, {"issue_cycles", c.issue_cycles}, {"dmpa_busy", c.dmpa_busy}, {"mac_ops", c.mac_ops}, {"stalls", stalls(c.stalls)}});
    return {{"total_cycles", r.total_cycles},
            {"mac_ops_executed", r.mac_ops_executed},
            {"instructions", r.instructions},
            {"busy", {{"compute", r.compute_busy}, {"dmpa", r.dmpa_busy}, {"dma", r.dma_busy}}},
            {"stalls", stalls(r.stalls)},
            {"layers", layers},
            {"clusters", clusters},
            {"accumulator_overflow", r.accumulator_overflow}};
}

SimReport report_from_json(const nlohmann::json& j) {
    auto stalls = [](const nlohmann::json& s) {
        return Stalls{s.at("bank_conflict"), s.at("dmpa_wait"), s.at("dma_wait"), s.at("sync")};
    };
    try {
        SimReport r;
        r.total_cycles = j.at("total_cycles");
        r.mac_ops_executed = j.at("mac_ops_executed");
        r.instructions = j.at("instructions");
        r.compute_busy = j.at("busy").at("compute");
        r.dmpa_busy = j.at("busy").at("dmpa");
        r.dma_busy = j.at("busy").at("dma");
        r.stalls = stalls(j.at("stalls"));
        for (const auto& l : j.at("layers")) r.layers.push_back({l.at("name"), l.at("cycles"), l.at("mac_ops")});
        for (const auto& c : j.at("clusters"))
            r.clusters.push_back({c.at("cycles"), c.at("issue_cycles"), c.at("dmpa_busy"), c.at("mac_ops"), stalls(c.at("stalls"))});
        r.accumulator_overflow = j.at("accumulator_overflow");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("simulation report: ") + e.what());
    }
}

} // namespace j3dai::sim
