#include "j3dai/codegen.hpp"

#include <algorithm>
#include <cctype>

#include "j3dai/error.hpp"
#include "j3dai/quant.hpp"

namespace j3dai::codegen {

using isa::Instr;
using isa::Op;
using map::Kernel;
using map::LayerPlan;
using i64 = std::int64_t;
using u64 = std::uint64_t;

namespace {

constexpr i64 kAcc = 0, kR1 = 1;

i64 cdiv(i64 a, i64 b) { return (a + b - 1) / b; }

std::string qname(const std::string& s) { return "\"" + s + "\""; }

// Region and marker names must be single assembler tokens.
std::string token(const std::string& s) {
    std::string out = s;
    for (char& ch : out)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.')) ch = '_';
    return out;
}

const ir::QuantParams& quant_of(const ir::Graph& g, const std::string& tensor, const std::string& layer) {
    const auto& t = g.tensor(tensor);
    if (!t.quant) throw CodegenError("layer " + qname(layer) + ": tensor " + qname(tensor) + " is not quantized");
    return *t.quant;
}

const ir::Requant& requant_of(const ir::QuantParams& q, const std::string& layer) {
    if (!q.requant) throw CodegenError("layer " + qname(layer) + ": output has no requant parameters");
    return *q.requant;
}

// Shape of one layer's work, shared by the kernel emitters.
struct Shape {
    i64 L = 8, P = 1, cs = 8, gt = 1, nr = 1, nc = 1, cc = 1, T = 1, GB = 0;
    i64 Hp = 1, Wp = 1; // input window
    i64 in = 0, in2 = 0, out = 0, psum = 0, buf0 = 0, buf1 = 0;
    bool db = false;
    bool loop = false; // reduction runs as a hardware loop
};

Shape shape_of(const LayerPlan& lp, const arch::HardwareConfig& cfg) {
    Shape s;
    const auto& g = lp.geo;
    const auto& t = lp.tile;
    s.L = cfg.pes_per_ncb;
    s.P = static_cast<i64>(t.ht) * t.wt;
    s.gt = t.gt;
    s.cs = s.gt * s.L;
    s.nr = cdiv(lp.groups, t.gt);
    s.nc = lp.chunks;
    s.cc = t.cc;
    s.T = static_cast<i64>(g.kh) * g.kw;
    s.Hp = static_cast<i64>(t.ht - 1) * g.sh + g.kh;
    s.Wp = static_cast<i64>(t.wt - 1) * g.sw + g.kw;
    if (lp.kernel == Kernel::Conv) s.GB = 4 * s.L + s.L * s.T * g.in_c;
    if (lp.kernel == Kernel::Depthwise) s.GB = 4 * s.L + s.L * s.T;
    s.db = t.double_buffer;
    auto off = [&](const char* name) -> i64 {
        const auto* r = lp.region(name);
        return r ? r->offset : -1;
    };
    s.in = off("in");
    s.in2 = off("in2");
    s.out = off("out");
    s.psum = off("psum");
    s.buf0 = off("buf0");
    s.buf1 = off("buf1");
    switch (lp.kernel) {
    case Kernel::Conv: s.loop = s.T * g.in_c > 16; break;
    case Kernel::Depthwise:
    case Kernel::AvgPool: s.loop = s.T > 16; break;
    case Kernel::MaxPool: s.loop = s.T > 8; break;
    default: break;
    }
    return s;
}

// Instruction builders for one stream.
struct Stream {
    std::vector<Instr>& code;

    void put(Op op, std::vector<i64> a) { code.push_back({op, std::move(a), 0}); }
    void agu(i64 idx, i64 base, const std::vector<std::pair<i64, i64>>& dims) {
        std::vector<i64> a{idx, base};
        for (int k = 0; k < isa::kAguDims; ++k) {
            bool set = k < static_cast<int>(dims.size());
            a.push_back(set ? dims[k].first : 1);
            a.push_back(set ? dims[k].second : 0);
        }
        put(Op::AguCfg, std::move(a));
    }
    void loop(i64 n) { put(Op::LoopCfg, {n}); }
    void end() { put(Op::LoopEnd, {}); }
    void mac(isa::Mode ma, i64 va, isa::Mode mb, i64 vb) { put(Op::Mac, {static_cast<i64>(ma), va, static_cast<i64>(mb), vb}); }
    void alu_imm(isa::AluOp op, i64 dst, i64 src, i64 imm) { put(Op::Alu, {static_cast<i64>(op), dst, src, 1, imm}); }
    void alu_reg(isa::AluOp op, i64 dst, i64 src, i64 r) { put(Op::Alu, {static_cast<i64>(op), dst, src, 0, r}); }
    void req(i64 agu, const ir::Requant& r, i64 zp, i64 lo, i64 hi) { put(Op::Req, {agu, r.m0, r.shift, zp, lo, hi}); }
    void sync(isa::SyncKind k) { put(Op::Sync, {static_cast<i64>(k)}); }
};

// A tensor-mode DMPA window origin per column.
struct Origin {
    i64 y = 0, x = 0, c = 0;
};

struct Emitter {
    const ir::Graph& g;
    const map::MappingPlan& p;
    const sched::Schedule& s;
    const arch::HardwareConfig& cfg;
    isa::Program prog;
    i64 C = 0, N = 0, S = 0;

    struct Item {
        bool valid = false;
        map::Item it;
    };

    Stream at(int c) { return Stream{prog.clusters[c]}; }

    u64 act_addr(const std::string& tensor) const {
        const auto* b = s.activations.find(tensor);
        if (!b) throw CodegenError("tensor " + qname(tensor) + " has no L2 buffer");
        return b->addr;
    }

    void dmpa_flat(Stream& st, isa::Dir dir, i64 sram, i64 bytes, u64 mask, const std::vector<i64>& l2) {
        std::vector<i64> a{static_cast<i64>(dir), 0, sram, bytes, static_cast<i64>(mask)};
        a.insert(a.end(), l2.begin(), l2.end());
        st.put(Op::Dmpa, std::move(a));
    }

    void dmpa_tensor(Stream& st, isa::Dir dir, i64 sram, i64 cs, i64 pad, i64 base, i64 H, i64 W, i64 Cc, i64 h, i64 w, i64 cn, u64 mask,
                     const std::vector<Origin>& org) {
        std::vector<i64> a{static_cast<i64>(dir), 1, sram, cs, pad, base, H, W, Cc, h, w, cn, static_cast<i64>(mask)};
        for (const auto& o : org) {
            a.push_back(o.y);
            a.push_back(o.x);
            a.push_back(o.c);
        }
        st.put(Op::Dmpa, std::move(a));
    }

    // L2 address of parameter block `b` of the item whose first lane group is g0.
    static i64 block_addr(const LayerPlan& lp, const Shape& sh, int g0, int b) {
        if (lp.kernel == Kernel::Depthwise) return static_cast<i64>(lp.param_offset) + g0 * sh.GB;
        i64 j = b / sh.nc, ch = b % sh.nc;
        i64 skip = ch == 0 ? 0 : 4 * sh.L + sh.L * sh.T * ch * sh.cc;
        return static_cast<i64>(lp.param_offset) + (g0 + j) * sh.GB + skip;
    }

    // Columns of cluster c holding items of `wave`, and the item index per column (-1 when idle).
    std::vector<int> wave_items(const LayerPlan& lp, int wave, int c, u64& mask) const {
        std::vector<int> items(N, -1);
        mask = 0;
        i64 n = std::min<i64>(S, lp.items - static_cast<i64>(wave) * S);
        for (i64 slot = c; slot < n; slot += C) {
            items[slot / C] = static_cast<int>(wave * S + slot);
            mask |= u64{1} << (slot / C);
        }
        return items;
    }

    void prefetch(Stream& st, int c, const LayerPlan& next, i64 to) {
        Shape nsh = shape_of(next, cfg);
        u64 mask = 0;
        auto items = wave_items(next, 0, c, mask);
        std::vector<i64> l2(N, 0);
        for (int col = 0; col < N; ++col)
            if (items[col] >= 0) l2[col] = block_addr(next, nsh, map::item_at(next, items[col]).g0, 0);
        // Issued even without columns so every cluster follows the modelled timeline.
        dmpa_flat(st, isa::Dir::In, to, static_cast<i64>(map::block_bytes(next, 0, cfg)), mask, l2);
    }

    // ---- kernels ----

    struct Quant {
        ir::Requant rq;
        i64 zp_in = 0, zp_in2 = 0, zp_out = 0, lo = 0, hi = 255;
        i64 ma = 1, mb = 1;
    };

    Quant quant(const LayerPlan& lp) const {
        const auto& node = g.layer(lp.layer);
        Quant q;
        const auto& in = quant_of(g, lp.inputs[0], lp.layer);
        q.zp_in = in.zero_point;
        const auto& oq = quant_of(g, node.outputs[0], lp.layer);
        q.zp_out = oq.zero_point;
        switch (lp.kernel) {
        case Kernel::Conv:
        case Kernel::Depthwise:
        case Kernel::AvgPool:
        case Kernel::Add: q.rq = requant_of(oq, lp.layer); break;
        case Kernel::Copy:
            if (oq.input_requants.size() <= static_cast<std::size_t>(lp.part)) throw CodegenError("layer " + qname(lp.layer) + ": concat operand has no requant");
            q.rq = oq.input_requants[lp.part];
            break;
        case Kernel::Clamp: std::tie(q.lo, q.hi) = quant::relu_bounds(node.kind, in); break;
        default: break;
        }
        if (lp.kernel == Kernel::Add) {
            if (oq.input_multipliers.size() != 2) throw CodegenError("layer " + qname(lp.layer) + ": add needs two input multipliers");
            q.ma = oq.input_multipliers[0];
            q.mb = oq.input_multipliers[1];
            q.zp_in2 = quant_of(g, lp.inputs[1], lp.layer).zero_point;
        }
        if (!lp.fused.empty()) std::tie(q.lo, q.hi) = quant::relu_bounds(g.layer(lp.fused[0]).kind, oq);
        return q;
    }

    void reduction(Stream& st, i64 n, isa::Mode ma, i64 va, isa::Mode mb, i64 vb, bool looped) {
        if (looped) {
            st.loop(n);
            st.mac(ma, va, mb, vb);
            st.end();
        } else {
            for (i64 i = 0; i < n; ++i) st.mac(ma, va, mb, vb);
        }
    }

    void conv_block(Stream& st, const LayerPlan& lp, const Shape& sh, const Quant& q, int b, i64 buf) {
        const auto& geo = lp.geo;
        const i64 j = b / sh.nc, ch = b % sh.nc;
        const i64 Ci = geo.in_c;
        const i64 cc = std::min<i64>(sh.cc, Ci - ch * sh.cc);
        const i64 kr = sh.T * cc;
        const i64 wt = lp.tile.wt, ht = lp.tile.ht;
        if (sh.nc == 1)
            st.agu(0, sh.in, {{geo.kw * Ci, 1}, {geo.kh, sh.Wp * Ci}, {wt, geo.sw * Ci}, {ht, geo.sh * sh.Wp * Ci}});
        else
            st.agu(0, sh.in + ch * sh.cc, {{cc, 1}, {wt, geo.sw * Ci}, {ht, geo.sh * sh.Wp * Ci}});
        st.agu(1, buf + (ch == 0 ? 4 * sh.L : 0), {{kr, sh.L}, {sh.P, 0}});
        if (ch == 0) st.agu(2, buf, {{sh.P, 0}});
        else st.agu(2, sh.psum, {{sh.P, 4 * sh.L}});
        const bool last = ch == sh.nc - 1;
        if (last) st.agu(3, sh.out + j * sh.L, {{sh.P, sh.cs}});
        else st.agu(3, sh.psum, {{sh.P, 4 * sh.L}});
        st.loop(sh.P);
        st.put(Op::Ld32, {kAcc, 2});
        reduction(st, kr, isa::Mode::Byte, 0, isa::Mode::Word, 1, sh.loop);
        if (last) st.req(3, q.rq, q.zp_out, q.lo, q.hi);
        else st.put(Op::St32, {3, kAcc});
        st.end();
    }

    // Input AGU walking the kh x kw window of every output pixel of lane group j.
    void window_agu(Stream& st, const LayerPlan& lp, const Shape& sh, i64 j) {
        const auto& geo = lp.geo;
        st.agu(0, sh.in + j * sh.L, {{geo.kw, sh.cs}, {geo.kh, sh.Wp * sh.cs}, {lp.tile.wt, geo.sw * sh.cs}, {lp.tile.ht, geo.sh * sh.Wp * sh.cs}});
    }

    void depthwise(Stream& st, const LayerPlan& lp, const Shape& sh, const Quant& q, i64 buf) {
        for (i64 j = 0; j < sh.gt; ++j) {
            window_agu(st, lp, sh, j);
            st.agu(1, buf + j * sh.GB + 4 * sh.L, {{sh.T, sh.L}, {sh.P, 0}});
            st.agu(2, buf + j * sh.GB, {{sh.P, 0}});
            st.agu(3, sh.out + j * sh.L, {{sh.P, sh.cs}});
            st.loop(sh.P);
            st.put(Op::Ld32, {kAcc, 2});
            reduction(st, sh.T, isa::Mode::Word, 0, isa::Mode::Word, 1, sh.loop);
            st.req(3, q.rq, q.zp_out, q.lo, q.hi);
            st.end();
        }
    }

    void avgpool(Stream& st, const LayerPlan& lp, const Shape& sh, const Quant& q) {
        for (i64 j = 0; j < sh.gt; ++j) {
            window_agu(st, lp, sh, j);
            st.agu(3, sh.out + j * sh.L, {{sh.P, sh.cs}});
            st.loop(sh.P);
            st.alu_imm(isa::AluOp::Mov, kAcc, kAcc, -q.zp_in * sh.T);
            reduction(st, sh.T, isa::Mode::Word, 0, isa::Mode::Imm, 1, sh.loop);
            st.req(3, q.rq, q.zp_out, q.lo, q.hi);
            st.end();
        }
    }

    void maxpool(Stream& st, const LayerPlan& lp, const Shape& sh) {
        for (i64 j = 0; j < sh.gt; ++j) {
            window_agu(st, lp, sh, j);
            st.agu(3, sh.out + j * sh.L, {{sh.P, sh.cs}});
            st.loop(sh.P);
            st.alu_imm(isa::AluOp::Mov, kAcc, kAcc, 0);
            i64 reps = sh.loop ? 1 : sh.T;
            if (sh.loop) st.loop(sh.T);
            for (i64 t = 0; t < reps; ++t) {
                st.put(Op::Ld8, {kR1, static_cast<i64>(isa::Mode::Word), 0});
                st.alu_reg(isa::AluOp::Max, kAcc, kAcc, kR1);
            }
            if (sh.loop) st.end();
            st.put(Op::St8, {3, kAcc});
            st.end();
        }
    }

    void upsample(Stream& st, const LayerPlan& lp, const Shape& sh) {
        const i64 f = lp.geo.scale, wi = lp.tile.wt / f, hi = lp.tile.ht / f;
        for (i64 j = 0; j < sh.gt; ++j) {
            st.agu(0, sh.in + j * sh.L, {{f, 0}, {wi, sh.cs}, {f, 0}, {hi, wi * sh.cs}});
            st.agu(3, sh.out + j * sh.L, {{sh.P, sh.cs}});
            st.loop(sh.P);
            st.put(Op::Ld8, {kR1, static_cast<i64>(isa::Mode::Word), 0});
            st.put(Op::St8, {3, kR1});
            st.end();
        }
    }

    void elementwise(Stream& st, const LayerPlan& lp, const Shape& sh, const Quant& q) {
        const i64 n = sh.P * sh.gt;
        st.agu(0, sh.in, {{n, sh.L}});
        if (lp.kernel == Kernel::Add) st.agu(1, sh.in2, {{n, sh.L}});
        st.agu(3, sh.out, {{n, sh.L}});
        st.loop(n);
        switch (lp.kernel) {
        case Kernel::Add:
            st.alu_imm(isa::AluOp::Mov, kAcc, kAcc, -(q.ma * q.zp_in + q.mb * q.zp_in2));
            st.mac(isa::Mode::Word, 0, isa::Mode::Imm, q.ma);
            st.mac(isa::Mode::Word, 1, isa::Mode::Imm, q.mb);
            st.req(3, q.rq, q.zp_out, q.lo, q.hi);
            break;
        case Kernel::Clamp:
            st.put(Op::Ld8, {kR1, static_cast<i64>(isa::Mode::Word), 0});
            st.put(Op::Act, {static_cast<i64>(isa::ActFn::Relu6), kR1, kR1, q.lo, q.hi});
            st.put(Op::St8, {3, kR1});
            break;
        default: // Copy
            st.alu_imm(isa::AluOp::Mov, kAcc, kAcc, -q.zp_in);
            st.mac(isa::Mode::Word, 0, isa::Mode::Imm, 1);
            st.req(3, q.rq, q.zp_out, 0, 255);
            break;
        }
        st.end();
    }

    // Everything one item of a kernel without parameter blocks computes.
    void compute_all(Stream& st, const LayerPlan& lp, const Shape& sh, const Quant& q) {
        switch (lp.kernel) {
        case Kernel::AvgPool: avgpool(st, lp, sh, q); break;
        case Kernel::MaxPool: maxpool(st, lp, sh); break;
        case Kernel::Upsample: upsample(st, lp, sh); break;
        default: elementwise(st, lp, sh, q); break;
        }
    }

    // ---- per-layer driver ----

    void input_dmpa(Stream& st, const LayerPlan& lp, const Shape& sh, const Quant& q, u64 mask, const std::vector<Item>& items) {
        const auto& geo = lp.geo;
        std::vector<Origin> org(N);
        const i64 base = static_cast<i64>(act_addr(lp.inputs[0]));
        switch (lp.kernel) {
        case Kernel::Conv:
            for (int col = 0; col < N; ++col)
                if (items[col].valid) org[col] = {items[col].it.y0 * geo.sh - geo.ph, items[col].it.x0 * geo.sw - geo.pw, 0};
            dmpa_tensor(st, isa::Dir::In, sh.in, geo.in_c, q.zp_in, base, geo.in_h, geo.in_w, geo.in_c, sh.Hp, sh.Wp, geo.in_c, mask, org);
            return;
        case Kernel::Depthwise:
        case Kernel::AvgPool:
        case Kernel::MaxPool: {
            for (int col = 0; col < N; ++col)
                if (items[col].valid) org[col] = {items[col].it.y0 * geo.sh - geo.ph, items[col].it.x0 * geo.sw - geo.pw, items[col].it.g0 * sh.L};
            i64 pad = lp.kernel == Kernel::MaxPool ? 0 : q.zp_in;
            dmpa_tensor(st, isa::Dir::In, sh.in, sh.cs, pad, base, geo.in_h, geo.in_w, geo.in_c, sh.Hp, sh.Wp, sh.cs, mask, org);
            return;
        }
        case Kernel::Upsample: {
            const i64 f = geo.scale;
            for (int col = 0; col < N; ++col)
                if (items[col].valid) org[col] = {items[col].it.y0 / f, items[col].it.x0 / f, items[col].it.g0 * sh.L};
            dmpa_tensor(st, isa::Dir::In, sh.in, sh.cs, 0, base, geo.in_h, geo.in_w, geo.in_c, lp.tile.ht / f, lp.tile.wt / f, sh.cs, mask, org);
            return;
        }
        default: {
            for (int col = 0; col < N; ++col)
                if (items[col].valid) org[col] = {items[col].it.y0, items[col].it.x0, items[col].it.g0 * sh.L};
            dmpa_tensor(st, isa::Dir::In, sh.in, sh.cs, 0, base, geo.in_h, geo.in_w, geo.in_c, lp.tile.ht, lp.tile.wt, sh.cs, mask, org);
            if (lp.kernel == Kernel::Add) {
                const i64 base2 = static_cast<i64>(act_addr(lp.inputs[1]));
                dmpa_tensor(st, isa::Dir::In, sh.in2, sh.cs, 0, base2, geo.in_h, geo.in_w, geo.in_c, lp.tile.ht, lp.tile.wt, sh.cs, mask, org);
            }
        }
        }
    }

    void output_dmpa(Stream& st, const LayerPlan& lp, const Shape& sh, u64 mask, const std::vector<Item>& items) {
        const auto& geo = lp.geo;
        std::vector<Origin> org(N);
        for (int col = 0; col < N; ++col)
            if (items[col].valid) org[col] = {items[col].it.y0, items[col].it.x0, geo.c_offset + items[col].it.g0 * sh.L};
        dmpa_tensor(st, isa::Dir::Out, sh.out, sh.cs, 0, static_cast<i64>(act_addr(lp.output)), geo.out_h, geo.out_w, geo.out_c, lp.tile.ht, lp.tile.wt, sh.cs, mask,
                    org);
    }

    void params_dmpa(Stream& st, const LayerPlan& lp, const Shape& sh, int b, i64 to, u64 mask, const std::vector<Item>& items) {
        std::vector<i64> l2(N, 0);
        for (int col = 0; col < N; ++col)
            if (items[col].valid) l2[col] = block_addr(lp, sh, items[col].it.g0, b);
        dmpa_flat(st, isa::Dir::In, to, static_cast<i64>(map::block_bytes(lp, b, cfg)), mask, l2);
    }

    void layer(int k) {
        const sched::Step& step = s.steps[k];
        const LayerPlan& lp = p.layers[step.layer];
        const Shape sh = shape_of(lp, cfg);
        const Quant q = quant(lp);
        const int nb = map::param_blocks(lp);
        const i64 pre = step.prefetched ? s.steps[k - 1].prefetch_to : -1;
        const LayerPlan* next = step.prefetch_to >= 0 ? &p.layers[s.steps[k + 1].layer] : nullptr;
        const i64 marker = std::find(prog.markers.begin(), prog.markers.end(), token(lp.layer)) - prog.markers.begin();
        if (marker == static_cast<i64>(prog.markers.size())) prog.markers.push_back(token(lp.layer));

        for (int c = 0; c < C; ++c) {
            Stream st = at(c);
            st.put(Op::Mark, {marker});
            bool idle_last = true;
            for (int w = 0; w < lp.waves; ++w) {
                u64 mask = 0;
                auto idx = wave_items(lp, w, c, mask);
                const bool last_wave = w + 1 == lp.waves;
                if (!mask) {
                    if (step.alias_barrier) st.sync(isa::SyncKind::Barrier);
                    continue;
                }
                if (last_wave) idle_last = false;
                std::vector<Item> items(N);
                for (int col = 0; col < N; ++col)
                    if (idx[col] >= 0) items[col] = {true, map::item_at(lp, idx[col])};
                const bool pf_here = last_wave && next;
                auto buf = [&](int b) -> i64 {
                    if (b == 0 && w == 0 && pre >= 0) return pre;
                    return sh.db && b % 2 ? sh.buf1 : sh.buf0;
                };

                st.put(Op::Csrw, {static_cast<i64>(isa::Csr::NcbMask), 1, static_cast<i64>(mask)});
                input_dmpa(st, lp, sh, q, mask, items);
                if (nb && !(w == 0 && pre >= 0)) params_dmpa(st, lp, sh, 0, buf(0), mask, items);
                st.sync(isa::SyncKind::Dmpa);
                if (step.alias_barrier) st.sync(isa::SyncKind::Barrier);
                if (nb == 0) {
                    if (pf_here) prefetch(st, c, *next, step.prefetch_to);
                    compute_all(st, lp, sh, q);
                }
                for (int b = 0; b < nb; ++b) {
                    const bool last = b + 1 == nb;
                    if (sh.db) {
                        if (!last) params_dmpa(st, lp, sh, b + 1, buf(b + 1), mask, items);
                        if (last && pf_here) prefetch(st, c, *next, step.prefetch_to);
                    } else {
                        if (b > 0) {
                            params_dmpa(st, lp, sh, b, buf(b), mask, items);
                            st.sync(isa::SyncKind::Dmpa);
                        }
                        if (last && pf_here) prefetch(st, c, *next, step.prefetch_to);
                    }
                    if (lp.kernel == Kernel::Conv) conv_block(st, lp, sh, q, b, buf(b));
                    else depthwise(st, lp, sh, q, buf(b));
                    if (sh.db && !last) st.sync(isa::SyncKind::Dmpa);
                }
                output_dmpa(st, lp, sh, mask, items);
            }
            if (idle_last && next) prefetch(st, c, *next, step.prefetch_to);
            st.sync(isa::SyncKind::Dmpa);
            st.sync(isa::SyncKind::Barrier);
        }
    }

    void host(std::vector<HostBinding>& ins, std::vector<HostBinding>& outs) {
        Stream h{prog.host};
        for (const auto& b : ins)
            h.put(Op::DmaXfer, {static_cast<i64>(isa::Space::L2), static_cast<i64>(b.l2_addr), static_cast<i64>(isa::Space::Hdm), static_cast<i64>(b.hdm_addr),
                                static_cast<i64>(b.bytes())});
        const i64 all = (i64{1} << C) - 1;
        h.put(Op::Launch, {all});
        h.put(Op::Wait, {all});
        for (const auto& b : outs)
            h.put(Op::DmaXfer, {static_cast<i64>(isa::Space::Hdm), static_cast<i64>(b.hdm_addr), static_cast<i64>(isa::Space::L2), static_cast<i64>(b.l2_addr),
                                static_cast<i64>(b.bytes())});
        h.put(Op::Halt, {});
    }
};

std::vector<HostBinding> bindings(const ir::Graph& g, const std::vector<map::HostTensor>& ts, const sched::Schedule& s, u64& hdm) {
    std::vector<HostBinding> out;
    for (const auto& t : ts) {
        const auto& q = quant_of(g, t.name, t.name);
        const auto* b = s.activations.find(t.name);
        if (!b) throw CodegenError("tensor " + qname(t.name) + " has no L2 buffer");
        out.push_back({t.name, hdm, b->addr, t.h, t.w, t.c, q.scale, q.zero_point});
        hdm = (hdm + t.bytes() + 63) / 64 * 64;
    }
    return out;
}

void check_consistent(const map::MappingPlan& p, const sched::Schedule& s, const arch::HardwareConfig& cfg) {
    if (s.steps.size() != p.layers.size()) throw CodegenError("schedule has " + std::to_string(s.steps.size()) + " steps for " + std::to_string(p.layers.size()) + " layers");
    std::vector<bool> seen(p.layers.size(), false);
    for (std::size_t k = 0; k < s.steps.size(); ++k) {
        const auto& st = s.steps[k];
        auto bad = [&](const std::string& why) { return CodegenError("schedule step " + std::to_string(k) + ": " + why); };
        if (st.layer < 0 || static_cast<std::size_t>(st.layer) >= p.layers.size()) throw bad("layer index " + std::to_string(st.layer) + " is out of range");
        if (seen[st.layer]) throw bad("layer " + qname(p.layers[st.layer].layer) + " is scheduled twice");
        seen[st.layer] = true;
    }
    for (std::size_t k = 0; k < s.steps.size(); ++k) {
        const auto& st = s.steps[k];
        auto bad = [&](const std::string& why) { return CodegenError("schedule step " + std::to_string(k) + ": " + why); };
        if (k > 0 && st.start < s.steps[k - 1].start + s.steps[k - 1].duration) throw bad("starts before step " + std::to_string(k - 1) + " ends");
        if (st.prefetched && (k == 0 || s.steps[k - 1].prefetch_to < 0)) throw bad("marked prefetched but the previous step prefetches nothing");
        if (!st.prefetched && k > 0 && s.steps[k - 1].prefetch_to >= 0) throw bad("previous step prefetches into a step that does not use it");
        if (st.prefetch_to >= 0) {
            if (k + 1 == s.steps.size()) throw bad("last step cannot prefetch");
            const auto& nx = p.layers[s.steps[k + 1].layer];
            if (nx.param_bytes == 0) throw bad("prefetch target layer " + qname(nx.layer) + " has no parameters");
            if (static_cast<u64>(st.prefetch_to) + map::block_bytes(nx, 0, cfg) > cfg.ncb_sram_bytes()) throw bad("prefetch region exceeds NCB SRAM");
        }
        if (!s.activations.find(p.layers[st.layer].output)) throw bad("output of " + qname(p.layers[st.layer].layer) + " has no L2 buffer");
    }
}

void put_i32(std::vector<std::uint8_t>& blob, u64 at, std::int32_t v) {
    auto u = static_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) blob[at + k] = static_cast<std::uint8_t>(u >> (8 * k));
}

} // namespace

nlohmann::json Compiled::manifest() const {
    auto bind = [](const std::vector<HostBinding>& bs) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& b : bs)
            a.push_back({{"tensor", b.tensor},
                         {"hdm_addr", b.hdm_addr},
                         {"l2_addr", b.l2_addr},
                         {"shape_nhwc", {1, b.h, b.w, b.c}},
                         {"scale", b.scale},
                         {"zero_point", b.zero_point}});
        return a;
    };
    std::size_t instr = program.host.size();
    for (const auto& [idx, code] : program.clusters) instr += code.size();
    return {{"inputs", bind(inputs)},
            {"outputs", bind(outputs)},
            {"param_bytes", params.size()},
            {"expected_cycles", expected_cycles},
            {"clusters", program.clusters.size()},
            {"instructions", instr},
            {"layers", program.markers}};
}

Compiled Compiled::from_manifest(const nlohmann::json& j) {
    auto bind = [](const nlohmann::json& arr) {
        std::vector<HostBinding> out;
        for (const auto& b : arr) {
            const auto& s = b.at("shape_nhwc");
            out.push_back({b.at("tensor"), b.at("hdm_addr"), b.at("l2_addr"), s.at(1), s.at(2), s.at(3), b.at("scale"), b.at("zero_point")});
        }
        return out;
    };
    try {
        Compiled c;
        c.inputs = bind(j.at("inputs"));
        c.outputs = bind(j.at("outputs"));
        c.expected_cycles = j.at("expected_cycles");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("program manifest: ") + e.what());
    }
}

std::vector<std::uint8_t> pack_params(const ir::Graph& g, const map::MappingPlan& p, const arch::HardwareConfig& cfg) {
    std::vector<std::uint8_t> blob(p.param_bytes, 0);
    const i64 L = cfg.pes_per_ncb;
    for (const auto& lp : p.layers) {
        if (lp.param_bytes == 0) continue;
        const auto& node = g.layer(lp.layer);
        const auto& wt = g.tensor(node.inputs[1]);
        if (wt.dtype != ir::DType::Int8 || !g.is_constant(node.inputs[1])) throw CodegenError("layer " + qname(lp.layer) + ": weights are not int8");
        const auto& w = g.constants.at(node.inputs[1]).as<std::int8_t>();
        const std::int32_t* bias = nullptr;
        if (node.inputs.size() > 2) {
            const auto& bt = g.constants.at(node.inputs[2]);
            if (bt.dtype() != ir::DType::Int32) throw CodegenError("layer " + qname(lp.layer) + ": bias is not int32");
            bias = bt.as<std::int32_t>().data();
        }
        const i64 zp = quant_of(g, lp.inputs[0], lp.layer).zero_point;
        const Shape sh = shape_of(lp, cfg);
        const auto& geo = lp.geo;
        const bool dw = lp.kernel == Kernel::Depthwise;
        const i64 ci_n = dw ? 1 : geo.in_c;
        const i64 channels = dw ? geo.in_c : geo.out_c;
        for (i64 grp = 0; grp < sh.nr * sh.gt; ++grp) {
            const u64 base = lp.param_offset + static_cast<u64>(grp * sh.GB);
            for (i64 lane = 0; lane < L; ++lane) {
                const i64 co = grp * L + lane;
                if (co >= channels) continue;
                i64 sum = 0;
                for (i64 ci = 0; ci < ci_n; ++ci)
                    for (i64 ky = 0; ky < geo.kh; ++ky)
                        for (i64 kx = 0; kx < geo.kw; ++kx) {
                            std::int8_t v = w[((co * ci_n + ci) * geo.kh + ky) * geo.kw + kx];
                            sum += v;
                            const i64 r = (ky * geo.kw + kx) * ci_n + ci;
                            blob[base + 4 * L + r * L + lane] = static_cast<std::uint8_t>(v);
                        }
                const i64 folded = (bias ? bias[co] : 0) - zp * sum;
                if (folded < INT32_MIN || folded > INT32_MAX) throw CodegenError("layer " + qname(lp.layer) + ": folded bias of channel " + std::to_string(co) + " overflows int32");
                put_i32(blob, base + 4 * lane, static_cast<std::int32_t>(folded));
            }
        }
    }
    return blob;
}

Compiled emit_program(const ir::Graph& g, const map::MappingPlan& p, const sched::Schedule& s, const arch::HardwareConfig& cfg) {
    arch::require_valid(cfg);
    check_consistent(p, s, cfg);
    Compiled out;
    out.params = pack_params(g, p, cfg);
    u64 hdm = 0;
    out.inputs = bindings(g, p.inputs, s, hdm);
    out.outputs = bindings(g, p.outputs, s, hdm);
    if (hdm > cfg.host_dmem_bytes) throw CodegenError("graph inputs and outputs need " + std::to_string(hdm) + " bytes of host data memory, " + std::to_string(cfg.host_dmem_bytes) + " available");

    Emitter e{g, p, s, cfg, {}, cfg.num_clusters, cfg.ncb_per_cluster, cfg.total_ncbs()};
    auto& regions = e.prog.regions;
    if (p.param_bytes) regions.push_back({"params", isa::Space::L2, 0, p.param_bytes});
    for (const auto& b : s.activations.buffers) regions.push_back({"act." + token(b.tensor), isa::Space::L2, b.addr, b.bytes});
    for (const auto& b : out.inputs) regions.push_back({"host.in." + token(b.tensor), isa::Space::Hdm, b.hdm_addr, b.bytes()});
    for (const auto& b : out.outputs) regions.push_back({"host.out." + token(b.tensor), isa::Space::Hdm, b.hdm_addr, b.bytes()});
    for (int c = 0; c < e.C; ++c) e.prog.clusters[c];
    for (std::size_t k = 0; k < s.steps.size(); ++k) e.layer(static_cast<int>(k));
    for (int c = 0; c < e.C; ++c) e.at(c).put(Op::Halt, {});
    // Nothing to launch: the host stream stays empty.
    if (!p.layers.empty()) e.host(out.inputs, out.outputs);
    try {
        isa::verify(e.prog, cfg);
    } catch (const AssemblyError& err) {
        throw CodegenError(std::string("generated program fails verification: ") + err.what());
    }
    out.program = std::move(e.prog);
    out.expected_cycles = s.makespan;
    return out;
}

Compiled compile(const ir::Graph& g, const arch::HardwareConfig& cfg, const sched::Options& opt) {
    for (const auto& [name, t] : g.tensors)
        if (!g.is_constant(name) && !t.quant) throw CodegenError("tensor " + qname(name) + " is not quantized; run the quantizer first");
    auto plan = map::plan_mapping(g, cfg);
    auto schedule = sched::build_schedule(plan, cfg, opt);
    return emit_program(g, plan, schedule, cfg);
}

sim::MemoryImage initial_image(const Compiled& c, const oracle::Values& inputs, const arch::HardwareConfig& cfg) {
    auto m = sim::MemoryImage::blank(cfg);
    if (c.params.size() > m.l2.size()) throw CodegenError("parameters larger than L2");
    std::copy(c.params.begin(), c.params.end(), m.l2.begin());
    for (const auto& b : c.inputs) {
        auto it = inputs.find(b.tensor);
        if (it == inputs.end()) throw CodegenError("no value for graph input " + qname(b.tensor));
        const ir::Tensor& t = it->second;
        if (t.dtype() != ir::DType::UInt8) throw CodegenError("graph input " + qname(b.tensor) + " must be uint8");
        if (t.shape != ir::Shape{1, b.c, b.h, b.w}) throw CodegenError("graph input " + qname(b.tensor) + " has shape " + ir::shape_str(t.shape));
        const auto& v = t.as<std::uint8_t>();
        for (i64 ch = 0; ch < b.c; ++ch)
            for (i64 y = 0; y < b.h; ++y)
                for (i64 x = 0; x < b.w; ++x) m.hdm[b.hdm_addr + (y * b.w + x) * b.c + ch] = v[(ch * b.h + y) * b.w + x];
    }
    return m;
}

oracle::Values read_outputs(const Compiled& c, const sim::MemoryImage& m) {
    oracle::Values out;
    for (const auto& b : c.outputs) {
        ir::Tensor t = ir::Tensor::zeros({1, b.c, b.h, b.w}, ir::DType::UInt8);
        auto& v = t.as<std::uint8_t>();
        for (i64 ch = 0; ch < b.c; ++ch)
            for (i64 y = 0; y < b.h; ++y)
                for (i64 x = 0; x < b.w; ++x) v[(ch * b.h + y) * b.w + x] = m.hdm.at(b.hdm_addr + (y * b.w + x) * b.c + ch);
        out[b.tensor] = std::move(t);
    }
    return out;
}

} // namespace j3dai::codegen
