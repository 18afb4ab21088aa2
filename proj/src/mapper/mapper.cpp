#include "j3dai/mapper.hpp"

#include <algorithm>
#include <set>

#include "j3dai/error.hpp"
#include "j3dai/isa.hpp"

namespace j3dai::map {

using u64 = std::uint64_t;

namespace {

u64 cdiv(u64 a, u64 b) { return (a + b - 1) / b; }
u64 round_up(u64 a, u64 b) { return cdiv(a, b) * b; }

std::string qname(const std::string& s) { return "\"" + s + "\""; }

// Lanes per NCB; also the byte width of one lane-group word in SRAM.
u64 lanes(const arch::HardwareConfig& cfg) { return cfg.pes_per_ncb; }

bool has_params(Kernel k) { return k == Kernel::Conv || k == Kernel::Depthwise; }

// Loop-unroll thresholds of the generated code: the reduction body is
// unrolled when short, otherwise it costs one LOOP_CFG per pixel.
int loop_overhead(const LayerPlan& lp) {
    int taps = lp.geo.kh * lp.geo.kw;
    switch (lp.kernel) {
    case Kernel::Conv: return taps * lp.geo.in_c > 16 ? 1 : 0;
    case Kernel::Depthwise:
    case Kernel::AvgPool: return taps > 16 ? 1 : 0;
    case Kernel::MaxPool: return taps > 8 ? 1 : 0;
    default: return 0;
    }
}

struct Counts {
    int nty = 1, ntx = 1, nr = 1, nc = 1;
    u64 P = 1;  // pixels per tile
    u64 cs = 1; // channel bytes of one item (gt lane groups)
};

Counts counts(const LayerPlan& lp, const arch::HardwareConfig& cfg) {
    Counts k;
    const Tile& t = lp.tile;
    k.nty = static_cast<int>(cdiv(lp.geo.out_h, t.ht));
    k.ntx = static_cast<int>(cdiv(lp.geo.out_w, t.wt));
    k.nr = static_cast<int>(cdiv(lp.groups, t.gt));
    k.nc = lp.kernel == Kernel::Conv ? static_cast<int>(cdiv(lp.geo.in_c, t.cc)) : 1;
    k.P = static_cast<u64>(t.ht) * t.wt;
    k.cs = static_cast<u64>(t.gt) * lanes(cfg);
    return k;
}

// Input window of one item.
struct Window {
    u64 h = 1, w = 1, cn = 1;
};

Window in_window(const LayerPlan& lp, const Counts& k) {
    const Geometry& g = lp.geo;
    const Tile& t = lp.tile;
    switch (lp.kernel) {
    case Kernel::Conv:
        return {static_cast<u64>((t.ht - 1) * g.sh + g.kh), static_cast<u64>((t.wt - 1) * g.sw + g.kw), static_cast<u64>(g.in_c)};
    case Kernel::Depthwise:
    case Kernel::AvgPool:
    case Kernel::MaxPool:
        return {static_cast<u64>((t.ht - 1) * g.sh + g.kh), static_cast<u64>((t.wt - 1) * g.sw + g.kw), k.cs};
    case Kernel::Upsample: return {static_cast<u64>(t.ht / g.scale), static_cast<u64>(t.wt / g.scale), k.cs};
    default: return {static_cast<u64>(t.ht), static_cast<u64>(t.wt), k.cs};
    }
}

u64 window_bytes(const Window& w) { return w.h * w.w * w.cn; }

u64 chunk_channels(const LayerPlan& lp, int c) {
    u64 cc = lp.tile.cc;
    return std::min<u64>(cc, lp.geo.in_c - c * cc);
}

// Bytes of one lane group's parameters in L2: int32 bias per lane, then one
// weight word per reduction step.
u64 group_param_bytes(const LayerPlan& lp, const arch::HardwareConfig& cfg) {
    u64 L = lanes(cfg);
    u64 taps = static_cast<u64>(lp.geo.kh) * lp.geo.kw;
    if (lp.kernel == Kernel::Conv) return 4 * L + L * taps * lp.geo.in_c;
    if (lp.kernel == Kernel::Depthwise) return 4 * L + L * taps;
    return 0;
}

u64 buffer_bytes(const LayerPlan& lp, const arch::HardwareConfig& cfg) {
    if (lp.kernel == Kernel::Conv) return block_bytes(lp, 0, cfg);
    if (lp.kernel == Kernel::Depthwise) return lp.tile.gt * group_param_bytes(lp, cfg);
    return 0;
}

// Lays out the per-NCB regions; returns the first free byte.
u64 layout(LayerPlan& lp, const Counts& k, const arch::HardwareConfig& cfg) {
    u64 align = lanes(cfg);
    u64 bank = cfg.ncb_bank_bytes;
    lp.regions.clear();
    u64 off = 0;
    auto add = [&](const char* name, u64 bytes) {
        lp.regions.push_back({name, static_cast<std::uint32_t>(off), static_cast<std::uint32_t>(bytes)});
        off = round_up(off + bytes, align);
    };
    add("in", window_bytes(in_window(lp, k)));
    if (lp.kernel == Kernel::Add) add("in2", k.P * k.cs);
    add("out", k.P * k.cs);
    if (lp.kernel == Kernel::Conv && k.nc > 1) add("psum", k.P * 4 * lanes(cfg));
    if (has_params(lp.kernel)) {
        u64 buf = buffer_bytes(lp, cfg);
        bool aligned = lp.tile.placement == Placement::BankAligned;
        if (aligned) off = round_up(off, bank);
        add("buf0", buf);
        if (lp.tile.double_buffer) {
            if (aligned) off = round_up(off, bank);
            add("buf1", buf);
        }
    }
    const auto& last = lp.regions.back();
    return static_cast<u64>(last.offset) + last.bytes;
}

u64 tensor_words(u64 h, u64 w, u64 cn, u64 C, u64 cs, const arch::HardwareConfig& cfg) {
    return isa::dmpa_tensor_words(static_cast<std::int64_t>(h), static_cast<std::int64_t>(w), static_cast<std::int64_t>(cn), static_cast<std::int64_t>(C), static_cast<std::int64_t>(cs), cfg.dmpa_row_bytes());
}

u64 in_words(const LayerPlan& lp, const Counts& k, const arch::HardwareConfig& cfg) {
    Window w = in_window(lp, k);
    u64 cs = lp.kernel == Kernel::Conv ? static_cast<u64>(lp.geo.in_c) : k.cs;
    return tensor_words(w.h, w.w, w.cn, lp.geo.in_c, cs, cfg);
}

u64 out_words(const LayerPlan& lp, const Counts& k, const arch::HardwareConfig& cfg) {
    return tensor_words(lp.tile.ht, lp.tile.wt, k.cs, lp.geo.out_c, k.cs, cfg);
}

u64 flat_words(u64 bytes, const arch::HardwareConfig& cfg) { return cdiv(bytes, cfg.dmpa_row_bytes()); }

// Everything the wave timeline needs, per item.
struct Model {
    u64 w_in = 0, w_in2 = 0, w_out = 0;
    std::vector<u64> w_blk;
    std::vector<u64> c_blk; // compute per block (one entry for kernels without parameters)
    bool double_buffer = false;
    bool conflict = false;
};

Model model(const LayerPlan& lp, const Counts& k, const arch::HardwareConfig& cfg) {
    Model m;
    m.w_in = in_words(lp, k, cfg);
    if (lp.kernel == Kernel::Add) m.w_in2 = tensor_words(lp.tile.ht, lp.tile.wt, k.cs, lp.geo.in_c, k.cs, cfg);
    m.w_out = out_words(lp, k, cfg);
    int nb = param_blocks(lp);
    for (int b = 0; b < nb; ++b) m.w_blk.push_back(flat_words(block_bytes(lp, b, cfg), cfg));
    for (int b = 0; b < std::max(nb, 1); ++b) m.c_blk.push_back(block_compute_cycles(lp, b, cfg));
    m.double_buffer = lp.tile.double_buffer;
    // Packed buffers are charged the conflict stall whether or not the bank
    // boundaries happen to separate them; BankAligned ones never conflict.
    m.conflict = m.double_buffer && lp.tile.placement == Placement::Packed;
    return m;
}

struct Clock {
    u64 t = 0, e = 0;
    void dmpa(u64 words) {
        u64 s = std::max(t, e);
        e = s + words;
        t = s + 1;
    }
    void sync() { t = std::max(t, e) + 1; }
};

void run_wave(Clock& k, const Model& m, bool skip_first_load, u64 prefetch) {
    k.t += 1; // CSRW ncb_mask
    k.dmpa(m.w_in);
    if (m.w_in2) k.dmpa(m.w_in2);
    std::size_t nb = m.w_blk.size();
    if (nb && !skip_first_load) k.dmpa(m.w_blk[0]);
    k.sync();
    if (nb == 0) {
        if (prefetch) k.dmpa(prefetch);
        k.t += m.c_blk[0];
    }
    for (std::size_t b = 0; b < nb; ++b) {
        bool last = b + 1 == nb;
        if (m.double_buffer) {
            if (!last) {
                k.dmpa(m.w_blk[b + 1]);
                if (m.conflict) {
                    u64 s = std::min(m.w_blk[b + 1] - 1, m.c_blk[b]);
                    k.t += s;
                    k.e += s;
                }
            }
            if (last && prefetch) k.dmpa(prefetch);
            k.t += m.c_blk[b];
            if (!last) k.sync();
        } else {
            if (b > 0) {
                k.dmpa(m.w_blk[b]);
                k.sync();
            }
            if (last && prefetch) k.dmpa(prefetch);
            k.t += m.c_blk[b];
        }
    }
    k.dmpa(m.w_out);
}

u64 timeline(const LayerPlan& lp, const Model& m, const arch::HardwareConfig& cfg, bool prefetched, u64 prefetch) {
    int W = lp.waves;
    if (W == 0) return 0;
    u64 S = cfg.total_ncbs();
    u64 last_n = lp.items - (W - 1) * S;
    Clock k, before_last;
    if (W <= 3) {
        for (int w = 0; w < W; ++w) {
            if (w == W - 1) before_last = k;
            run_wave(k, m, w == 0 && prefetched, w == W - 1 ? prefetch : 0);
        }
    } else {
        // Every middle wave starts with the same engine lag, so it lasts the same.
        run_wave(k, m, prefetched, 0);
        u64 t0 = k.t;
        run_wave(k, m, false, 0);
        u64 dt = k.t - t0;
        k.t += (W - 3) * dt;
        k.e += (W - 3) * dt;
        before_last = k;
        run_wave(k, m, false, prefetch);
    }
    k.sync();
    u64 end = k.t;
    if (last_n < cfg.num_clusters) {
        // Clusters without an item in the last wave only issue the prefetch.
        if (prefetch) before_last.dmpa(prefetch);
        before_last.sync();
        end = std::max(end, before_last.t);
    }
    return end + 1; // barrier
}

u64 layer_bytes(const LayerPlan& lp, const Counts& k, const arch::HardwareConfig& cfg) {
    u64 per_item = window_bytes(in_window(lp, k)) + k.P * k.cs;
    if (lp.kernel == Kernel::Add) per_item += k.P * k.cs;
    for (int b = 0; b < param_blocks(lp); ++b) per_item += block_bytes(lp, b, cfg);
    return per_item * lp.items;
}

// ---- lowering ----

struct Nhwc {
    int h = 1, w = 1, c = 1;
};

Nhwc nhwc(const ir::Graph& g, const std::string& name, const std::string& layer) {
    const auto& t = g.tensor(name);
    if (!t.resolved()) throw MappingError("layer " + qname(layer) + ": tensor " + qname(name) + " has unresolved shape");
    if (t.shape[0] != 1) throw MappingError("layer " + qname(layer) + ": batch " + std::to_string(t.shape[0]) + " is not supported (only 1)");
    return {static_cast<int>(t.shape[2]), static_cast<int>(t.shape[3]), static_cast<int>(t.shape[1])};
}

// Index of the ReLU/ReLU6 folded into layer `l`, or -1.
int fused_activation(const ir::Graph& g, const ir::LayerNode& l) {
    using K = ir::LayerKind;
    if (l.kind != K::Conv2D && l.kind != K::DepthwiseConv2D && l.kind != K::Dense && l.kind != K::AvgPool && l.kind != K::GlobalAvgPool && l.kind != K::Add)
        return -1;
    const std::string& out = l.outputs[0];
    if (std::find(g.outputs.begin(), g.outputs.end(), out) != g.outputs.end()) return -1;
    auto cons = g.consumers(out);
    if (cons.size() != 1) return -1;
    const auto& r = g.layers[cons[0]];
    if (r.kind != K::ReLU && r.kind != K::ReLU6) return -1;
    return cons[0];
}

void set_window(Geometry& geo, const ir::LayerAttrs& a) {
    geo.kh = a.kernel.h;
    geo.kw = a.kernel.w;
    geo.sh = a.stride.h;
    geo.sw = a.stride.w;
    geo.ph = a.padding.h;
    geo.pw = a.padding.w;
}

std::vector<LayerPlan> lower(const ir::Graph& g, const arch::HardwareConfig& cfg) {
    using K = ir::LayerKind;
    std::vector<LayerPlan> out;
    std::set<int> folded;
    int L = static_cast<int>(lanes(cfg));
    for (int idx : ir::topological_order(g)) {
        if (folded.count(idx)) continue;
        const auto& l = g.layers[idx];
        auto acts = g.activation_inputs(l);
        LayerPlan lp;
        lp.layer = l.id;
        lp.inputs = acts;
        lp.output = l.outputs[0];
        lp.macs = ir::layer_macs(g, l);
        Nhwc x = nhwc(g, acts[0], l.id);
        Nhwc y = nhwc(g, l.outputs[0], l.id);
        lp.geo.in_h = x.h;
        lp.geo.in_w = x.w;
        lp.geo.in_c = x.c;
        lp.geo.out_h = y.h;
        lp.geo.out_w = y.w;
        lp.geo.out_c = y.c;
        switch (l.kind) {
        case K::Conv2D:
            set_window(lp.geo, l.attrs);
            if (l.attrs.groups == 1) {
                lp.kernel = Kernel::Conv;
            } else if (l.attrs.groups == x.c && y.c == x.c) {
                lp.kernel = Kernel::Depthwise;
            } else {
                throw MappingError("layer " + qname(l.id) + ": grouped convolution with " + std::to_string(l.attrs.groups) + " groups is not supported");
            }
            break;
        case K::DepthwiseConv2D:
            set_window(lp.geo, l.attrs);
            lp.kernel = Kernel::Depthwise;
            break;
        case K::Dense:
            // A window covering the whole input: the NCHW flattening order of
            // the weights is exactly the (ci, ky, kx) order of a convolution.
            lp.kernel = Kernel::Conv;
            lp.geo.kh = x.h;
            lp.geo.kw = x.w;
            break;
        case K::ReLU:
        case K::ReLU6: lp.kernel = Kernel::Clamp; break;
        case K::Add: lp.kernel = Kernel::Add; break;
        case K::MaxPool:
            set_window(lp.geo, l.attrs);
            lp.kernel = Kernel::MaxPool;
            break;
        case K::AvgPool:
            set_window(lp.geo, l.attrs);
            lp.kernel = Kernel::AvgPool;
            break;
        case K::GlobalAvgPool:
            lp.kernel = Kernel::AvgPool;
            lp.geo.kh = x.h;
            lp.geo.kw = x.w;
            break;
        case K::UpsampleNearest:
            lp.kernel = Kernel::Upsample;
            lp.geo.scale = l.attrs.scale;
            break;
        case K::Concat: {
            int off = 0;
            for (std::size_t i = 0; i < acts.size(); ++i) {
                LayerPlan part = lp;
                part.part = static_cast<int>(i);
                part.kernel = Kernel::Copy;
                part.inputs = {acts[i]};
                part.macs = 0;
                Nhwc xi = nhwc(g, acts[i], l.id);
                part.geo.in_c = xi.c;
                part.geo.c_offset = off;
                part.groups = static_cast<int>(cdiv(xi.c, L));
                off += xi.c;
                out.push_back(part);
            }
            continue;
        }
        }
        int f = fused_activation(g, l);
        if (f >= 0) {
            folded.insert(f);
            lp.fused = {g.layers[f].id};
            lp.output = g.layers[f].outputs[0];
        }
        lp.groups = static_cast<int>(cdiv(lp.kernel == Kernel::Conv ? y.c : x.c, L));
        out.push_back(lp);
    }
    return out;
}

// ---- candidate search ----

std::vector<int> lattice(int n) {
    std::set<int> s;
    for (int i = 1; i <= n; ++i) s.insert(static_cast<int>(cdiv(n, i)));
    return {s.begin(), s.end()};
}

std::vector<int> all_values(int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i + 1;
    return v;
}

struct Axes {
    std::vector<int> ht, wt, gt, cc;
    std::vector<bool> db;
    std::vector<Placement> pl;
    u64 size() const { return static_cast<u64>(ht.size()) * wt.size() * gt.size() * cc.size() * db.size() * pl.size(); }
};

bool is_pointwise(const LayerPlan& lp) { return lp.kernel == Kernel::Conv && lp.geo.kh == 1 && lp.geo.kw == 1; }

Axes axes(const LayerPlan& lp, bool exhaustive) {
    auto vals = [&](int n) { return exhaustive ? all_values(n) : lattice(n); };
    Axes a;
    if (lp.kernel == Kernel::Upsample) {
        int f = lp.geo.scale;
        for (int v : vals(lp.geo.in_h)) a.ht.push_back(v * f);
        for (int v : vals(lp.geo.in_w)) a.wt.push_back(v * f);
    } else {
        a.ht = vals(lp.geo.out_h);
        a.wt = vals(lp.geo.out_w);
    }
    a.gt = vals(lp.groups);
    if (is_pointwise(lp)) a.cc = vals(lp.geo.in_c);
    else if (lp.kernel == Kernel::Conv) a.cc = {lp.geo.in_c};
    else a.cc = {1};
    a.db = {false};
    if (lp.kernel == Kernel::Conv) a.db.push_back(true);
    a.pl = {Placement::Packed};
    if (has_params(lp.kernel)) a.pl.push_back(Placement::BankAligned);
    return a;
}

// Fills the derived fields for lp.tile; false when the regions overflow the SRAM.
bool shape(LayerPlan& lp, const arch::HardwareConfig& cfg) {
    Counts k = counts(lp, cfg);
    lp.chunks = k.nc;
    lp.items = k.nty * k.ntx * k.nr;
    lp.waves = static_cast<int>(cdiv(lp.items, cfg.total_ncbs()));
    lp.param_bytes = static_cast<u64>(k.nr) * lp.tile.gt * group_param_bytes(lp, cfg);
    return layout(lp, k, cfg) <= cfg.ncb_sram_bytes();
}

std::string tile_str(const Tile& t) {
    return std::to_string(t.ht) + "x" + std::to_string(t.wt) + " gt " + std::to_string(t.gt) + " cc " + std::to_string(t.cc) + (t.double_buffer ? " double-buffered" : "") +
           (t.placement == Placement::BankAligned ? " bank-aligned" : " packed");
}

// Empty when the tile is structurally valid for the layer.
std::string tile_problem(const LayerPlan& lp, const Tile& t) {
    const Geometry& g = lp.geo;
    if (t.ht < 1 || t.wt < 1 || t.gt < 1 || t.cc < 1) return "tile extents must be positive";
    if (t.ht > g.out_h || t.wt > g.out_w) return "tile larger than the output";
    if (t.gt > lp.groups) return "tile has more lane groups than the layer";
    if (lp.kernel == Kernel::Upsample && (t.ht % g.scale || t.wt % g.scale)) return "upsample tile must be a multiple of the scale";
    if (lp.kernel == Kernel::Conv) {
        if (t.cc > g.in_c) return "channel chunk larger than the input";
        if (!is_pointwise(lp) && t.cc != g.in_c) return "only 1x1 convolutions can chunk input channels";
    } else if (t.cc != 1) {
        return "channel chunking applies to convolutions only";
    }
    if (t.double_buffer && lp.kernel != Kernel::Conv) return "double buffering applies to convolutions only";
    if (t.placement == Placement::BankAligned && !has_params(lp.kernel)) return "bank-aligned placement needs parameter buffers";
    if (t.double_buffer && static_cast<u64>(t.gt) * cdiv(g.in_c, t.cc) < 2) return "double buffering needs two parameter blocks";
    return {};
}

struct Best {
    bool found = false;
    LayerPlan lp;
    u64 cycles = 0, bytes = 0;
};

bool better(u64 c, u64 b, const Tile& t, const Best& best) {
    if (!best.found) return true;
    return std::tie(c, b, t) < std::tie(best.cycles, best.bytes, best.lp.tile);
}

void consider(LayerPlan& lp, const arch::HardwareConfig& cfg, bool single_wave, Best& best) {
    if (!tile_problem(lp, lp.tile).empty()) return;
    if (!shape(lp, cfg)) return;
    if (single_wave && lp.waves > 1) return;
    Counts k = counts(lp, cfg);
    // Compute alone bounds the layer time from below.
    u64 compute = 0;
    for (int b = 0; b < std::max(param_blocks(lp), 1); ++b) compute += block_compute_cycles(lp, b, cfg);
    if (best.found && compute * lp.waves > best.cycles) return;
    u64 c = timeline(lp, model(lp, k, cfg), cfg, false, 0);
    u64 b = layer_bytes(lp, k, cfg);
    if (better(c, b, lp.tile, best)) {
        best.found = true;
        best.lp = lp;
        best.cycles = c;
        best.bytes = b;
    }
}

LayerPlan search(const LayerPlan& skel, const arch::HardwareConfig& cfg, bool exhaustive, bool single_wave = false) {
    Axes a = axes(skel, exhaustive);
    Best best;
    LayerPlan lp = skel;
    for (int ht : a.ht)
        for (int wt : a.wt)
            for (int gt : a.gt)
                for (int cc : a.cc)
                    for (bool db : a.db)
                        for (Placement pl : a.pl) {
                            lp.tile = {ht, wt, gt, cc, db, pl};
                            consider(lp, cfg, single_wave, best);
                        }
    if (!best.found) {
        std::string why = "no " + std::string(single_wave ? "single-wave " : "") + "tile fits the " + std::to_string(cfg.ncb_sram_bytes()) + "-byte NCB SRAM";
        if (skel.kernel == Kernel::Conv && !is_pointwise(skel)) why += " (a " + std::to_string(skel.geo.kh) + "x" + std::to_string(skel.geo.kw) + " convolution keeps all " + std::to_string(skel.geo.in_c) + " input channels resident)";
        throw MappingError("layer " + qname(skel.layer) + ": " + why);
    }
    return best.lp;
}

void build_transfers(LayerPlan& lp, const arch::HardwareConfig& cfg) {
    Counts k = counts(lp, cfg);
    Model m = model(lp, k, cfg);
    u64 S = cfg.total_ncbs();
    int C = static_cast<int>(cfg.num_clusters);
    u64 in_b = window_bytes(in_window(lp, k));
    u64 act_b = k.P * k.cs;
    lp.transfers.clear();
    for (int w = 0; w < lp.waves; ++w) {
        u64 n = std::min<u64>(S, lp.items - w * S);
        for (int c = 0; c < C; ++c) {
            std::uint32_t cols = 0;
            for (u64 s = c; s < n; s += C) cols |= 1u << (s / C);
            if (!cols) continue;
            lp.transfers.push_back({TransferKind::Input, w, c, -1, cols, in_b, m.w_in});
            if (lp.kernel == Kernel::Add) lp.transfers.push_back({TransferKind::Input2, w, c, -1, cols, act_b, m.w_in2});
            for (int b = 0; b < param_blocks(lp); ++b) lp.transfers.push_back({TransferKind::Params, w, c, b, cols, block_bytes(lp, b, cfg), m.w_blk[b]});
            lp.transfers.push_back({TransferKind::Output, w, c, -1, cols, act_b, m.w_out});
        }
    }
}

void finalize(LayerPlan& lp, const arch::HardwareConfig& cfg) {
    shape(lp, cfg);
    Counts k = counts(lp, cfg);
    lp.est_cycles = timeline(lp, model(lp, k, cfg), cfg, false, 0);
    lp.bytes_moved = layer_bytes(lp, k, cfg);
    build_transfers(lp, cfg);
}

HostTensor host_tensor(const ir::Graph& g, const std::string& name) {
    Nhwc s = nhwc(g, name, name);
    return {name, s.h, s.w, s.c};
}

MappingPlan assemble_plan(const ir::Graph& g, const arch::HardwareConfig& cfg, std::vector<LayerPlan> layers) {
    MappingPlan p;
    u64 off = 0;
    for (auto& lp : layers) {
        finalize(lp, cfg);
        lp.param_offset = lp.param_bytes ? off : 0;
        off = round_up(off + lp.param_bytes, lanes(cfg));
        p.bytes_moved += lp.bytes_moved;
    }
    p.layers = std::move(layers);
    p.param_bytes = off;
    for (const auto& n : g.inputs) p.inputs.push_back(host_tensor(g, n));
    for (const auto& n : g.outputs) p.outputs.push_back(host_tensor(g, n));
    if (p.param_bytes > cfg.l2_bytes()) throw MappingError("parameters need " + std::to_string(p.param_bytes) + " bytes, L2 holds " + std::to_string(cfg.l2_bytes()));
    p.est_cycles = estimate_cycles(p, cfg);
    return p;
}

// The objective is a sum of independent per-layer terms, so per-layer optima
// compose into the global optimum. When the activations then overflow L2,
// the layer writing the first buffer that does not fit is re-planned as a
// single wave, which lets its output share memory with its dying input.
MappingPlan plan_graph(const ir::Graph& g, const arch::HardwareConfig& cfg, const std::map<std::string, Tile>& tiles, bool exhaustive) {
    auto skel = lower(g, cfg);
    std::vector<bool> fixed(skel.size(), false);
    for (std::size_t i = 0; i < skel.size(); ++i) {
        LayerPlan& lp = skel[i];
        auto it = tiles.find(lp.layer);
        if (it == tiles.end()) {
            lp = search(lp, cfg, exhaustive);
            continue;
        }
        fixed[i] = true;
        lp.tile = it->second;
        std::string why = tile_problem(lp, lp.tile);
        if (!why.empty()) throw MappingError("layer " + qname(lp.layer) + ": tile " + tile_str(lp.tile) + ": " + why);
        if (!shape(lp, cfg)) throw MappingError("layer " + qname(lp.layer) + ": tile " + tile_str(lp.tile) + " does not fit the " + std::to_string(cfg.ncb_sram_bytes()) + "-byte NCB SRAM");
    }
    std::vector<int> order(skel.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (;;) {
        MappingPlan p = assemble_plan(g, cfg, skel);
        ActivationLayout a = allocate_activations(p, order, cfg);
        if (a.end <= cfg.l2_bytes()) return p;
        const ActivationBuffer* over = nullptr;
        for (const auto& b : a.buffers)
            if (b.addr + b.bytes > cfg.l2_bytes()) {
                over = &b;
                break;
            }
        std::string need = "activations end at L2 byte " + std::to_string(a.end) + " of " + std::to_string(cfg.l2_bytes());
        if (over->first < 0) throw MappingError(need + " (graph input " + qname(over->tensor) + ")");
        int li = over->first;
        LayerPlan& lp = skel[li];
        if (fixed[li] || lp.kernel == Kernel::Copy || lp.waves == 1)
            throw MappingError(need + "; layer " + qname(lp.layer) + " cannot share its output with an input");
        LayerPlan fresh = lp;
        fresh.regions.clear();
        fresh.transfers.clear();
        lp = search(fresh, cfg, exhaustive, true);
        fixed[li] = true;
    }
}

} // namespace

const char* kernel_name(Kernel k) {
    switch (k) {
    case Kernel::Conv: return "conv";
    case Kernel::Depthwise: return "depthwise";
    case Kernel::AvgPool: return "avgpool";
    case Kernel::MaxPool: return "maxpool";
    case Kernel::Add: return "add";
    case Kernel::Clamp: return "clamp";
    case Kernel::Upsample: return "upsample";
    case Kernel::Copy: return "copy";
    }
    return "?";
}

Kernel kernel_from(const std::string& s) {
    for (Kernel k : {Kernel::Conv, Kernel::Depthwise, Kernel::AvgPool, Kernel::MaxPool, Kernel::Add, Kernel::Clamp, Kernel::Upsample, Kernel::Copy})
        if (s == kernel_name(k)) return k;
    throw ValidationError("unknown kernel " + qname(s));
}

const char* transfer_kind_name(TransferKind k) {
    switch (k) {
    case TransferKind::Input: return "input";
    case TransferKind::Input2: return "input2";
    case TransferKind::Params: return "params";
    case TransferKind::Output: return "output";
    }
    return "?";
}

const SramRegion* LayerPlan::region(const std::string& name) const {
    for (const auto& r : regions)
        if (r.name == name) return &r;
    return nullptr;
}

Objective objective(const MappingPlan& p) { return {p.est_cycles, p.bytes_moved}; }

int param_blocks(const LayerPlan& lp) {
    if (lp.kernel == Kernel::Conv) return lp.tile.gt * lp.chunks;
    if (lp.kernel == Kernel::Depthwise) return 1;
    return 0;
}

u64 block_bytes(const LayerPlan& lp, int block, const arch::HardwareConfig& cfg) {
    u64 L = lanes(cfg);
    if (lp.kernel == Kernel::Depthwise) return lp.tile.gt * group_param_bytes(lp, cfg);
    if (lp.kernel != Kernel::Conv) return 0;
    int c = block % std::max(lp.chunks, 1);
    u64 taps = static_cast<u64>(lp.geo.kh) * lp.geo.kw;
    return (c == 0 ? 4 * L : 0) + L * taps * chunk_channels(lp, c);
}

u64 block_compute_cycles(const LayerPlan& lp, int block, const arch::HardwareConfig& cfg) {
    Counts k = counts(lp, cfg);
    u64 P = k.P, gt = lp.tile.gt;
    u64 T = static_cast<u64>(lp.geo.kh) * lp.geo.kw;
    u64 loop = loop_overhead(lp);
    switch (lp.kernel) {
    case Kernel::Conv: {
        u64 kr = T * chunk_channels(lp, block % std::max(lp.chunks, 1));
        return 5 + P * (2 + kr + loop);
    }
    case Kernel::Depthwise: return gt * (5 + P * (2 + T + loop));
    case Kernel::AvgPool: return gt * (3 + P * (2 + T + loop));
    case Kernel::MaxPool: return gt * (3 + P * (2 + 2 * T + loop));
    case Kernel::Upsample: return gt * (3 + 2 * P);
    case Kernel::Add: return 4 + 4 * P * gt;
    case Kernel::Clamp:
    case Kernel::Copy: return 3 + 3 * P * gt;
    }
    return 0;
}

u64 layer_cycles(const LayerPlan& lp, const arch::HardwareConfig& cfg, bool prefetched, u64 prefetch_words) {
    Counts k = counts(lp, cfg);
    return timeline(lp, model(lp, k, cfg), cfg, prefetched && param_blocks(lp) > 0, prefetch_words);
}

u64 first_block_words(const LayerPlan& lp, const arch::HardwareConfig& cfg) {
    if (param_blocks(lp) == 0) return 0;
    return flat_words(block_bytes(lp, 0, cfg), cfg);
}

u64 estimate_cycles(const MappingPlan& p, const arch::HardwareConfig& cfg) {
    if (p.layers.empty()) return 0;
    u64 t = 1; // LAUNCH
    for (const auto& h : p.inputs) t += arch::dma_cycles(h.bytes() * 8, cfg);
    for (const auto& h : p.outputs) t += arch::dma_cycles(h.bytes() * 8, cfg);
    for (const auto& lp : p.layers) t += layer_cycles(lp, cfg);
    return t;
}

u64 ideal_compute_cycles(u64 macs, int clusters, const arch::HardwareConfig& cfg) {
    u64 per_cycle = static_cast<u64>(clusters) * cfg.ncb_per_cluster * cfg.pes_per_ncb;
    return cdiv(macs, per_cycle);
}

Item item_at(const LayerPlan& lp, int index) {
    int nr = static_cast<int>(cdiv(lp.groups, lp.tile.gt));
    int ntx = static_cast<int>(cdiv(lp.geo.out_w, lp.tile.wt));
    int tile = index / nr;
    return {(tile / ntx) * lp.tile.ht, (tile % ntx) * lp.tile.wt, (index % nr) * lp.tile.gt};
}

int item_cluster(const LayerPlan&, int index, const arch::HardwareConfig& cfg) {
    return static_cast<int>((index % cfg.total_ncbs()) % cfg.num_clusters);
}

int item_column(const LayerPlan&, int index, const arch::HardwareConfig& cfg) {
    return static_cast<int>((index % cfg.total_ncbs()) / cfg.num_clusters);
}

MappingPlan plan_mapping(const ir::Graph& g, const arch::HardwareConfig& cfg) { return plan_with_tiles(g, cfg, {}); }

MappingPlan brute_force_plan(const ir::Graph& g, const arch::HardwareConfig& cfg, u64 cap) {
    arch::require_valid(cfg);
    u64 total = 0;
    for (const auto& lp : lower(g, cfg)) total += axes(lp, true).size();
    if (total > cap) throw MappingError("brute force needs " + std::to_string(total) + " candidates, above the cap of " + std::to_string(cap));
    return plan_graph(g, cfg, {}, true);
}

MappingPlan plan_with_tiles(const ir::Graph& g, const arch::HardwareConfig& cfg, const std::map<std::string, Tile>& tiles) {
    arch::require_valid(cfg);
    return plan_graph(g, cfg, tiles, false);
}

} // namespace j3dai::map
