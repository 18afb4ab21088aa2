#include "j3dai/scheduler.hpp"

#include <algorithm>

#include "j3dai/error.hpp"

namespace j3dai::sched {

using map::LayerPlan;
using u64 = std::uint64_t;

namespace {

std::vector<bool> banks_of(const LayerPlan& lp, const arch::HardwareConfig& cfg) {
    std::vector<bool> used(cfg.ncb_sram_banks, false);
    for (const auto& r : lp.regions) {
        if (r.bytes == 0) continue;
        for (u64 b = r.offset / cfg.ncb_bank_bytes; b <= (r.offset + r.bytes - 1) / cfg.ncb_bank_bytes && b < used.size(); ++b) used[b] = true;
    }
    return used;
}

bool clear(const std::vector<bool>& used, u64 off, u64 bytes, const arch::HardwareConfig& cfg) {
    for (u64 b = off / cfg.ncb_bank_bytes; b <= (off + bytes - 1) / cfg.ncb_bank_bytes; ++b)
        if (b >= used.size() || used[b]) return false;
    return true;
}

// Layer b must follow layer a.
bool depends(const LayerPlan& a, const LayerPlan& b) {
    if (std::find(b.inputs.begin(), b.inputs.end(), a.output) != b.inputs.end()) return true;
    return a.output == b.output && a.part < b.part;
}

struct Chooser {
    const map::MappingPlan& p;
    const arch::HardwareConfig& cfg;
    const Options& opt;
    std::vector<std::vector<int>> preds;

    std::int64_t target(int cur, int next) const {
        if (!opt.prefetch || cur < 0 || next < 0) return -1;
        return prefetch_target(p.layers[cur], p.layers[next], cfg);
    }

    u64 duration(int layer, bool prefetched, int next) const {
        const LayerPlan& lp = p.layers[layer];
        u64 pf = target(layer, next) >= 0 ? map::first_block_words(p.layers[next], cfg) : 0;
        return map::layer_cycles(lp, cfg, prefetched, pf);
    }

    bool ready(int l, const std::vector<bool>& done) const {
        if (done[l]) return false;
        for (int q : preds[l])
            if (!done[q]) return false;
        return true;
    }

    // Cheapest total over the next `depth` steps, given that `prev` ran last.
    // The cost of `prev` itself is included because prefetching changes it.
    u64 best(int prev, bool prev_prefetched, std::vector<bool>& done, int depth) const {
        bool any = false;
        u64 out = ~u64{0};
        if (depth > 0)
            for (std::size_t l = 0; l < p.layers.size(); ++l) {
                if (!ready(static_cast<int>(l), done)) continue;
                any = true;
                int n = static_cast<int>(l);
                u64 c = duration(prev, prev_prefetched, n);
                done[l] = true;
                c += best(n, target(prev, n) >= 0, done, depth - 1);
                done[l] = false;
                out = std::min(out, c);
            }
        if (!any) return duration(prev, prev_prefetched, -1);
        return out;
    }
};

} // namespace

std::int64_t prefetch_target(const LayerPlan& cur, const LayerPlan& next, const arch::HardwareConfig& cfg, std::int64_t cur_block0) {
    if (map::param_blocks(next) == 0) return -1;
    const map::SramRegion* buf = next.region("buf0");
    if (!buf) return -1;
    u64 bytes = map::block_bytes(next, 0, cfg);
    auto mine = banks_of(cur, cfg);
    if (cur_block0 >= 0) {
        u64 at = static_cast<u64>(cur_block0), n = map::block_bytes(cur, 0, cfg);
        for (u64 b = at / cfg.ncb_bank_bytes; b <= (at + n - 1) / cfg.ncb_bank_bytes && b < mine.size(); ++b) mine[b] = true;
    }
    if (clear(mine, buf->offset, bytes, cfg)) return buf->offset;
    auto theirs = banks_of(next, cfg);
    for (std::size_t b = 0; b < mine.size(); ++b) mine[b] = mine[b] || theirs[b];
    for (u64 b = 0; b < cfg.ncb_sram_banks; ++b) {
        u64 off = b * cfg.ncb_bank_bytes;
        if (off + bytes <= cfg.ncb_sram_bytes() && clear(mine, off, bytes, cfg)) return static_cast<std::int64_t>(off);
    }
    return -1;
}

std::vector<int> Schedule::order() const {
    std::vector<int> o;
    for (const auto& s : steps) o.push_back(s.layer);
    return o;
}

bool Schedule::operator==(const Schedule& o) const {
    return steps == o.steps && activations.buffers == o.activations.buffers && activations.base == o.activations.base && activations.end == o.activations.end &&
           activations.alias == o.activations.alias && host_in_cycles == o.host_in_cycles && host_out_cycles == o.host_out_cycles && makespan == o.makespan;
}

Schedule build_schedule(const map::MappingPlan& p, const arch::HardwareConfig& cfg, const Options& opt) {
    int n = static_cast<int>(p.layers.size());
    Chooser ch{p, cfg, opt, std::vector<std::vector<int>>(n)};
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (a != b && depends(p.layers[a], p.layers[b])) ch.preds[b].push_back(a);

    // Order: at each point take the ready layer with the cheapest lookahead
    // window; ties go to the earlier plan position.
    std::vector<int> order;
    std::vector<bool> done(n, false);
    int prev = -1;
    bool prev_pf = false;
    for (int k = 0; k < n; ++k) {
        int pick = -1;
        u64 pick_cost = 0;
        for (int l = 0; l < n; ++l) {
            if (!ch.ready(l, done)) continue;
            done[l] = true;
            u64 c = (prev >= 0 ? ch.duration(prev, prev_pf, l) : 0) + ch.best(l, ch.target(prev, l) >= 0, done, std::max(opt.lookahead - 1, 0));
            done[l] = false;
            if (pick < 0 || c < pick_cost) {
                pick = l;
                pick_cost = c;
            }
        }
        if (pick < 0) throw MappingError("layer dependencies form a cycle");
        prev_pf = ch.target(prev, pick) >= 0;
        done[pick] = true;
        order.push_back(pick);
        prev = pick;
    }

    Schedule s;
    s.activations = map::allocate_activations(p, order, cfg);
    if (s.activations.end > cfg.l2_bytes())
        throw MappingError("activations end at L2 byte " + std::to_string(s.activations.end) + " of " + std::to_string(cfg.l2_bytes()));
    s.host_in_cycles = 1;
    for (const auto& h : p.inputs) s.host_in_cycles += arch::dma_cycles(h.bytes() * 8, cfg);
    for (const auto& h : p.outputs) s.host_out_cycles += arch::dma_cycles(h.bytes() * 8, cfg);
    u64 t = s.host_in_cycles;
    for (int k = 0; k < n; ++k) {
        Step st;
        st.layer = order[k];
        st.start = t;
        st.prefetched = k > 0 && s.steps[k - 1].prefetch_to >= 0;
        int next = k + 1 < n ? order[k + 1] : -1;
        st.prefetch_to = opt.prefetch && next >= 0 ? prefetch_target(p.layers[order[k]], p.layers[next], cfg, st.prefetched ? s.steps[k - 1].prefetch_to : -1) : -1;
        st.alias_barrier = s.activations.alias[k];
        u64 pf = st.prefetch_to >= 0 ? map::first_block_words(p.layers[next], cfg) : 0;
        st.duration = map::layer_cycles(p.layers[order[k]], cfg, st.prefetched, pf) + (st.alias_barrier ? 1 : 0);
        t += st.duration;
        s.steps.push_back(st);
    }
    s.makespan = n ? t + s.host_out_cycles : 0;
    return s;
}

nlohmann::json to_json(const Schedule& s) {
    using nlohmann::json;
    json steps = json::array();
    for (const auto& st : s.steps)
        steps.push_back({{"layer", st.layer}, {"start", st.start}, {"duration", st.duration}, {"prefetched", st.prefetched}, {"prefetch_to", st.prefetch_to}, {"alias_barrier", st.alias_barrier}});
    json bufs = json::array();
    for (const auto& b : s.activations.buffers) bufs.push_back({{"tensor", b.tensor}, {"addr", b.addr}, {"bytes", b.bytes}, {"first", b.first}, {"last", b.last}});
    return {{"steps", steps},
            {"activations", {{"base", s.activations.base}, {"end", s.activations.end}, {"buffers", bufs}, {"alias", s.activations.alias}}},
            {"host_in_cycles", s.host_in_cycles},
            {"host_out_cycles", s.host_out_cycles},
            {"makespan", s.makespan}};
}

Schedule schedule_from_json(const nlohmann::json& j) {
    try {
        Schedule s;
        for (const auto& x : j.at("steps"))
            s.steps.push_back({x.at("layer"), x.at("start"), x.at("duration"), x.at("prefetched"), x.at("prefetch_to"), x.at("alias_barrier")});
        const auto& a = j.at("activations");
        s.activations.base = a.at("base");
        s.activations.end = a.at("end");
        s.activations.alias = a.at("alias").get<std::vector<bool>>();
        for (const auto& b : a.at("buffers")) s.activations.buffers.push_back({b.at("tensor"), b.at("addr"), b.at("bytes"), b.at("first"), b.at("last")});
        s.host_in_cycles = j.at("host_in_cycles");
        s.host_out_cycles = j.at("host_out_cycles");
        s.makespan = j.at("makespan");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("schedule: ") + e.what());
    }
}

} // namespace j3dai::sched
