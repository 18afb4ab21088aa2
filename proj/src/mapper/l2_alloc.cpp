#include <algorithm>

#include "j3dai/error.hpp"
#include "j3dai/mapper.hpp"

namespace j3dai::map {

namespace {

constexpr std::uint64_t kAlign = 64;

std::uint64_t align_up(std::uint64_t v) { return (v + kAlign - 1) / kAlign * kAlign; }

} // namespace

bool may_alias(const LayerPlan& lp) { return lp.waves == 1 && lp.kernel != Kernel::Copy; }

const ActivationBuffer* ActivationLayout::find(const std::string& tensor) const {
    for (const auto& b : buffers)
        if (b.tensor == tensor) return &b;
    return nullptr;
}

ActivationLayout allocate_activations(const MappingPlan& p, const std::vector<int>& order, const arch::HardwareConfig&) {
    ActivationLayout out;
    out.base = align_up(p.param_bytes);
    int n = static_cast<int>(order.size());
    auto& bufs = out.buffers;
    auto index = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < bufs.size(); ++i)
            if (bufs[i].tensor == name) return static_cast<int>(i);
        return -1;
    };
    for (const auto& h : p.inputs) bufs.push_back({h.name, 0, h.bytes(), -1, 0});
    for (int pos = 0; pos < n; ++pos) {
        const LayerPlan& lp = p.layers.at(order[pos]);
        for (const auto& in : lp.inputs) {
            int i = index(in);
            if (i < 0) throw MappingError("layer \"" + lp.layer + "\" reads \"" + in + "\" before any step writes it");
            bufs[i].last = std::max(bufs[i].last, pos);
        }
        int o = index(lp.output);
        if (o < 0) {
            std::uint64_t bytes = static_cast<std::uint64_t>(lp.geo.out_h) * lp.geo.out_w * lp.geo.out_c;
            bufs.push_back({lp.output, 0, bytes, pos, pos});
        } else {
            bufs[o].last = std::max(bufs[o].last, pos);
        }
    }
    for (const auto& h : p.outputs) {
        int i = index(h.name);
        if (i < 0) throw MappingError("graph output \"" + h.name + "\" is never written");
        bufs[i].last = n;
    }

    auto aliasable = [&](int pos) { return pos >= 0 && pos < n && may_alias(p.layers[order[pos]]); };
    for (std::size_t i = 0; i < bufs.size(); ++i) {
        ActivationBuffer& b = bufs[i];
        std::vector<const ActivationBuffer*> busy;
        for (std::size_t j = 0; j < i; ++j) {
            const ActivationBuffer& c = bufs[j];
            if (!(b.first <= c.last && c.first <= b.last)) continue;
            if (c.last == b.first && aliasable(b.first)) continue;
            busy.push_back(&c);
        }
        std::sort(busy.begin(), busy.end(), [](const ActivationBuffer* x, const ActivationBuffer* y) { return x->addr < y->addr; });
        std::uint64_t addr = out.base;
        for (const auto* c : busy) {
            if (addr + b.bytes <= c->addr) break;
            addr = std::max(addr, align_up(c->addr + c->bytes));
        }
        b.addr = addr;
        out.end = std::max(out.end, addr + b.bytes);
    }
    out.end = std::max(out.end, out.base);

    out.alias.assign(n, false);
    for (int pos = 0; pos < n; ++pos) {
        const LayerPlan& lp = p.layers[order[pos]];
        const ActivationBuffer* o = out.find(lp.output);
        for (const auto& in : lp.inputs) {
            const ActivationBuffer* a = out.find(in);
            if (a->addr < o->addr + o->bytes && o->addr < a->addr + a->bytes) out.alias[pos] = true;
        }
    }
    return out;
}

} // namespace j3dai::map
