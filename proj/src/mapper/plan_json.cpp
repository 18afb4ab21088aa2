#include "j3dai/error.hpp"
#include "j3dai/mapper.hpp"

namespace j3dai::map {

using nlohmann::json;

namespace {

Placement placement_from(const std::string& s) {
    if (s == "packed") return Placement::Packed;
    if (s == "bank_aligned") return Placement::BankAligned;
    throw ValidationError("unknown placement \"" + s + "\"");
}

TransferKind transfer_kind_from(const std::string& s) {
    for (TransferKind k : {TransferKind::Input, TransferKind::Input2, TransferKind::Params, TransferKind::Output})
        if (s == transfer_kind_name(k)) return k;
    throw ValidationError("unknown transfer kind \"" + s + "\"");
}

json geo_json(const Geometry& g) {
    return {{"in", {g.in_h, g.in_w, g.in_c}}, {"out", {g.out_h, g.out_w, g.out_c}}, {"kernel", {g.kh, g.kw}}, {"stride", {g.sh, g.sw}},
            {"padding", {g.ph, g.pw}}, {"scale", g.scale}, {"c_offset", g.c_offset}};
}

Geometry geo_from(const json& j) {
    Geometry g;
    g.in_h = j.at("in").at(0), g.in_w = j.at("in").at(1), g.in_c = j.at("in").at(2);
    g.out_h = j.at("out").at(0), g.out_w = j.at("out").at(1), g.out_c = j.at("out").at(2);
    g.kh = j.at("kernel").at(0), g.kw = j.at("kernel").at(1);
    g.sh = j.at("stride").at(0), g.sw = j.at("stride").at(1);
    g.ph = j.at("padding").at(0), g.pw = j.at("padding").at(1);
    g.scale = j.at("scale");
    g.c_offset = j.at("c_offset");
    return g;
}

json host_json(const std::vector<HostTensor>& v) {
    json a = json::array();
    for (const auto& h : v) a.push_back({{"name", h.name}, {"hwc", {h.h, h.w, h.c}}});
    return a;
}

std::vector<HostTensor> host_from(const json& a) {
    std::vector<HostTensor> v;
    for (const auto& j : a) v.push_back({j.at("name"), j.at("hwc").at(0), j.at("hwc").at(1), j.at("hwc").at(2)});
    return v;
}

} // namespace

json to_json(const MappingPlan& p) {
    json layers = json::array();
    for (const auto& lp : p.layers) {
        json regions = json::array();
        for (const auto& r : lp.regions) regions.push_back({{"name", r.name}, {"offset", r.offset}, {"bytes", r.bytes}});
        json transfers = json::array();
        for (const auto& t : lp.transfers)
            transfers.push_back({{"kind", transfer_kind_name(t.kind)}, {"wave", t.wave}, {"cluster", t.cluster}, {"block", t.block}, {"columns", t.columns}, {"bytes", t.bytes}, {"words", t.words}});
        const Tile& t = lp.tile;
        layers.push_back({{"layer", lp.layer},
                          {"part", lp.part},
                          {"kernel", kernel_name(lp.kernel)},
                          {"fused", lp.fused},
                          {"inputs", lp.inputs},
                          {"output", lp.output},
                          {"geometry", geo_json(lp.geo)},
                          {"tile",
                           {{"ht", t.ht}, {"wt", t.wt}, {"gt", t.gt}, {"cc", t.cc}, {"double_buffer", t.double_buffer},
                            {"placement", t.placement == Placement::Packed ? "packed" : "bank_aligned"}}},
                          {"groups", lp.groups},
                          {"items", lp.items},
                          {"waves", lp.waves},
                          {"chunks", lp.chunks},
                          {"regions", regions},
                          {"transfers", transfers},
                          {"macs", lp.macs},
                          {"param_offset", lp.param_offset},
                          {"param_bytes", lp.param_bytes},
                          {"est_cycles", lp.est_cycles},
                          {"bytes_moved", lp.bytes_moved}});
    }
    return {{"layers", layers}, {"inputs", host_json(p.inputs)}, {"outputs", host_json(p.outputs)},
            {"param_bytes", p.param_bytes}, {"bytes_moved", p.bytes_moved}, {"est_cycles", p.est_cycles}};
}

MappingPlan plan_from_json(const json& j) {
    try {
        MappingPlan p;
        for (const auto& l : j.at("layers")) {
            LayerPlan lp;
            lp.layer = l.at("layer");
            lp.part = l.at("part");
            lp.kernel = kernel_from(l.at("kernel"));
            lp.fused = l.at("fused").get<std::vector<std::string>>();
            lp.inputs = l.at("inputs").get<std::vector<std::string>>();
            lp.output = l.at("output");
            lp.geo = geo_from(l.at("geometry"));
            const auto& t = l.at("tile");
            lp.tile = {t.at("ht"), t.at("wt"), t.at("gt"), t.at("cc"), t.at("double_buffer"), placement_from(t.at("placement"))};
            lp.groups = l.at("groups");
            lp.items = l.at("items");
            lp.waves = l.at("waves");
            lp.chunks = l.at("chunks");
            for (const auto& r : l.at("regions")) lp.regions.push_back({r.at("name"), r.at("offset"), r.at("bytes")});
            for (const auto& x : l.at("transfers"))
                lp.transfers.push_back({transfer_kind_from(x.at("kind")), x.at("wave"), x.at("cluster"), x.at("block"), x.at("columns"), x.at("bytes"), x.at("words")});
            lp.macs = l.at("macs");
            lp.param_offset = l.at("param_offset");
            lp.param_bytes = l.at("param_bytes");
            lp.est_cycles = l.at("est_cycles");
            lp.bytes_moved = l.at("bytes_moved");
            p.layers.push_back(std::move(lp));
        }
        p.inputs = host_from(j.at("inputs"));
        p.outputs = host_from(j.at("outputs"));
        p.param_bytes = j.at("param_bytes");
        p.bytes_moved = j.at("bytes_moved");
        p.est_cycles = j.at("est_cycles");
        return p;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("mapping plan: ") + e.what());
    }
}

} // namespace j3dai::map
