#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "j3dai/error.hpp"
#include "j3dai/isa.hpp"

namespace j3dai::isa {

namespace {

constexpr std::pair<Op, const char*> kOps[] = {
    {Op::Nop, "NOP"},       {Op::Halt, "HALT"},     {Op::Mark, "MARK"},         {Op::AguCfg, "AGU_CFG"},
    {Op::LoopCfg, "LOOP_CFG"}, {Op::LoopEnd, "LOOP_END"}, {Op::Mac, "MAC"},      {Op::Alu, "ALU"},
    {Op::Act, "ACT"},       {Op::Req, "REQ"},       {Op::Ld8, "LD8"},           {Op::St8, "ST8"},
    {Op::Ld32, "LD32"},     {Op::St32, "ST32"},     {Op::Mcast, "MCAST"},       {Op::Dmpa, "DMPA"},
    {Op::Sync, "SYNC"},     {Op::Csrw, "CSRW"},     {Op::Csrr, "CSRR"},         {Op::DmaXfer, "DMA_XFER"},
    {Op::Launch, "LAUNCH"}, {Op::Wait, "WAIT"},
};

const char* const kAluNames[] = {"add", "sub", "max", "min", "shl", "shr", "mov"};
const char* const kActNames[] = {"relu", "relu6", "hsig"};
const char* const kCsrNames[] = {"lane_mask", "ncb_mask", "status"};
const char* const kSpaceNames[] = {"l2", "hdm", "sram"};
const char* const kRegNames[] = {"acc", "r1", "r2", "r3"};

template <std::size_t N>
int lookup(const char* const (&names)[N], const std::string& s) {
    for (std::size_t i = 0; i < N; ++i)
        if (s == names[i]) return static_cast<int>(i);
    return -1;
}

std::vector<std::string> split_operands(const std::string& rest) {
    std::string s = rest;
    for (char& c : s)
        if (c == ',' || c == '(' || c == ')' || c == '{' || c == '}') c = ' ';
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string t; is >> t;) out.push_back(t);
    return out;
}

class Parser {
public:
    Parser(const arch::HardwareConfig& cfg) : cfg_(cfg) {}

    Program run(const std::string& text) {
        std::vector<std::string> lines;
        {
            std::istringstream is(text);
            for (std::string l; std::getline(is, l);) lines.push_back(l);
        }
        // Regions first so symbols may be used before their declaration.
        for (std::size_t i = 0; i < lines.size(); ++i) {
            line_ = static_cast<int>(i + 1);
            auto toks = tokens(lines[i]);
            if (!toks.empty() && toks[0] == ".region") region(toks);
            if (!toks.empty() && toks[0] == ".markers") {
                for (std::size_t k = 1; k < toks.size(); ++k) {
                    if (std::find(p_.markers.begin(), p_.markers.end(), toks[k]) != p_.markers.end()) fail("duplicate marker \"" + toks[k] + "\"");
                    p_.markers.push_back(toks[k]);
                }
            }
        }
        std::vector<Instr>* cur = nullptr;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            line_ = static_cast<int>(i + 1);
            auto toks = tokens(lines[i]);
            if (toks.empty() || toks[0] == ".region" || toks[0] == ".markers") continue;
            if (toks[0] == ".host") {
                if (toks.size() != 1) fail("unexpected text after .host");
                if (host_seen_) fail("duplicate .host section");
                host_seen_ = true;
                cur = &p_.host;
                continue;
            }
            if (toks[0] == ".cluster") {
                if (toks.size() != 2) fail(".cluster takes one index");
                auto idx = static_cast<int>(number(toks[1]));
                if (idx < 0 || idx >= static_cast<int>(cfg_.num_clusters))
                    fail("cluster " + std::to_string(idx) + " out of range (" + std::to_string(cfg_.num_clusters) + " clusters)");
                if (p_.clusters.count(idx)) fail("duplicate .cluster " + std::to_string(idx));
                cur = &p_.clusters[idx];
                continue;
            }
            if (toks[0][0] == '.') fail("unknown directive " + toks[0]);
            // Instructions before any section belong to cluster 0.
            if (!cur) {
                if (p_.clusters.count(0)) fail("instruction outside a .host or .cluster section");
                cur = &p_.clusters[0];
            }
            cur->push_back(instruction(lines[i]));
        }
        return std::move(p_);
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw AssemblyError(line_, msg); }

    static std::vector<std::string> tokens(const std::string& raw) {
        std::string l = raw.substr(0, raw.find(';'));
        std::istringstream is(l);
        std::vector<std::string> out;
        for (std::string t; is >> t;) out.push_back(t);
        return out;
    }

    std::int64_t integer(const std::string& s) const {
        std::int64_t v = 0;
        bool neg = !s.empty() && s[0] == '-';
        std::string body = neg ? s.substr(1) : s;
        int base = 10;
        if (body.size() > 2 && body[0] == '0' && (body[1] == 'x' || body[1] == 'X')) {
            base = 16;
            body = body.substr(2);
        }
        auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v, base);
        if (body.empty() || ec != std::errc() || ptr != body.data() + body.size()) fail("malformed number \"" + s + "\"");
        return neg ? -v : v;
    }

    // Integer, bank-qualified SRAM address "bN:off", or symbol "@NAME[+/-off]".
    std::int64_t number(const std::string& s) const {
        if (s.empty()) fail("missing operand");
        if (s[0] == '@') {
            auto cut = s.find_first_of("+-", 1);
            std::string name = s.substr(1, cut == std::string::npos ? std::string::npos : cut - 1);
            const Region* r = p_.region(name);
            if (!r) fail("unresolved symbol \"" + name + "\"");
            std::int64_t off = cut == std::string::npos ? 0 : integer(s.substr(cut + (s[cut] == '+' ? 1 : 0)));
            return static_cast<std::int64_t>(r->addr) + off;
        }
        if (s[0] == 'b' && s.find(':') != std::string::npos) {
            auto colon = s.find(':');
            return integer(s.substr(1, colon - 1)) * cfg_.ncb_bank_bytes + integer(s.substr(colon + 1));
        }
        return integer(s);
    }

    void region(const std::vector<std::string>& t) {
        if (t.size() != 5) fail(".region takes name, space, addr, size");
        int sp = lookup(kSpaceNames, t[2]);
        if (sp < 0) fail("unknown space \"" + t[2] + "\"");
        if (p_.region(t[1])) fail("duplicate region \"" + t[1] + "\"");
        auto addr = integer(t[3]), size = integer(t[4]);
        if (addr < 0 || size < 0) fail("region \"" + t[1] + "\" has a negative address or size");
        p_.regions.push_back({t[1], static_cast<Space>(sp), static_cast<std::uint64_t>(addr), static_cast<std::uint64_t>(size)});
    }

    void arity(const std::vector<std::string>& t, std::size_t n, const char* what) const {
        if (t.size() != n) fail(std::string(what) + " takes " + std::to_string(n) + " operands, got " + std::to_string(t.size()));
    }

    int reg(const std::string& s) const {
        int r = lookup(kRegNames, s);
        if (r < 0) fail("unknown register \"" + s + "\"");
        return r;
    }

    int agu(const std::string& s) const {
        if (s.size() < 2 || s[0] != 'a') fail("expected an AGU operand, got \"" + s + "\"");
        auto v = integer(s.substr(1));
        if (v < 0 || v >= kNumAgus) fail("AGU index " + std::to_string(v) + " out of range (" + std::to_string(kNumAgus) + " AGUs)");
        return static_cast<int>(v);
    }

    // aN.w | aN.b | mc | #imm
    std::pair<std::int64_t, std::int64_t> source(const std::string& s) const {
        if (s == "mc") return {static_cast<int>(Mode::Mcast), 0};
        if (!s.empty() && s[0] == '#') return {static_cast<int>(Mode::Imm), integer(s.substr(1))};
        auto dot = s.find('.');
        if (dot == std::string::npos) fail("operand \"" + s + "\" needs a .w or .b suffix");
        std::string suf = s.substr(dot + 1);
        if (suf != "w" && suf != "b") fail("operand \"" + s + "\" needs a .w or .b suffix");
        return {static_cast<int>(suf == "w" ? Mode::Word : Mode::Byte), agu(s.substr(0, dot))};
    }

    std::pair<std::int64_t, std::int64_t> reg_or_imm(const std::string& s) const {
        if (!s.empty() && s[0] == '#') return {1, number(s.substr(1))};
        return {0, reg(s)};
    }

    std::pair<std::int64_t, std::int64_t> space_addr(const std::string& s) const {
        auto colon = s.find(':');
        if (colon == std::string::npos) fail("expected space:addr, got \"" + s + "\"");
        int sp = lookup(kSpaceNames, s.substr(0, colon));
        if (sp < 0 || sp == static_cast<int>(Space::Sram)) fail("DMA space must be l2 or hdm, got \"" + s.substr(0, colon) + "\"");
        return {sp, number(s.substr(colon + 1))};
    }

    Instr instruction(const std::string& raw) {
        std::string l = raw.substr(0, raw.find(';'));
        std::istringstream is(l);
        std::string mnem;
        is >> mnem;
        std::string rest;
        std::getline(is, rest);
        auto t = split_operands(rest);
        Instr in;
        in.line = line_;
        auto it = std::find_if(std::begin(kOps), std::end(kOps), [&](const auto& e) { return mnem == e.second; });
        if (it == std::end(kOps)) fail("unknown mnemonic \"" + mnem + "\"");
        in.op = it->first;
        auto& a = in.a;
        switch (in.op) {
        case Op::Nop:
        case Op::Halt:
        case Op::LoopEnd: arity(t, 0, mnem.c_str()); break;
        case Op::Mark: {
            arity(t, 1, "MARK");
            auto m = std::find(p_.markers.begin(), p_.markers.end(), t[0]);
            if (m == p_.markers.end()) {
                p_.markers.push_back(t[0]);
                m = p_.markers.end() - 1;
            }
            a.push_back(m - p_.markers.begin());
            break;
        }
        case Op::AguCfg: {
            if (t.size() < 2 || t.size() > 2 + 2 * kAguDims || t.size() % 2 != 0)
                fail("AGU_CFG takes an AGU, a base and up to 4 (extent, stride) pairs");
            a.push_back(agu(t[0]));
            a.push_back(number(t[1]));
            for (std::size_t k = 2; k < 2 + 2 * kAguDims; k += 2) {
                a.push_back(k < t.size() ? number(t[k]) : 1);
                a.push_back(k < t.size() ? number(t[k + 1]) : 0);
            }
            break;
        }
        case Op::LoopCfg:
            arity(t, 1, "LOOP_CFG");
            a.push_back(number(t[0]));
            break;
        case Op::Mac: {
            arity(t, 2, "MAC");
            auto x = source(t[0]), y = source(t[1]);
            a = {x.first, x.second, y.first, y.second};
            break;
        }
        case Op::Alu: {
            if (t.empty()) fail("ALU needs an operation");
            int op = lookup(kAluNames, t[0]);
            if (op < 0) fail("unknown ALU operation \"" + t[0] + "\"");
            if (op == static_cast<int>(AluOp::Mov)) {
                arity(t, 3, "ALU mov");
                auto b = reg_or_imm(t[2]);
                a = {op, reg(t[1]), 0, b.first, b.second};
            } else {
                arity(t, 4, "ALU");
                auto b = reg_or_imm(t[3]);
                a = {op, reg(t[1]), reg(t[2]), b.first, b.second};
            }
            break;
        }
        case Op::Act: {
            if (t.empty()) fail("ACT needs a function");
            int fn = lookup(kActNames, t[0]);
            if (fn < 0) fail("unknown ACT function \"" + t[0] + "\"");
            arity(t, fn == static_cast<int>(ActFn::Relu6) ? 5 : 4, "ACT");
            a = {fn, reg(t[1]), reg(t[2]), number(t[3]), t.size() > 4 ? number(t[4]) : 0};
            break;
        }
        case Op::Req:
            arity(t, 6, "REQ");
            a = {agu(t[0]), number(t[1]), number(t[2]), number(t[3]), number(t[4]), number(t[5])};
            break;
        case Op::Ld8: {
            arity(t, 2, "LD8");
            auto s = source(t[1]);
            if (s.first != static_cast<int>(Mode::Word) && s.first != static_cast<int>(Mode::Byte)) fail("LD8 reads memory through an AGU");
            a = {reg(t[0]), s.first, s.second};
            break;
        }
        case Op::Ld32:
            arity(t, 2, "LD32");
            a = {reg(t[0]), agu(t[1])};
            break;
        case Op::St8:
        case Op::St32:
            arity(t, 2, mnem.c_str());
            a = {agu(t[0]), reg(t[1])};
            break;
        case Op::Mcast:
            arity(t, 3, "MCAST");
            a = {number(t[0]), agu(t[1]), number(t[2])};
            break;
        case Op::Dmpa: dmpa(t, a); break;
        case Op::Sync:
            arity(t, 1, "SYNC");
            if (t[0] == "dmpa") a = {static_cast<int>(SyncKind::Dmpa)};
            else if (t[0] == "barrier") a = {static_cast<int>(SyncKind::Barrier)};
            else fail("SYNC target must be dmpa or barrier");
            break;
        case Op::Csrw: {
            arity(t, 2, "CSRW");
            int c = lookup(kCsrNames, t[0]);
            if (c < 0) fail("unknown CSR \"" + t[0] + "\"");
            auto v = reg_or_imm(t[1]);
            a = {c, v.first, v.second};
            break;
        }
        case Op::Csrr: {
            arity(t, 2, "CSRR");
            int c = lookup(kCsrNames, t[1]);
            if (c < 0) fail("unknown CSR \"" + t[1] + "\"");
            a = {reg(t[0]), c};
            break;
        }
        case Op::DmaXfer: {
            arity(t, 3, "DMA_XFER");
            auto d = space_addr(t[0]), s = space_addr(t[1]);
            a = {d.first, d.second, s.first, s.second, number(t[2])};
            break;
        }
        case Op::Launch:
        case Op::Wait:
            arity(t, 1, mnem.c_str());
            a = {number(t[0])};
            break;
        }
        return in;
    }

    void dmpa(const std::vector<std::string>& t, std::vector<std::int64_t>& a) const {
        if (t.size() < 2) fail("DMPA needs a direction and a mode");
        if (t[0] != "in" && t[0] != "out") fail("DMPA direction must be in or out");
        std::int64_t dir = t[0] == "in" ? 0 : 1;
        const std::size_t cols = cfg_.ncb_per_cluster;
        if (t[1] == "flat") {
            if (t.size() != 4 + cols) fail("DMPA flat takes sram, bytes and " + std::to_string(cols) + " column bases");
            std::int64_t mask = 0;
            std::vector<std::int64_t> bases;
            for (std::size_t c = 0; c < cols; ++c) {
                const auto& s = t[4 + c];
                if (s == "-") {
                    bases.push_back(0);
                    continue;
                }
                mask |= std::int64_t{1} << c;
                bases.push_back(number(s));
            }
            a = {dir, 0, number(t[2]), number(t[3]), mask};
            a.insert(a.end(), bases.begin(), bases.end());
        } else if (t[1] == "tensor") {
            // sram cs pad (base H W C) (h w cn) then per column "(y x c0)" or "-"
            if (t.size() < 12) fail("DMPA tensor operands incomplete");
            a = {dir, 1};
            for (std::size_t k = 2; k < 12; ++k) a.push_back(number(t[k]));
            std::int64_t mask = 0;
            std::vector<std::int64_t> origins;
            std::size_t k = 12;
            for (std::size_t c = 0; c < cols; ++c) {
                if (k >= t.size()) fail("DMPA tensor needs an origin or '-' for each of " + std::to_string(cols) + " columns");
                if (t[k] == "-") {
                    origins.insert(origins.end(), {0, 0, 0});
                    ++k;
                    continue;
                }
                if (k + 3 > t.size()) fail("DMPA tensor column origin needs y, x, c0");
                mask |= std::int64_t{1} << c;
                for (int j = 0; j < 3; ++j) origins.push_back(number(t[k + j]));
                k += 3;
            }
            if (k != t.size()) fail("DMPA tensor has trailing operands");
            a.push_back(mask);
            a.insert(a.end(), origins.begin(), origins.end());
        } else {
            fail("DMPA mode must be flat or tensor");
        }
    }

    const arch::HardwareConfig& cfg_;
    Program p_;
    int line_ = 0;
    bool host_seen_ = false;
};

} // namespace

const char* op_name(Op op) {
    for (const auto& [o, n] : kOps)
        if (o == op) return n;
    return "?";
}

const Region* Program::region(const std::string& name) const {
    for (const auto& r : regions)
        if (r.name == name) return &r;
    return nullptr;
}

Program assemble(const std::string& text, const arch::HardwareConfig& cfg) {
    Program p = Parser(cfg).run(text);
    verify(p, cfg);
    return p;
}

std::string disassemble(const Instr& in, const Program& p) {
    std::ostringstream os;
    os << op_name(in.op);
    const auto& a = in.a;
    auto src = [&](std::int64_t mode, std::int64_t v) {
        switch (static_cast<Mode>(mode)) {
        case Mode::Word: return "a" + std::to_string(v) + ".w";
        case Mode::Byte: return "a" + std::to_string(v) + ".b";
        case Mode::Mcast: return std::string("mc");
        case Mode::Imm: return "#" + std::to_string(v);
        }
        return std::string("?");
    };
    auto regn = [&](std::int64_t r) { return std::string(r >= 0 && r < kNumRegs ? kRegNames[r] : "?"); };
    auto hex = [](std::int64_t v) {
        std::ostringstream h;
        if (v < 0) h << "-0x" << std::hex << -v;
        else h << "0x" << std::hex << v;
        return h.str();
    };
    switch (in.op) {
    case Op::Nop:
    case Op::Halt:
    case Op::LoopEnd: break;
    case Op::Mark: os << " " << (a[0] >= 0 && a[0] < static_cast<std::int64_t>(p.markers.size()) ? p.markers[a[0]] : "?"); break;
    case Op::AguCfg:
        os << " a" << a[0] << ", " << hex(a[1]);
        for (int k = 0; k < kAguDims; ++k) os << ", (" << a[2 + 2 * k] << ", " << a[3 + 2 * k] << ")";
        break;
    case Op::LoopCfg: os << " " << a[0]; break;
    case Op::Mac: os << " " << src(a[0], a[1]) << ", " << src(a[2], a[3]); break;
    case Op::Alu:
        os << " " << kAluNames[a[0]] << " " << regn(a[1]);
        if (a[0] != static_cast<int>(AluOp::Mov)) os << ", " << regn(a[2]);
        os << ", " << (a[3] ? "#" + std::to_string(a[4]) : regn(a[4]));
        break;
    case Op::Act:
        os << " " << kActNames[a[0]] << " " << regn(a[1]) << ", " << regn(a[2]) << ", " << a[3];
        if (a[0] == static_cast<int>(ActFn::Relu6)) os << ", " << a[4];
        break;
    case Op::Req: os << " a" << a[0] << ", " << a[1] << ", " << a[2] << ", " << a[3] << ", " << a[4] << ", " << a[5]; break;
    case Op::Ld8: os << " " << regn(a[0]) << ", " << src(a[1], a[2]); break;
    case Op::Ld32: os << " " << regn(a[0]) << ", a" << a[1]; break;
    case Op::St8:
    case Op::St32: os << " a" << a[0] << ", " << regn(a[1]); break;
    case Op::Mcast: os << " " << a[0] << ", a" << a[1] << ", " << hex(a[2]); break;
    case Op::Dmpa: {
        os << (a[0] == 0 ? " in" : " out");
        if (a[1] == 0) {
            os << ", flat, " << hex(a[2]) << ", " << a[3] << ", {";
            for (std::size_t c = 0; c + 5 < a.size(); ++c) os << (c ? " " : "") << ((a[4] >> c) & 1 ? hex(a[5 + c]) : "-");
            os << "}";
        } else {
            os << ", tensor, " << hex(a[2]) << ", " << a[3] << ", " << a[4] << ", (" << hex(a[5]) << " " << a[6] << " " << a[7] << " " << a[8]
               << "), (" << a[9] << " " << a[10] << " " << a[11] << "), {";
            const std::int64_t mask = a[12];
            for (std::size_t c = 0; 13 + 3 * c + 2 < a.size(); ++c) {
                os << (c ? " " : "");
                if ((mask >> c) & 1) os << "(" << a[13 + 3 * c] << " " << a[14 + 3 * c] << " " << a[15 + 3 * c] << ")";
                else os << "-";
            }
            os << "}";
        }
        break;
    }
    case Op::Sync: os << (a[0] == 0 ? " dmpa" : " barrier"); break;
    case Op::Csrw: os << " " << kCsrNames[a[0]] << ", " << (a[1] ? "#" + hex(a[2]) : regn(a[2])); break;
    case Op::Csrr: os << " " << regn(a[0]) << ", " << kCsrNames[a[1]]; break;
    case Op::DmaXfer: os << " " << kSpaceNames[a[0]] << ":" << hex(a[1]) << ", " << kSpaceNames[a[2]] << ":" << hex(a[3]) << ", " << a[4]; break;
    case Op::Launch:
    case Op::Wait: os << " " << hex(a[0]); break;
    }
    return os.str();
}

std::string disassemble(const Program& p) {
    std::ostringstream os;
    for (const auto& r : p.regions)
        os << ".region " << r.name << " " << kSpaceNames[static_cast<int>(r.space)] << " 0x" << std::hex << r.addr << " 0x" << r.size << std::dec << "\n";
    // Markers are interned in order of first use; declare them up front so
    // indices survive a round trip regardless of stream order.
    if (!p.markers.empty()) {
        os << ".markers";
        for (const auto& m : p.markers) os << " " << m;
        os << "\n";
    }
    os << ".host\n";
    for (const auto& in : p.host) os << "    " << disassemble(in, p) << "\n";
    for (const auto& [idx, stream] : p.clusters) {
        os << ".cluster " << idx << "\n";
        int depth = 0;
        for (const auto& in : stream) {
            if (in.op == Op::LoopEnd) --depth;
            os << std::string(4 + 2 * std::max(depth, 0), ' ') << disassemble(in, p) << "\n";
            if (in.op == Op::LoopCfg) ++depth;
        }
    }
    return os.str();
}

std::vector<std::uint32_t> encode(const std::vector<Instr>& stream) {
    std::vector<std::uint32_t> out;
    for (const auto& in : stream) {
        if (in.a.size() > 255) throw AssemblyError(in.line, std::string(op_name(in.op)) + " has more than 255 operands");
        out.push_back(static_cast<std::uint32_t>(in.op) | static_cast<std::uint32_t>(in.a.size()) << 8);
        for (auto v : in.a) {
            if (v < INT32_MIN || v > INT32_MAX) throw AssemblyError(in.line, std::string(op_name(in.op)) + " operand " + std::to_string(v) + " does not fit 32 bits");
            out.push_back(static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
        }
    }
    return out;
}

std::vector<Instr> decode(const std::vector<std::uint32_t>& words) {
    std::vector<Instr> out;
    for (std::size_t i = 0; i < words.size();) {
        std::uint32_t h = words[i++];
        Instr in;
        auto op = h & 0xff;
        if (op > static_cast<std::uint32_t>(Op::Wait)) throw AssemblyError(static_cast<int>(i), "unknown opcode " + std::to_string(op));
        in.op = static_cast<Op>(op);
        std::uint32_t n = (h >> 8) & 0xff;
        if (i + n > words.size()) throw AssemblyError(static_cast<int>(i), "truncated instruction");
        for (std::uint32_t k = 0; k < n; ++k) in.a.push_back(static_cast<std::int32_t>(words[i++]));
        out.push_back(std::move(in));
    }
    return out;
}

std::uint64_t dmpa_tensor_words(std::int64_t h, std::int64_t w, std::int64_t cn, std::int64_t C, std::int64_t cs, std::uint32_t row_bytes) {
    auto ceil_div = [](std::int64_t x, std::int64_t y) { return (x + y - 1) / y; };
    if (cn == C && cs == C) return static_cast<std::uint64_t>(h * ceil_div(w * C, row_bytes));
    return static_cast<std::uint64_t>(h * w * ceil_div(cn, row_bytes));
}

} // namespace j3dai::isa
