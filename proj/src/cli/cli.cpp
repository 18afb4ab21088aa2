#include "j3dai/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "j3dai/codegen.hpp"
#include "j3dai/error.hpp"
#include "j3dai/metrics.hpp"
#include "j3dai/pipeline.hpp"

namespace j3dai::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A stage failed; `code` is the process exit status.
struct StageFailure {
    std::string stage;
    int code;
    std::string message;
};

struct Settings {
    std::string config;
    std::string out = ".";
    std::optional<double> clock_hz;
    std::uint64_t seed = 1;
    std::uint64_t cycle_cap = 0;
    bool no_prefetch = false;

    // Model selection for import and run-all.
    std::string source;
    std::string model;
    double alpha = 1.0;
    std::string size = "256x192";
    int variant = 0;
    std::uint64_t model_seed = 1;

    // Explicit artifact paths; empty means "<out>/<default name>".
    std::string ir, quant, plan, schedule, program, manifest, image, sim, input;
    std::string name;
    std::string power_ref;
};

template <typename F>
auto stage(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const StageFailure&) {
        throw;
    } catch (const SimError& e) {
        throw StageFailure{name, kRuntime, e.what()};
    } catch (const Error& e) {
        throw StageFailure{name, kValidation, e.what()};
    } catch (const json::exception& e) {
        throw StageFailure{name, kValidation, e.what()};
    } catch (const std::exception& e) {
        throw StageFailure{name, kRuntime, e.what()};
    }
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("missing artifact " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) {
    try {
        return json::parse(read_text(p));
    } catch (const json::parse_error& e) {
        throw ValidationError(p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& s) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    std::ofstream o(p, std::ios::binary);
    if (!o) throw ValidationError("cannot write " + p.string());
    o << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(1) + "\n"); }

void need_file(const fs::path& p) {
    if (!fs::exists(p)) throw ValidationError("missing artifact " + p.string());
}

ir::Graph load_ir(const fs::path& p) {
    need_file(p);
    return ir::load_graph(p.string());
}

void save_values(const oracle::Values& v, const fs::path& manifest) {
    ir::Container c;
    c.tensors = v;
    fs::create_directories(manifest.parent_path());
    auto bin = manifest;
    bin.replace_extension(".bin");
    c.save(manifest.string(), bin.string());
}

oracle::Values load_values(const fs::path& manifest) {
    need_file(manifest);
    return ir::Container::load(manifest.string()).tensors;
}

std::pair<int, int> parse_size(const std::string& s) {
    int w = 0, h = 0;
    char x = 0;
    std::istringstream in(s);
    if (!(in >> w >> x >> h) || x != 'x' || !in.eof() || w <= 0 || h <= 0) throw ValidationError("size \"" + s + "\" is not WIDTHxHEIGHT");
    return {w, h};
}

class Driver {
public:
    explicit Driver(const Settings& s) : s_(s), out_(s.out) {}

    fs::path art(const std::string& given, const std::string& file) const { return given.empty() ? out_ / file : fs::path(given); }

    arch::HardwareConfig config() const {
        return stage("config", [&] {
            auto cfg = arch::j3dai_default();
            if (!s_.config.empty()) {
                need_file(s_.config);
                cfg = arch::load_config(s_.config);
            }
            if (s_.clock_hz) cfg.clock_hz = *s_.clock_hz;
            arch::require_valid(cfg);
            return cfg;
        });
    }

    std::string workload(const ir::Graph& g) const {
        if (!s_.name.empty()) return s_.name;
        return g.name.empty() ? "graph" : g.name;
    }

    void import() {
        stage("import", [&] {
            ir::Graph g;
            if (!s_.source.empty() == !s_.model.empty()) throw ValidationError("give either an IR file or --model");
            if (!s_.source.empty()) {
                g = load_ir(s_.source);
                if (g.name.empty()) g.name = fs::path(s_.source).stem().string();
            } else {
                auto [w, h] = parse_size(s_.size);
                if (s_.model == "mobilenet_v1") g = ir::build_mobilenet_v1_any(s_.alpha, h, w, s_.model_seed);
                else if (s_.model == "mobilenet_v2") g = ir::build_mobilenet_v2(h, w, s_.model_seed);
                else if (s_.model == "tiny_cnn") g = ir::build_tiny_cnn(s_.variant, s_.model_seed);
                else if (s_.model == "overlap_pair") g = ir::build_overlap_pair(s_.model_seed);
                else if (s_.model == "random_tiny") g = ir::build_random_tiny(s_.model_seed);
                else throw ValidationError("unknown model \"" + s_.model + "\"");
            }
            if (!s_.name.empty()) g.name = s_.name;
            g = ir::infer_shapes(g);
            ir::save_graph(g, out_.string(), "graph");
        });
    }

    void quantize() {
        stage("quantize", [&] {
            auto g = load_ir(art(s_.ir, "graph.json"));
            ir::save_graph(pipeline::quantize_random(g, s_.seed), out_.string(), "quant");
        });
    }

    void map(const arch::HardwareConfig& cfg) {
        stage("map", [&] {
            auto q = load_ir(art(s_.quant, "quant.json"));
            write_json(out_ / "plan.json", map::to_json(map::plan_mapping(q, cfg)));
        });
    }

    void schedule(const arch::HardwareConfig& cfg) {
        stage("schedule", [&] {
            auto p = map::plan_from_json(read_json(art(s_.plan, "plan.json")));
            write_json(out_ / "schedule.json", sched::to_json(sched::build_schedule(p, cfg, {.prefetch = !s_.no_prefetch})));
        });
    }

    void compile(const arch::HardwareConfig& cfg) {
        stage("compile", [&] {
            auto q = load_ir(art(s_.quant, "quant.json"));
            auto p = map::plan_from_json(read_json(art(s_.plan, "plan.json")));
            auto sc = sched::schedule_from_json(read_json(art(s_.schedule, "schedule.json")));
            auto c = codegen::emit_program(q, p, sc, cfg);
            auto in = s_.input.empty() ? pipeline::random_inputs(q, s_.seed) : load_values(s_.input);
            write_text(out_ / "program.asm", c.assembly());
            write_json(out_ / "program.manifest.json", c.manifest());
            save_values(in, out_ / "input.json");
            auto img = codegen::initial_image(c, in, cfg);
            img.to_container().save((out_ / "image.json").string(), (out_ / "image.bin").string());
        });
    }

    void simulate(const arch::HardwareConfig& cfg) {
        auto asm_path = art(s_.program, "program.asm");
        auto prog = stage("simulate", [&] {
            auto text = read_text(asm_path);
            try {
                return isa::assemble(text, cfg);
            } catch (const AssemblyError& e) {
                throw ValidationError(asm_path.string() + ": " + e.what());
            }
        });
        stage("simulate", [&] {
            auto img_path = art(s_.image, "image.json");
            need_file(img_path);
            auto init = sim::MemoryImage::from_container(ir::Container::load(img_path.string()));
            auto r = sim::run(prog, cfg, init, {.cycle_cap = s_.cycle_cap});
            write_json(out_ / "sim.json", sim::to_json(r.report));
            r.memory.to_container().save((out_ / "final.json").string(), (out_ / "final.bin").string());
            auto man = art(s_.manifest, "program.manifest.json");
            if (fs::exists(man)) save_values(codegen::read_outputs(codegen::Compiled::from_manifest(read_json(man)), r.memory), out_ / "outputs.json");
        });
    }

    void report(const arch::HardwareConfig& cfg) {
        stage("report", [&] {
            auto r = sim::report_from_json(read_json(art(s_.sim, "sim.json")));
            auto q = load_ir(art(s_.quant, "quant.json"));
            if (q.inputs.empty()) throw ValidationError("graph has no input");
            const auto& shape = q.tensor(q.inputs[0]).shape;
            std::string name = workload(q);
            std::string ref = s_.power_ref;
            if (ref.empty()) ref = name.find("v1") != std::string::npos ? "MobileNetV1" : "MobileNetV2";
            auto rep = metrics::make_report(name, ir::mac_count(q).total, static_cast<int>(shape[2]), static_cast<int>(shape[3]), r, cfg,
                                            metrics::reference_power_model(ref));
            write_json(out_ / "report.json", metrics::to_json(rep));
            write_text(out_ / "report.txt", metrics::to_text(rep));
        });
    }

    // Compares the simulated outputs with the integer oracle on the same input.
    void verify() {
        stage("verify", [&] {
            auto q = load_ir(out_ / "quant.json");
            auto in = load_values(out_ / "input.json");
            auto want = oracle::outputs_of(q, oracle::run_int(q, in));
            save_values(want, out_ / "oracle.json");
            auto got = load_values(out_ / "outputs.json");
            for (const auto& [name, t] : want) {
                auto it = got.find(name);
                if (it == got.end()) throw SimError("output " + name + " missing from outputs.json");
                if (!(it->second == t)) throw SimError("output " + name + " differs from the integer oracle");
            }
        });
    }

    void run_all() {
        auto cfg = config();
        import();
        // Later stages read what the previous one wrote.
        Settings chained = s_;
        chained.ir = chained.quant = chained.plan = chained.schedule = chained.program = chained.manifest = chained.image = chained.sim = "";
        Driver d(chained);
        d.quantize();
        d.map(cfg);
        d.schedule(cfg);
        d.compile(cfg);
        d.simulate(cfg);
        d.report(cfg);
        d.verify();
    }

private:
    Settings s_;
    fs::path out_;
};

void model_options(CLI::App* c, Settings& s) {
    c->add_option("source", s.source, "IR JSON file");
    c->add_option("--model", s.model, "Built-in workload")->check(CLI::IsMember({"mobilenet_v1", "mobilenet_v2", "tiny_cnn", "overlap_pair", "random_tiny"}));
    c->add_option("--alpha", s.alpha, "MobileNetV1 width multiplier");
    c->add_option("--size", s.size, "Input WIDTHxHEIGHT");
    c->add_option("--variant", s.variant, "tiny_cnn variant");
    c->add_option("--model-seed", s.model_seed, "Seed of the placeholder weights");
}

} // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Settings s;
    CLI::App app{"J3DAI accelerator toolchain: import, quantize, map, schedule, compile, simulate, report"};
    app.name(args.empty() ? "j3dai" : fs::path(args[0]).filename().string());
    app.require_subcommand(1, 1);
    app.add_option("--config", s.config, "Hardware configuration JSON");
    app.add_option("--out", s.out, "Artifact directory");
    app.add_option("--clock-hz", s.clock_hz, "Override the configured clock");
    app.add_option("--seed", s.seed, "Calibration and input sampling seed");
    app.add_option("--cycle-cap", s.cycle_cap, "Simulation watchdog, 0 disables");
    app.fallthrough();

    auto* imp = app.add_subcommand("import", "Load or build a graph and write graph.json");
    model_options(imp, s);
    imp->add_option("--name", s.name, "Workload name");
    auto* qz = app.add_subcommand("quantize", "Calibrate and quantize to quant.json");
    qz->add_option("--ir", s.ir, "Float IR (default <out>/graph.json)");
    auto* mp = app.add_subcommand("map", "Plan tiling and placement to plan.json");
    mp->add_option("--quant", s.quant, "Quantized IR (default <out>/quant.json)");
    auto* sc = app.add_subcommand("schedule", "Order steps and prefetches to schedule.json");
    sc->add_option("--plan", s.plan, "Mapping plan (default <out>/plan.json)");
    sc->add_flag("--no-prefetch", s.no_prefetch, "Serialize parameter loads");
    auto* cp = app.add_subcommand("compile", "Emit program.asm and the initial memory image");
    cp->add_option("--quant", s.quant, "Quantized IR");
    cp->add_option("--plan", s.plan, "Mapping plan");
    cp->add_option("--schedule", s.schedule, "Schedule");
    cp->add_option("--input", s.input, "Input container (default: random from --seed)");
    auto* sm = app.add_subcommand("simulate", "Run the program and write sim.json");
    sm->add_option("--program", s.program, "Assembly (default <out>/program.asm)");
    sm->add_option("--image", s.image, "Initial memory image (default <out>/image.json)");
    sm->add_option("--manifest", s.manifest, "Program manifest, for reading outputs back");
    auto* rp = app.add_subcommand("report", "Derive latency, efficiency and power figures");
    rp->add_option("--sim", s.sim, "Simulation report (default <out>/sim.json)");
    rp->add_option("--quant", s.quant, "Quantized IR (default <out>/quant.json)");
    rp->add_option("--name", s.name, "Workload name");
    rp->add_option("--power-ref", s.power_ref, "Reference power model")->check(CLI::IsMember({"MobileNetV1", "MobileNetV2"}));
    auto* ra = app.add_subcommand("run-all", "Every stage, then a bit-exact check against the integer oracle");
    model_options(ra, s);
    ra->add_option("--input", s.input, "Input container (default: random from --seed)");
    ra->add_flag("--no-prefetch", s.no_prefetch, "Serialize parameter loads");
    ra->add_option("--name", s.name, "Workload name");
    ra->add_option("--power-ref", s.power_ref, "Reference power model")->check(CLI::IsMember({"MobileNetV1", "MobileNetV2"}));

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        return kUsage;
    }

    Driver d(s);
    try {
        if (*imp) d.import();
        else if (*qz) d.quantize();
        else if (*mp) d.map(d.config());
        else if (*sc) d.schedule(d.config());
        else if (*cp) d.compile(d.config());
        else if (*sm) d.simulate(d.config());
        else if (*rp) d.report(d.config());
        else if (*ra) d.run_all();
    } catch (const StageFailure& f) {
        err << app.get_name() << ": " << f.stage << ": " << f.message << "\n";
        return f.code;
    }
    return kOk;
}

} // namespace j3dai::cli
