// Regenerates tests/fixtures: float IR, a fixed input and the integer-oracle
// output for the tiny CNN, plus the two-layer overlap graph and the default config.
#include <filesystem>
#include <iostream>

#include "j3dai/arch.hpp"
#include "j3dai/oracle.hpp"
#include "j3dai/pipeline.hpp"

using namespace j3dai;

namespace {

void save_values(const oracle::Values& v, const std::filesystem::path& dir, const std::string& stem) {
    ir::Container c;
    c.tensors = v;
    c.save((dir / (stem + ".json")).string(), (dir / (stem + ".bin")).string());
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixtures <dir>\n";
        return 2;
    }
    std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);

    auto tiny = ir::infer_shapes(ir::build_tiny_cnn(0));
    ir::save_graph(tiny, dir.string(), "tiny_cnn");
    // Same seed the CLI defaults to for calibration and inputs.
    auto q = pipeline::quantize_random(tiny, 1);
    auto in = pipeline::random_inputs(q, 1);
    save_values(in, dir, "tiny_cnn.input");
    save_values(oracle::outputs_of(q, oracle::run_int(q, in)), dir, "tiny_cnn.oracle");

    ir::save_graph(ir::infer_shapes(ir::build_overlap_pair()), dir.string(), "overlap_pair");
    arch::save_config(arch::j3dai_default(), (dir / "j3dai_default.json").string());
    return 0;
}
