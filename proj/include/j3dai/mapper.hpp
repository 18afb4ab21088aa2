#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "j3dai/arch.hpp"
#include "j3dai/ir.hpp"

namespace j3dai::map {

// How a layer is lowered onto the NCBs.
//   Conv       Conv2D (groups 1) and Dense; output channels on lanes, input byte broadcast
//   Depthwise  one channel per lane
//   AvgPool    AvgPool and GlobalAvgPool
//   Add, Clamp (standalone ReLU/ReLU6), MaxPool, Upsample
//   Copy       one operand of a Concat, requantized into its channel range
enum class Kernel { Conv, Depthwise, AvgPool, MaxPool, Add, Clamp, Upsample, Copy };

const char* kernel_name(Kernel k);
Kernel kernel_from(const std::string& s);

// Where the per-NCB regions go inside the SRAM.
//   Packed       back to back from offset 0
//   BankAligned  data packed from 0, each parameter buffer starting on its own bank
enum class Placement { Packed, BankAligned };

// One work item is an ht x wt block of output pixels times gt groups of
// pes_per_ncb output channels. Conv reduces over cc input channels per chunk.
struct Tile {
    int ht = 1;
    int wt = 1;
    int gt = 1;
    int cc = 1;
    bool double_buffer = false;
    Placement placement = Placement::Packed;

    auto operator<=>(const Tile&) const = default;
};

// Same offset in every NCB of every cluster.
struct SramRegion {
    std::string name; // in, in2, out, psum, buf0, buf1
    std::uint32_t offset = 0;
    std::uint32_t bytes = 0;
    bool operator==(const SramRegion&) const = default;
};

enum class TransferKind { Input, Input2, Params, Output };

const char* transfer_kind_name(TransferKind k);

// One DMPA instruction: a cluster moving `bytes` per enabled column.
struct Transfer {
    TransferKind kind = TransferKind::Input;
    int wave = 0;
    int cluster = 0;
    int block = -1;             // parameter block index within the item
    std::uint32_t columns = 0;  // NCB column mask
    std::uint64_t bytes = 0;    // per column
    std::uint64_t words = 0;    // DMPA engine cycles
    bool operator==(const Transfer&) const = default;
};

// NHWC extents and window attributes, copied from the graph.
struct Geometry {
    int in_h = 1, in_w = 1, in_c = 1;
    int out_h = 1, out_w = 1, out_c = 1;
    int kh = 1, kw = 1, sh = 1, sw = 1, ph = 0, pw = 0;
    int scale = 1;    // Upsample factor
    int c_offset = 0; // Copy: first output channel written
    bool operator==(const Geometry&) const = default;
};

struct LayerPlan {
    std::string layer;
    int part = 0; // Concat operand index
    Kernel kernel = Kernel::Conv;
    // ReLU/ReLU6 layers folded into this layer's requantization clamp.
    std::vector<std::string> fused;
    std::vector<std::string> inputs; // activation tensors read
    std::string output;              // activation tensor written
    Geometry geo;
    Tile tile;

    int groups = 1; // lane groups of the processed channels
    int items = 0;
    int waves = 0;
    int chunks = 1;
    std::vector<SramRegion> regions;
    std::vector<Transfer> transfers;

    std::uint64_t macs = 0;
    std::uint64_t param_offset = 0; // L2 address of the parameter blocks
    std::uint64_t param_bytes = 0;
    std::uint64_t est_cycles = 0;
    std::uint64_t bytes_moved = 0;

    const SramRegion* region(const std::string& name) const;
    bool operator==(const LayerPlan&) const = default;
};

struct HostTensor {
    std::string name;
    int h = 1, w = 1, c = 1;
    std::uint64_t bytes() const { return static_cast<std::uint64_t>(h) * w * c; }
    bool operator==(const HostTensor&) const = default;
};

struct MappingPlan {
    std::vector<LayerPlan> layers; // graph topological order
    std::vector<HostTensor> inputs;
    std::vector<HostTensor> outputs;
    std::uint64_t param_bytes = 0; // L2 [0, param_bytes) holds every parameter block
    std::uint64_t bytes_moved = 0;
    std::uint64_t est_cycles = 0;

    bool operator==(const MappingPlan&) const = default;
};

// Lexicographic: estimated cycles first, bytes moved second.
struct Objective {
    std::uint64_t cycles = 0;
    std::uint64_t bytes = 0;
    auto operator<=>(const Objective&) const = default;
};

Objective objective(const MappingPlan& p);

// Searches the tile lattice (for each extent N, the smallest tile reaching
// each tile count: ceil(N / n)) with every placement. Requires a quantized
// graph with resolved shapes and batch 1. Throws MappingError naming the
// layer when nothing fits.
MappingPlan plan_mapping(const ir::Graph& g, const arch::HardwareConfig& cfg);

// Exhaustive over every tile extent; throws MappingError when the candidate
// count exceeds `cap`.
MappingPlan brute_force_plan(const ir::Graph& g, const arch::HardwareConfig& cfg, std::uint64_t cap = 1'000'000);

// Builds a plan for fixed tiles (one per graph layer id; missing ids use the
// planner's choice). Throws MappingError if a given tile does not fit.
MappingPlan plan_with_tiles(const ir::Graph& g, const arch::HardwareConfig& cfg, const std::map<std::string, Tile>& tiles);

struct FitReport {
    std::vector<std::string> violations;
    std::vector<double> bank_occupancy_pct; // worst layer, per bank
    double pe_utilization_pct = 0;          // MAC-weighted share of useful lanes and NCBs
    bool ok() const { return violations.empty(); }
};

FitReport check_fit(const MappingPlan& p, const arch::HardwareConfig& cfg);

// Cycle model mirroring the generated code. `prefetched` drops the first
// parameter load of wave 0; `prefetch_words` adds the next layer's first
// parameter block, issued once this layer's last block is resident.
std::uint64_t layer_cycles(const LayerPlan& lp, const arch::HardwareConfig& cfg, bool prefetched = false, std::uint64_t prefetch_words = 0);

// Host input DMA, launch, every layer in plan order and host output DMA.
std::uint64_t estimate_cycles(const MappingPlan& p, const arch::HardwareConfig& cfg);

// MACs spread over `clusters` fully busy clusters with no overhead.
std::uint64_t ideal_compute_cycles(std::uint64_t macs, int clusters, const arch::HardwareConfig& cfg);

// Words of the first parameter block of wave 0, or 0 for kernels without parameters.
std::uint64_t first_block_words(const LayerPlan& lp, const arch::HardwareConfig& cfg);
// Byte size of parameter block `block` (item-local index).
std::uint64_t block_bytes(const LayerPlan& lp, int block, const arch::HardwareConfig& cfg);
int param_blocks(const LayerPlan& lp);
// Compute cycles of one item's block `block` (kernels without parameters: block 0 is the whole item).
std::uint64_t block_compute_cycles(const LayerPlan& lp, int block, const arch::HardwareConfig& cfg);

// Item geometry.
struct Item {
    int y0 = 0, x0 = 0; // first output pixel
    int g0 = 0;         // first lane group
};
Item item_at(const LayerPlan& lp, int index);
// Slot of an item inside its wave: cluster = slot % clusters, column = slot / clusters.
int item_cluster(const LayerPlan& lp, int index, const arch::HardwareConfig& cfg);
int item_column(const LayerPlan& lp, int index, const arch::HardwareConfig& cfg);

// L2 placement of activation tensors for an execution order (indices into
// MappingPlan::layers). First fit above the parameters; a tensor whose last
// reader is a single-wave step may share memory with that step's output.
struct ActivationBuffer {
    std::string tensor;
    std::uint64_t addr = 0;
    std::uint64_t bytes = 0;
    int first = -1; // order position of the first writer; -1 for graph inputs
    int last = 0;   // order position of the last access; order size for graph outputs
    bool operator==(const ActivationBuffer&) const = default;
};

struct ActivationLayout {
    std::vector<ActivationBuffer> buffers;
    std::uint64_t base = 0;
    std::uint64_t end = 0;  // first byte past every buffer
    std::vector<bool> alias; // per order position: output overlaps an input
    const ActivationBuffer* find(const std::string& tensor) const;
};

ActivationLayout allocate_activations(const MappingPlan& p, const std::vector<int>& order, const arch::HardwareConfig& cfg);

// A step whose inputs are all loaded before any output is stored.
bool may_alias(const LayerPlan& lp);

nlohmann::json to_json(const MappingPlan& p);
MappingPlan plan_from_json(const nlohmann::json& j);

} // namespace j3dai::map
