#pragma once

#include <map>
#include <string>

#include "j3dai/ir.hpp"

namespace j3dai::oracle {

// Every tensor value produced during a run, keyed by tensor name.
using Values = std::map<std::string, ir::Tensor>;

// Float reference. Sums run in row-major order (cin, ky, kx) so results are reproducible.
Values run_float(const ir::Graph& g, const Values& inputs);
Values run_float(const ir::Graph& g, const ir::Tensor& input);

// Exact integer reference over a quantized graph. An accumulator leaving the
// int32 range raises QuantError naming the layer.
Values run_int(const ir::Graph& g, const Values& inputs);
Values run_int(const ir::Graph& g, const ir::Tensor& input);

// Only the graph outputs of a run.
Values outputs_of(const ir::Graph& g, const Values& all);

} // namespace j3dai::oracle
