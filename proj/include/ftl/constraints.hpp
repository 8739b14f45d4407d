#pragma once

#include <span>
#include <string>
#include <vector>

#include "ftl/graph.hpp"
#include "ftl/hw.hpp"

namespace ftl {

/// One tiling variable: the tile extent chosen along one axis of one tensor
/// as seen by one operator occurrence. Domain is [1, full_extent].
struct DimVar {
  int id = -1;
  std::string node;   // operator occurrence
  std::string tensor;
  std::string axis;
  u64 full_extent = 0;

  std::string label() const { return tensor + "." + axis + "@" + node; }
};

/// input tile extent = scale * (output tile extent) + offset.
/// Elementwise/GEMM links are (1,0); conv spatial links are
/// (stride, kernel-stride), the halo overlap.
struct AffineLink {
  int input_var = -1;
  int output_var = -1;
  u64 scale = 1;
  i64 offset = 0;

  u64 eval(u64 output_extent) const {
    return scale * output_extent + static_cast<u64>(offset);
  }
};

enum class ConstraintClass { geometric, kernel_policy, performance };

struct Constraint {
  enum class Kind { link, equal, fixed, multiple_of, min_value };

  Kind kind = Kind::equal;
  ConstraintClass cls = ConstraintClass::geometric;
  int priority = 0; // performance only; lower priority is relaxed first

  AffineLink link; // kind == link
  int a = -1;      // equal: (a,b); fixed/multiple_of/min_value: var a
  int b = -1;
  u64 value = 0;   // fixed target / divisor / minimum

  bool is_soft() const { return cls == ConstraintClass::performance; }
  std::string describe(std::span<const DimVar> vars) const;
};

struct ConstraintSet {
  std::string owner; // operator or fusion-group name
  std::vector<DimVar> vars;
  std::vector<Constraint> constraints;
};

/// Hands out problem-unique DimVar ids.
class VarAllocator {
public:
  int next() { return next_++; }

private:
  int next_ = 0;
};

/// One DimVar per (tensor, axis) pair touched by the node, inputs first
/// then outputs, axes in declaration order.
std::vector<DimVar> attribute_vars(const OperatorNode& node,
                                   const NetworkGraph& graph,
                                   VarAllocator& alloc);

/// Position of the var for operand `operand_pos` (inputs then outputs),
/// axis `axis_idx`, within the attribute_vars order.
int var_position(const OperatorNode& node, const NetworkGraph& graph,
                 int operand_pos, int axis_idx);

/// Hard data-dependency constraints between output and input tile extents.
std::vector<Constraint> emit_geometric(const OperatorNode& node,
                                       const NetworkGraph& graph,
                                       std::span<const DimVar> vars);

/// Hard constraints from the kernel's dataflow (full reduction axis,
/// vector-width alignment).
std::vector<Constraint> emit_kernel_policy(const OperatorNode& node,
                                           const NetworkGraph& graph,
                                           const KernelDescriptor& kernel,
                                           std::span<const DimVar> vars);

/// Soft constraints that improve utilization: priority 1 divisibility of the
/// parallel axis by num_cores (relaxed first), priority 2 minimum output
/// row-tile size (DMA setup amortization).
std::vector<Constraint> emit_performance(const OperatorNode& node,
                                         const NetworkGraph& graph,
                                         const HardwareConfig& hw,
                                         std::span<const DimVar> vars);

/// All three classes for one node on one engine.
ConstraintSet emit_node_constraints(const OperatorNode& node,
                                    const NetworkGraph& graph,
                                    const HardwareConfig& hw, Engine engine,
                                    VarAllocator& alloc);

} // namespace ftl
