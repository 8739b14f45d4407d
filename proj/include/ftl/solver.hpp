#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftl/fusion.hpp"
#include "ftl/graph.hpp"
#include "ftl/hw.hpp"

namespace ftl {

/// Solver-side view of a bound problem. Variables are collapsed into
/// classes (shared-tensor bindings plus equality/unit-affine geometric
/// relations); non-unit affine links make a class's extent a derived
/// function of another class.
struct GroupLayout {
  struct VarClass {
    int rep = -1;                 // smallest member DimVar id
    std::vector<int> members;
    std::string label;            // rep var's tensor.axis@node
    u64 full = 0;
    std::optional<u64> fixed;     // Fixed() target, if any
    // extent = dep_scale * extents[dep_on] + dep_offset when dep_on >= 0
    int dep_on = -1;
    u64 dep_scale = 1;
    i64 dep_offset = 0;
  };

  /// extent along one tensor axis = scale * extents[cls] + offset
  struct AxisRef {
    int cls = -1;
    u64 scale = 1;
    i64 offset = 0;

    u64 eval(std::span<const u64> class_extents) const {
      return scale * class_extents[static_cast<size_t>(cls)] +
             static_cast<u64>(offset);
    }
  };

  struct TensorUse {
    std::string name;
    u64 elem_bytes = 1;
    bool loaded = false;   // external input, DMA'd per tile
    bool stored = false;   // leaves the group, DMA'd per tile
    bool internal = false; // lives only in L1 tile buffers
    std::vector<AxisRef> axes;
    std::vector<u64> full_extents;
  };

  struct NodeCompute {
    std::string node;
    OpKind kind = OpKind::eltwise_unary;
    Engine engine = Engine::cluster;
    // gemm: [M,N,K]; conv2d: [F,OH,OW,C,KH,KW]; eltwise: output axes
    std::vector<AxisRef> dims;
  };

  std::string owner;
  std::vector<VarClass> classes;
  std::vector<int> iter_axes; // class ids forming the tile grid, rep order
  std::vector<int> free_axes; // iter axes without a Fixed pin
  std::vector<TensorUse> tensors;
  std::vector<NodeCompute> computes;

  int class_of(int var_id) const { return var_to_class.at(var_id); }
  std::map<int, int> var_to_class;
};

GroupLayout build_group_layout(const BoundProblem& problem,
                               const NetworkGraph& graph,
                               const HardwareConfig& hw, Engine engine);

struct BufferPlan {
  struct Entry {
    std::string tensor;
    u64 bytes_per_tile = 0;
    int copies = 1; // 2 = double-buffered (DMA-transferred tensors)
    u64 offset = 0;
  };
  std::vector<Entry> entries;
  u64 total_bytes = 0;
};

/// Greedy first-fit at descending size. Returns nullopt when the plan
/// exceeds L1 capacity.
std::optional<BufferPlan> allocate_buffers(const GroupLayout& layout,
                                           std::span<const u64> class_extents,
                                           const HardwareConfig& hw);

struct TileGridAxis {
  int cls = -1;
  std::string label;
  u64 extent = 0;
  u64 num_tiles = 0;     // total tiles; the first num_tiles-1 are full
  u64 last_extent = 0;   // full_extent - (num_tiles-1)*extent
};

struct TilingSolution {
  std::string group_label;
  std::vector<std::string> nodes;
  Engine engine = Engine::cluster;

  std::vector<std::string> class_labels; // per class
  std::vector<u64> extents;              // per class, derived classes filled
  std::vector<TileGridAxis> grid;        // per iteration axis
  BufferPlan buffers;
  std::vector<std::string> relaxed; // violated soft constraints, described
  u64 objective_cycles = 0;

  std::shared_ptr<const GroupLayout> layout; // for schedule expansion
};

/// Search the candidate lattice (divisors of each full extent, multiples of
/// any MultipleOf factor on the class, and the full extent) for the
/// assignment minimizing the double-buffered schedule cycles. Soft
/// constraints are dropped lexicographically by priority (lowest first)
/// only when no feasible assignment retains them. Ties break toward larger
/// total tile volume, then the lexicographically smaller extents vector.
std::optional<TilingSolution> try_solve(const BoundProblem& problem,
                                        const NetworkGraph& graph,
                                        const HardwareConfig& hw,
                                        Engine engine);

/// As try_solve, but throws InfeasibleError when even the minimal tiles of
/// the fully relaxed problem exceed L1.
TilingSolution solve(const BoundProblem& problem, const NetworkGraph& graph,
                     const HardwareConfig& hw, Engine engine);

/// Serial exhaustive enumeration of the identical candidate lattice with the
/// identical objective and tie-break; the verification reference for solve.
/// Throws InfeasibleError when the lattice exceeds 10^5 assignments.
TilingSolution brute_force_solve(const BoundProblem& problem,
                                 const NetworkGraph& graph,
                                 const HardwareConfig& hw, Engine engine);

/// Solve a group, recursively splitting it at the largest shared tensor
/// while the fused problem does not fit L1. Singleton infeasibility
/// propagates as InfeasibleError.
std::pair<std::vector<FusionGroup>, std::vector<TilingSolution>>
solve_with_fallback(const FusionGroup& group, const NetworkGraph& graph,
                    const HardwareConfig& hw, Engine engine);

/// Candidate tile extents for a free class, ascending.
std::vector<u64> candidate_extents(u64 full, std::span<const u64> factors);

/// Number of assignments in the candidate lattice of a problem.
u64 lattice_size(const BoundProblem& problem, const NetworkGraph& graph,
                 const HardwareConfig& hw, Engine engine);

} // namespace ftl
