#pragma once

#include <map>
#include <string>
#include <vector>

#include "ftl/constraints.hpp"
#include "ftl/graph.hpp"

namespace ftl {

/// A chain of operators executed tile-by-tile as one unit. Adjacent members
/// share exactly one tensor, produced by the earlier node and consumed only
/// by the later one. A length-1 group is an unfused layer.
struct FusionGroup {
  std::vector<std::string> nodes;

  struct SharedEdge {
    std::string tensor;
    int producer_output = 0;
    int consumer_input = 0;
  };
  std::vector<SharedEdge> shared; // one per adjacent pair

  std::string label() const;
};

struct FusionPolicy {
  enum class Mode { automatic, none, explicit_chains };
  Mode mode = Mode::automatic;
  std::vector<std::vector<std::string>> chains; // explicit_chains only

  static FusionPolicy auto_policy() { return {Mode::automatic, {}}; }
  static FusionPolicy none_policy() { return {Mode::none, {}}; }
};

/// Partition the graph into fusion groups. `automatic` greedily grows
/// maximal chains over single-consumer producer->consumer edges; `none`
/// yields singletons; explicit chains are validated (consecutive,
/// single-consumer shared tensors, no node in two groups) and all other
/// nodes become singletons. Groups are returned in topological order.
std::vector<FusionGroup> select_fusion_groups(const NetworkGraph& graph,
                                              const FusionPolicy& policy);

/// Disjoint-set over DimVar ids.
class VarUnion {
public:
  void ensure(int id);
  int find(int id) const;
  void unite(int a, int b);
  bool same(int a, int b) const;

private:
  mutable std::vector<int> parent_;
};

/// The fused constraint problem: per-node variables and constraints merged,
/// with the shared-tensor dimension variables unified.
struct BoundProblem {
  FusionGroup group;
  std::vector<DimVar> vars;            // all member vars, id-ordered
  std::vector<Constraint> constraints; // concatenated member constraints
  VarUnion binding;                    // shared-tensor unifications only
  std::vector<std::vector<int>> node_vars;   // per member: var ids, attribute order
  std::vector<std::string> internal_tensors; // never DMA-transferred

  // Where each external tensor lives (filled by the planning pipeline;
  // tile transfers for this group move between that level and L1).
  std::map<std::string, MemLevel> residency;

  const DimVar& var(int id) const { return vars.at(static_cast<size_t>(id)); }
};

/// Unify producer-output and consumer-input variables of every shared
/// tensor, axis by axis. Throws InfeasibleError on axis-count mismatch.
BoundProblem bind_shared_dims(const FusionGroup& group,
                              const std::vector<ConstraintSet>& per_node,
                              const NetworkGraph& graph);

/// Convenience: attribute vars, emit all constraint classes for each member
/// node on its resolved engine, and bind. Residency is left empty.
BoundProblem bind_group(const FusionGroup& group, const NetworkGraph& graph,
                        const HardwareConfig& hw, Engine engine);

} // namespace ftl
