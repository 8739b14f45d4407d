#pragma once

#include <string>
#include <vector>

#include "ftl/fusion.hpp"
#include "ftl/sim.hpp"
#include "ftl/solver.hpp"

namespace ftl {

/// A solved partition of the network: groups, their tiling solutions and the
/// residency assignment they imply.
struct PlanResult {
  std::string mode; // "fused" or "baseline"
  Engine engine = Engine::cluster;
  std::vector<FusionGroup> groups;
  std::vector<TilingSolution> solutions;
  ResidencyResult residency;

  u64 peak_l1() const;
};

/// Select fusion groups, then solve each one, splitting any group whose
/// fused buffers cannot fit L1 (largest shared tensor first). Residency is
/// recomputed whenever the partition changes.
PlanResult plan_network(const NetworkGraph& graph, const HardwareConfig& hw,
                        const FusionPolicy& policy, Engine engine,
                        const std::string& mode_label = "fused");

struct SolvedPartition {
  std::vector<FusionGroup> groups;
  std::vector<TilingSolution> solutions;
  ResidencyResult residency;
};

/// Solve every group of a partition, splitting infeasible fused groups at
/// their largest shared tensor until all pieces solve. Throws
/// InfeasibleError when a singleton cannot fit L1.
SolvedPartition solve_partition(const NetworkGraph& graph,
                                const HardwareConfig& hw, Engine engine,
                                std::vector<FusionGroup> partition);

Schedule build_schedule(const NetworkGraph& graph, const PlanResult& plan,
                        const HardwareConfig& hw);

struct RunComparison {
  PlanResult baseline_plan;
  PlanResult fused_plan;
  SimReport baseline;
  SimReport fused;
  ComparisonReport cmp;
};

/// Plan and simulate both the requested policy and the layer-per-layer
/// baseline on the same graph/hardware/engine.
RunComparison run_comparison(const NetworkGraph& graph,
                             const HardwareConfig& hw,
                             const FusionPolicy& policy, Engine engine,
                             bool double_buffering);

} // namespace ftl
