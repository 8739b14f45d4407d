#include "ftl/pipeline.hpp"

#include <algorithm>

#include "ftl/errors.hpp"

namespace ftl {

u64 PlanResult::peak_l1() const {
  u64 peak = 0;
  for (const TilingSolution& s : solutions)
    peak = std::max(peak, s.buffers.total_bytes);
  return peak;
}

namespace {

// Split before/after the edge with the largest shared tensor; releasing the
// biggest internal tile relieves the most L1 pressure.
std::pair<FusionGroup, FusionGroup> split_group(const FusionGroup& g,
                                                const NetworkGraph& graph) {
  size_t best = 0;
  u64 best_bytes = 0;
  for (size_t i = 0; i < g.shared.size(); ++i) {
    u64 b = tensor_bytes(graph.tensor(g.shared[i].tensor));
    if (b > best_bytes) {
      best_bytes = b;
      best = i;
    }
  }
  FusionGroup left, right;
  left.nodes.assign(g.nodes.begin(), g.nodes.begin() + static_cast<long>(best) + 1);
  left.shared.assign(g.shared.begin(), g.shared.begin() + static_cast<long>(best));
  right.nodes.assign(g.nodes.begin() + static_cast<long>(best) + 1, g.nodes.end());
  right.shared.assign(g.shared.begin() + static_cast<long>(best) + 1,
                      g.shared.end());
  return {left, right};
}

} // namespace

SolvedPartition solve_partition(const NetworkGraph& graph,
                                const HardwareConfig& hw, Engine engine,
                                std::vector<FusionGroup> partition) {
  for (;;) {
    ResidencyResult res = assign_residency(graph, partition, hw);
    std::vector<TilingSolution> solutions;
    solutions.reserve(partition.size());
    bool restart = false;
    for (size_t gi = 0; gi < partition.size(); ++gi) {
      BoundProblem problem = bind_group(partition[gi], graph, hw, engine);
      problem.residency = res.level;
      auto sol = try_solve(problem, graph, hw, engine);
      if (sol) {
        solutions.push_back(std::move(*sol));
        continue;
      }
      if (partition[gi].nodes.size() == 1)
        solve(problem, graph, hw, engine); // throws with the diagnostic
      auto [left, right] = split_group(partition[gi], graph);
      partition[gi] = left;
      partition.insert(partition.begin() + static_cast<long>(gi) + 1, right);
      restart = true;
      break;
    }
    if (!restart) return {std::move(partition), std::move(solutions), std::move(res)};
  }
}

PlanResult plan_network(const NetworkGraph& graph, const HardwareConfig& hw,
                        const FusionPolicy& policy, Engine engine,
                        const std::string& mode_label) {
  SolvedPartition solved =
      solve_partition(graph, hw, engine, select_fusion_groups(graph, policy));
  PlanResult plan;
  plan.mode = mode_label;
  plan.engine = engine;
  plan.groups = std::move(solved.groups);
  plan.solutions = std::move(solved.solutions);
  plan.residency = std::move(solved.residency);
  return plan;
}

Schedule build_schedule(const NetworkGraph& graph, const PlanResult& plan,
                        const HardwareConfig& hw) {
  return build_schedule(graph, plan.groups, plan.solutions, plan.residency, hw,
                        plan.mode);
}

RunComparison run_comparison(const NetworkGraph& graph,
                             const HardwareConfig& hw,
                             const FusionPolicy& policy, Engine engine,
                             bool double_buffering) {
  RunComparison run;
  run.baseline_plan = plan_network(graph, hw, FusionPolicy::none_policy(),
                                   engine, "baseline");
  run.fused_plan = plan_network(graph, hw, policy, engine, "fused");
  Schedule baseline_sched = build_schedule(graph, run.baseline_plan, hw);
  Schedule fused_sched = build_schedule(graph, run.fused_plan, hw);
  run.baseline = simulate(baseline_sched, hw, double_buffering);
  run.fused = simulate(fused_sched, hw, double_buffering);
  run.baseline.engine = engine;
  run.fused.engine = engine;
  run.cmp = compare(run.baseline, run.fused);
  return run;
}

} // namespace ftl
