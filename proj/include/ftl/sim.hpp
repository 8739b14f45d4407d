#pragma once

#include <map>
#include <string>
#include <vector>

#include "ftl/graph.hpp"
#include "ftl/hw.hpp"
#include "ftl/solver.hpp"

namespace ftl {

struct Transfer {
  std::string tensor;
  TransferDescriptor desc;
};

struct ComputeStep {
  std::string node;
  OpKind kind = OpKind::eltwise_unary;
  Engine engine = Engine::cluster;
  // gemm: [M,N,K]; conv2d: [F,OH,OW,C,KH,KW]; eltwise: [elems]
  std::vector<u64> dims;
};

u64 kernel_step_cycles(const HardwareConfig& hw, const ComputeStep& step);

struct TileIteration {
  std::vector<u64> index; // per iteration axis
  std::vector<Transfer> loads;
  std::vector<ComputeStep> computes; // group order
  std::vector<Transfer> stores;
};

struct SpillEvent {
  std::string tensor;
  u64 bytes = 0;
  MemLevel placed = MemLevel::L3;
};

/// Where every group-external tensor lives, plus the L2/L3 pressure that
/// placement creates. Inputs, weights and model outputs are placed greedily
/// at the lowest level that fits, in declaration order. Intermediates that
/// cross a group boundary are materialized in schedule order and freed after
/// their last consumer; one that only fits in L3 records a spill event.
struct ResidencyResult {
  std::map<std::string, MemLevel> level;
  std::vector<SpillEvent> spills;
  u64 peak_l2 = 0;
  u64 peak_l3 = 0;
};

ResidencyResult assign_residency(const NetworkGraph& graph,
                                 const std::vector<FusionGroup>& groups,
                                 const HardwareConfig& hw);

/// One fusion group expanded over its tile grid. Each segment runs as its
/// own double-buffer pipeline; segments execute back to back.
struct ScheduleSegment {
  std::string group_label;
  std::vector<std::string> nodes;
  u64 l1_bytes = 0; // buffer plan footprint
  std::vector<TileIteration> iterations;
};

struct Schedule {
  std::string mode; // "fused" or "baseline"
  std::vector<ScheduleSegment> segments;
  ResidencyResult residency;
};

/// Expand solved groups into per-tile loads/computes/stores. Group-internal
/// tensors appear in no load or store list.
Schedule build_schedule(const NetworkGraph& graph,
                        const std::vector<FusionGroup>& groups,
                        const std::vector<TilingSolution>& solutions,
                        const ResidencyResult& residency,
                        const HardwareConfig& hw, const std::string& mode);

struct SimReport {
  std::string mode;
  Engine engine = Engine::cluster;
  bool double_buffering = true;

  u64 total_cycles = 0;
  u64 dma_transfer_count = 0;
  std::map<LevelPair, u64> bytes_moved;
  std::map<std::string, u64> per_tensor_bytes;
  u64 peak_usage[3] = {0, 0, 0}; // indexed by MemLevel
  u64 dma_bound_cycles = 0;
  u64 compute_bound_cycles = 0;
  std::vector<SpillEvent> spill_events;

  u64 bytes_on(LevelPair p) const {
    auto it = bytes_moved.find(p);
    return it == bytes_moved.end() ? 0 : it->second;
  }
};

/// Without double buffering each tile costs load + compute + store. With it,
/// tile i+1's load and tile i-1's store overlap tile i's compute:
///   total = L0 + sum_{i=1..n-1} max(C_{i-1}, L_i + S_{i-2}) + C_{n-1}
///           + S_{n-2} + S_{n-1}
SimReport simulate(const Schedule& schedule, const HardwareConfig& hw,
                   bool double_buffering);

struct ComparisonReport {
  u64 baseline_cycles = 0;
  u64 fused_cycles = 0;
  double runtime_reduction_pct = 0;
  u64 baseline_transfers = 0;
  u64 fused_transfers = 0;
  double transfer_reduction_pct = 0;
  std::map<LevelPair, i64> bytes_delta; // fused - baseline
};

ComparisonReport compare(const SimReport& baseline, const SimReport& fused);

/// Streaming evaluation of one group's schedule cycles: identical per-tile
/// costs and pipeline recurrence as build_schedule + simulate, without
/// materializing iterations. This is the solver objective.
u64 group_schedule_cycles(const GroupLayout& layout,
                          std::span<const u64> class_extents,
                          const std::map<std::string, MemLevel>& residency,
                          const HardwareConfig& hw, bool double_buffering);

} // namespace ftl
