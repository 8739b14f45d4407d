#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "ftl/graph.hpp"

namespace ftl {

enum class MemLevel { L1 = 0, L2 = 1, L3 = 2 };

std::string to_string(MemLevel m);

struct MemoryLevel {
  MemLevel name = MemLevel::L1;
  u64 capacity = 0;
  double read_bw = 0;  // bytes/cycle toward the adjacent lower level
  double write_bw = 0;
  bool is_offchip = false;
};

/// Unordered level pair identifying one DMA engine (L2<->L1, L3<->L1, L3<->L2).
struct LevelPair {
  MemLevel upper = MemLevel::L2; // farther from the compute engines
  MemLevel lower = MemLevel::L1;

  static LevelPair of(MemLevel a, MemLevel b);
  auto operator<=>(const LevelPair&) const = default;
};

std::string to_string(LevelPair p);

struct DmaModel {
  u64 setup_cycles = 0;
  u64 per_dim_overhead = 0; // extra cycles per transfer dimension beyond 1
  std::map<LevelPair, double> bytes_per_cycle;
};

enum class Engine { cluster, npu };

std::string to_string(Engine e);

/// Hard requirements a kernel implementation imposes on tile shapes.
struct KernelDescriptor {
  bool requires_full_reduction = false;
  u64 simd_width = 1;
  bool vectorized_n = false; // MultipleOf(simd_width) on the output N axis
};

/// Cost-model category: gemm and conv2d share the MAC-throughput form.
enum class KernelCat { gemm, conv2d, eltwise };

std::string to_string(KernelCat c);
KernelCat kernel_category(OpKind k);

struct KernelEntry {
  u64 macs_per_cycle = 0;  // gemm/conv2d
  u64 cycles_per_elem = 0; // eltwise
  KernelDescriptor desc;
};

struct ClusterParams {
  u64 num_cores = 1;
  u64 simd_width = 1;
  u64 min_tile_elems = 1;
};

struct HardwareConfig {
  std::string name;
  std::array<MemoryLevel, 3> levels{}; // indexed by MemLevel
  DmaModel dma;
  std::map<std::pair<KernelCat, Engine>, KernelEntry> kernels;
  ClusterParams cluster;

  u64 capacity(MemLevel m) const { return levels[static_cast<int>(m)].capacity; }
  const KernelEntry* kernel(KernelCat cat, Engine e) const;
  const KernelEntry& kernel_or_throw(KernelCat cat, Engine e) const;
  double pair_bandwidth(LevelPair p) const; // throws on unknown pair
};

/// Parse and validate a hardware config file (sections: levels, dma,
/// kernels, cluster; `version: 1`).
HardwareConfig load_hw_config(const std::string& text,
                              const std::string& source_name = "<hw>");

/// One DMA command: a 1..3-dimensional strided copy between two levels.
struct TransferDescriptor {
  u64 bytes = 0;
  int dims = 1;
  MemLevel src = MemLevel::L2;
  MemLevel dst = MemLevel::L1;

  LevelPair pair() const { return LevelPair::of(src, dst); }
};

/// cycles = setup + per_dim_overhead*(dims-1) + ceil(bytes / pair bandwidth)
u64 dma_cost(const HardwareConfig& hw, const TransferDescriptor& desc);

/// GEMM tile cost. On the cluster the M axis is split across num_cores and
/// a non-divisible M pays the usual ceil utilization penalty; the NPU is a
/// single engine with no split.
u64 gemm_kernel_cycles(const HardwareConfig& hw, Engine e, u64 m, u64 n, u64 k);

/// Conv2D tile cost: same form as GEMM with M=F, N=OH*OW, K=C*KH*KW.
u64 conv_kernel_cycles(const HardwareConfig& hw, Engine e, u64 f, u64 oh, u64 ow,
                       u64 c, u64 kh, u64 kw);

/// Elementwise tile cost: elems * cycles_per_elem (cluster only).
u64 eltwise_kernel_cycles(const HardwareConfig& hw, u64 elems);

/// Engine actually running a node under an engine selection: `npu` routes
/// gemm/conv2d to the NPU when the config has a descriptor for it;
/// elementwise always runs on the cluster.
Engine node_engine(const OperatorNode& node, const HardwareConfig& hw,
                   Engine selection);

} // namespace ftl
