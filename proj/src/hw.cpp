#include "ftl/hw.hpp"

#include <cmath>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "ftl/errors.hpp"

namespace ftl {

namespace {

[[noreturn]] void fail(const std::string& source, const std::string& msg) {
  throw ParseError(source + ": " + msg);
}

u64 ceil_div(u64 a, u64 b) { return (a + b - 1) / b; }

MemLevel parse_level(const std::string& source, const std::string& s) {
  if (s == "L1") return MemLevel::L1;
  if (s == "L2") return MemLevel::L2;
  if (s == "L3") return MemLevel::L3;
  fail(source, "unknown memory level '" + s + "'");
}

Engine parse_engine_name(const std::string& source, const std::string& s) {
  if (s == "cluster") return Engine::cluster;
  if (s == "npu") return Engine::npu;
  fail(source, "unknown engine '" + s + "'");
}

KernelCat parse_cat(const std::string& source, const std::string& s) {
  if (s == "gemm") return KernelCat::gemm;
  if (s == "conv2d") return KernelCat::conv2d;
  if (s == "eltwise") return KernelCat::eltwise;
  fail(source, "unknown kernel op '" + s + "'");
}

} // namespace

std::string to_string(MemLevel m) {
  switch (m) {
    case MemLevel::L1: return "L1";
    case MemLevel::L2: return "L2";
    case MemLevel::L3: return "L3";
  }
  return "?";
}

std::string to_string(Engine e) {
  return e == Engine::cluster ? "cluster" : "npu";
}

std::string to_string(KernelCat c) {
  switch (c) {
    case KernelCat::gemm: return "gemm";
    case KernelCat::conv2d: return "conv2d";
    case KernelCat::eltwise: return "eltwise";
  }
  return "?";
}

KernelCat kernel_category(OpKind k) {
  switch (k) {
    case OpKind::gemm: return KernelCat::gemm;
    case OpKind::conv2d: return KernelCat::conv2d;
    case OpKind::eltwise_unary:
    case OpKind::eltwise_add: return KernelCat::eltwise;
  }
  return KernelCat::eltwise;
}

LevelPair LevelPair::of(MemLevel a, MemLevel b) {
  if (static_cast<int>(a) < static_cast<int>(b)) std::swap(a, b);
  return LevelPair{a, b};
}

std::string to_string(LevelPair p) {
  return to_string(p.upper) + "<->" + to_string(p.lower);
}

const KernelEntry* HardwareConfig::kernel(KernelCat cat, Engine e) const {
  auto it = kernels.find({cat, e});
  return it == kernels.end() ? nullptr : &it->second;
}

const KernelEntry& HardwareConfig::kernel_or_throw(KernelCat cat, Engine e) const {
  const KernelEntry* entry = kernel(cat, e);
  if (!entry)
    throw InfeasibleError("no kernel for (" + to_string(cat) + ", " +
                          to_string(e) + ") in hardware config '" + name + "'");
  return *entry;
}

double HardwareConfig::pair_bandwidth(LevelPair p) const {
  auto it = dma.bytes_per_cycle.find(p);
  if (it == dma.bytes_per_cycle.end())
    throw InfeasibleError("unknown DMA level pair " + to_string(p) +
                          " in hardware config '" + name + "'");
  return it->second;
}

HardwareConfig load_hw_config(const std::string& text, const std::string& source) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    fail(source, "syntax error at line " + std::to_string(e.mark.line + 1) +
                     ", column " + std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  try {
    if (!doc.IsMap()) fail(source, "hardware config must be a mapping");
    if (!doc["version"] || doc["version"].as<u64>() != 1)
      fail(source, "missing or unsupported 'version' (expected 1)");

    HardwareConfig hw;
    if (doc["name"]) hw.name = doc["name"].as<std::string>();

    const YAML::Node levels = doc["levels"];
    if (!levels || !levels.IsSequence() || levels.size() != 3)
      fail(source, "'levels' must list L1, L2 and L3");
    bool seen[3] = {false, false, false};
    for (const YAML::Node entry : levels) {
      MemoryLevel lvl;
      lvl.name = parse_level(source, entry["name"].as<std::string>());
      lvl.capacity = entry["capacity"].as<u64>();
      lvl.read_bw = entry["read_bw"].as<double>();
      lvl.write_bw = entry["write_bw"].as<double>();
      lvl.is_offchip = entry["is_offchip"] ? entry["is_offchip"].as<bool>() : false;
      if (lvl.capacity == 0)
        fail(source, "level " + to_string(lvl.name) + ": capacity must be > 0");
      if (lvl.read_bw <= 0 || lvl.write_bw <= 0)
        fail(source, "level " + to_string(lvl.name) + ": bandwidths must be > 0");
      int idx = static_cast<int>(lvl.name);
      if (seen[idx]) fail(source, "duplicate level " + to_string(lvl.name));
      seen[idx] = true;
      hw.levels[static_cast<size_t>(idx)] = lvl;
    }
    if (!(hw.capacity(MemLevel::L1) < hw.capacity(MemLevel::L2) &&
          hw.capacity(MemLevel::L2) < hw.capacity(MemLevel::L3)))
      fail(source, "capacity ordering violated: need L1 < L2 < L3");

    const YAML::Node dma = doc["dma"];
    if (!dma || !dma.IsMap()) fail(source, "missing 'dma' section");
    hw.dma.setup_cycles = dma["setup_cycles"].as<u64>();
    hw.dma.per_dim_overhead = dma["per_dim_overhead"].as<u64>();
    const YAML::Node pairs = dma["pairs"];
    if (!pairs || !pairs.IsSequence() || pairs.size() == 0)
      fail(source, "'dma.pairs' must list at least one level pair");
    for (const YAML::Node entry : pairs) {
      LevelPair p = LevelPair::of(parse_level(source, entry["src"].as<std::string>()),
                                  parse_level(source, entry["dst"].as<std::string>()));
      double bpc = entry["bytes_per_cycle"].as<double>();
      if (bpc <= 0) fail(source, "dma pair " + to_string(p) + ": bytes_per_cycle must be > 0");
      if (!hw.dma.bytes_per_cycle.emplace(p, bpc).second)
        fail(source, "duplicate dma pair " + to_string(p));
    }

    const YAML::Node kernels = doc["kernels"];
    if (!kernels || !kernels.IsSequence() || kernels.size() == 0)
      fail(source, "'kernels' must list at least one entry");
    for (const YAML::Node entry : kernels) {
      KernelCat cat = parse_cat(source, entry["op"].as<std::string>());
      Engine eng = parse_engine_name(source, entry["engine"].as<std::string>());
      KernelEntry k;
      if (cat == KernelCat::eltwise) {
        if (eng == Engine::npu)
          fail(source, "eltwise kernels run on the cluster only");
        k.cycles_per_elem = entry["cycles_per_elem"].as<u64>();
        if (k.cycles_per_elem == 0)
          fail(source, "eltwise cycles_per_elem must be > 0");
      } else {
        k.macs_per_cycle = entry["macs_per_cycle"].as<u64>();
        if (k.macs_per_cycle == 0)
          fail(source, to_string(cat) + " macs_per_cycle must be > 0");
      }
      if (entry["requires_full_reduction"])
        k.desc.requires_full_reduction = entry["requires_full_reduction"].as<bool>();
      if (entry["simd_width"]) {
        k.desc.simd_width = entry["simd_width"].as<u64>();
        if (k.desc.simd_width == 0) fail(source, "simd_width must be >= 1");
      }
      if (entry["vectorized_axis"]) {
        std::string ax = entry["vectorized_axis"].as<std::string>();
        if (ax != "n") fail(source, "vectorized_axis must be 'n'");
        k.desc.vectorized_n = true;
      }
      if (!hw.kernels.emplace(std::make_pair(cat, eng), k).second)
        fail(source, "duplicate kernel entry (" + to_string(cat) + ", " +
                         to_string(eng) + ")");
    }

    const YAML::Node cluster = doc["cluster"];
    if (!cluster || !cluster.IsMap()) fail(source, "missing 'cluster' section");
    hw.cluster.num_cores = cluster["num_cores"].as<u64>();
    hw.cluster.simd_width = cluster["simd_width"].as<u64>();
    hw.cluster.min_tile_elems = cluster["min_tile_elems"].as<u64>();
    if (hw.cluster.num_cores == 0 || hw.cluster.simd_width == 0 ||
        hw.cluster.min_tile_elems == 0)
      fail(source, "cluster parameters must be >= 1");

    return hw;
  } catch (const YAML::Exception& e) {
    fail(source, "invalid value at line " + std::to_string(e.mark.line + 1) +
                     ", column " + std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
}

u64 dma_cost(const HardwareConfig& hw, const TransferDescriptor& desc) {
  if (desc.dims < 1 || desc.dims > 3)
    throw InfeasibleError("transfer dims must be in 1..3");
  double bpc = hw.pair_bandwidth(desc.pair());
  u64 payload = static_cast<u64>(std::ceil(static_cast<double>(desc.bytes) / bpc));
  return hw.dma.setup_cycles +
         hw.dma.per_dim_overhead * static_cast<u64>(desc.dims - 1) + payload;
}

namespace {

// Cluster kernels split the leading output axis across num_cores; a
// non-divisible extent leaves cores idle in the last round, which is the
// usual ceil() utilization penalty. The NPU is one engine, no split.
u64 mac_kernel_cycles(const HardwareConfig& hw, const KernelEntry& k, Engine e,
                      u64 leading, u64 rest_macs) {
  if (e == Engine::cluster) {
    u64 rounds = ceil_div(leading, hw.cluster.num_cores);
    return ceil_div(rest_macs * rounds, k.macs_per_cycle);
  }
  return ceil_div(leading * rest_macs, k.macs_per_cycle);
}

} // namespace

u64 gemm_kernel_cycles(const HardwareConfig& hw, Engine e, u64 m, u64 n, u64 k) {
  const KernelEntry& entry = hw.kernel_or_throw(KernelCat::gemm, e);
  return mac_kernel_cycles(hw, entry, e, m, n * k);
}

u64 conv_kernel_cycles(const HardwareConfig& hw, Engine e, u64 f, u64 oh, u64 ow,
                       u64 c, u64 kh, u64 kw) {
  const KernelEntry& entry = hw.kernel_or_throw(KernelCat::conv2d, e);
  return mac_kernel_cycles(hw, entry, e, f, oh * ow * c * kh * kw);
}

u64 eltwise_kernel_cycles(const HardwareConfig& hw, u64 elems) {
  const KernelEntry& entry = hw.kernel_or_throw(KernelCat::eltwise, Engine::cluster);
  return elems * entry.cycles_per_elem;
}

Engine node_engine(const OperatorNode& node, const HardwareConfig& hw,
                   Engine selection) {
  if (selection == Engine::npu &&
      (node.kind == OpKind::gemm || node.kind == OpKind::conv2d) &&
      hw.kernel(kernel_category(node.kind), Engine::npu))
    return Engine::npu;
  return Engine::cluster;
}

} // namespace ftl
