#include "ftl/sim.hpp"

#include <algorithm>
#include <cassert>
#include <set>

#include "ftl/errors.hpp"

namespace ftl {

namespace {

u64 ceil_div(u64 a, u64 b) { return (a + b - 1) / b; }

struct GridInfo {
  std::vector<int> cls;
  std::vector<u64> extent, num, last;
  u64 total_tiles = 1;
};

GridInfo make_grid(const GroupLayout& layout, std::span<const u64> extents) {
  GridInfo g;
  for (int c : layout.iter_axes) {
    u64 full = layout.classes[static_cast<size_t>(c)].full;
    u64 e = extents[static_cast<size_t>(c)];
    assert(e >= 1 && e <= full);
    u64 n = ceil_div(full, e);
    g.cls.push_back(c);
    g.extent.push_back(e);
    g.num.push_back(n);
    g.last.push_back(full - (n - 1) * e);
    g.total_tiles *= n;
  }
  return g;
}

// Class extents of the tile at a residual mask (bit a set = iteration axis a
// sits on its clamped final tile).
std::vector<u64> extents_at_mask(const GroupLayout& layout, const GridInfo& g,
                                 unsigned mask) {
  std::vector<u64> ext(layout.classes.size(), 0);
  for (size_t a = 0; a < g.cls.size(); ++a)
    ext[static_cast<size_t>(g.cls[a])] =
        (mask >> a & 1u) ? g.last[a] : g.extent[a];
  for (size_t i = 0; i < layout.classes.size(); ++i) {
    const GroupLayout::VarClass& cls = layout.classes[i];
    if (cls.dep_on >= 0)
      ext[i] = cls.dep_scale * ext[static_cast<size_t>(cls.dep_on)] +
               static_cast<u64>(cls.dep_offset);
  }
  return ext;
}

u64 tensor_tile_bytes(const GroupLayout::TensorUse& t,
                      std::span<const u64> class_extents) {
  u64 bytes = t.elem_bytes;
  for (const GroupLayout::AxisRef& a : t.axes) bytes *= a.eval(class_extents);
  return bytes;
}

// A tile is one strided command: trailing axes covered in full collapse into
// the contiguous innermost dimension; every remaining axis adds one.
int transfer_dims(const GroupLayout::TensorUse& t,
                  std::span<const u64> class_extents) {
  size_t d = t.axes.size();
  size_t suffix = 0;
  while (suffix < d &&
         t.axes[d - 1 - suffix].eval(class_extents) == t.full_extents[d - 1 - suffix])
    ++suffix;
  int dims = static_cast<int>(d - suffix);
  return std::min(3, std::max(1, dims));
}

u64 compute_cost(const HardwareConfig& hw, const GroupLayout::NodeCompute& nc,
                 std::span<const u64> class_extents) {
  auto dim = [&](size_t i) { return nc.dims[i].eval(class_extents); };
  switch (nc.kind) {
    case OpKind::gemm:
      return gemm_kernel_cycles(hw, nc.engine, dim(0), dim(1), dim(2));
    case OpKind::conv2d:
      return conv_kernel_cycles(hw, nc.engine, dim(0), dim(1), dim(2), dim(3),
                                dim(4), dim(5));
    case OpKind::eltwise_unary:
    case OpKind::eltwise_add: {
      u64 elems = 1;
      for (size_t i = 0; i < nc.dims.size(); ++i) elems *= dim(i);
      return eltwise_kernel_cycles(hw, elems);
    }
  }
  return 0;
}

struct PhaseCost {
  u64 load = 0, compute = 0, store = 0;
};

MemLevel residency_of(const std::map<std::string, MemLevel>& residency,
                      const std::string& tensor) {
  auto it = residency.find(tensor);
  if (it == residency.end())
    throw InfeasibleError("no residency assigned for tensor '" + tensor + "'");
  return it->second;
}

PhaseCost combo_cost(const GroupLayout& layout,
                     std::span<const u64> class_extents,
                     const std::map<std::string, MemLevel>& residency,
                     const HardwareConfig& hw) {
  PhaseCost pc;
  for (const GroupLayout::TensorUse& t : layout.tensors) {
    if (t.internal) continue;
    TransferDescriptor desc;
    desc.bytes = tensor_tile_bytes(t, class_extents);
    desc.dims = transfer_dims(t, class_extents);
    MemLevel level = residency_of(residency, t.name);
    if (t.loaded) {
      desc.src = level;
      desc.dst = MemLevel::L1;
      pc.load += dma_cost(hw, desc);
    } else if (t.stored) {
      desc.src = MemLevel::L1;
      desc.dst = level;
      pc.store += dma_cost(hw, desc);
    }
  }
  for (const GroupLayout::NodeCompute& nc : layout.computes)
    pc.compute += compute_cost(hw, nc, class_extents);
  return pc;
}

struct PipelineTotals {
  u64 total = 0, dma = 0, comp = 0;
};

// Double-buffer recurrence: tile i+1's load and tile i-1's store overlap
// tile i's compute. `at` is called once per tile, in order.
template <typename CostAt>
PipelineTotals run_pipeline(u64 n, bool double_buffering, CostAt&& at) {
  PipelineTotals r;
  if (n == 0) return r;
  if (!double_buffering) {
    for (u64 i = 0; i < n; ++i) {
      PhaseCost c = at(i);
      r.total += c.load + c.compute + c.store;
      r.dma += c.load + c.store;
      r.comp += c.compute;
    }
    return r;
  }
  PhaseCost prev, prev2;
  for (u64 i = 0; i < n; ++i) {
    PhaseCost cur = at(i);
    if (i == 0) {
      r.total += cur.load;
      r.dma += cur.load;
    } else {
      u64 dma_side = cur.load + (i >= 2 ? prev2.store : 0);
      u64 slot = std::max(prev.compute, dma_side);
      r.total += slot;
      if (dma_side > prev.compute)
        r.dma += slot;
      else
        r.comp += slot;
    }
    prev2 = prev;
    prev = cur;
  }
  r.total += prev.compute;
  r.comp += prev.compute;
  if (n >= 2) {
    r.total += prev2.store;
    r.dma += prev2.store;
  }
  r.total += prev.store;
  r.dma += prev.store;
  return r;
}

// Sequential walk over a grid, computing the residual mask per position.
template <typename Visit>
void walk_grid(const GridInfo& g, Visit&& visit) {
  size_t naxes = g.cls.size();
  std::vector<u64> idx(naxes, 0);
  for (u64 i = 0; i < g.total_tiles; ++i) {
    unsigned mask = 0;
    for (size_t a = 0; a < naxes; ++a)
      if (idx[a] == g.num[a] - 1 && g.last[a] != g.extent[a])
        mask |= 1u << a;
    visit(i, idx, mask);
    for (size_t a = naxes; a-- > 0;) {
      if (++idx[a] < g.num[a]) break;
      idx[a] = 0;
    }
  }
}

} // namespace

u64 kernel_step_cycles(const HardwareConfig& hw, const ComputeStep& step) {
  switch (step.kind) {
    case OpKind::gemm:
      return gemm_kernel_cycles(hw, step.engine, step.dims[0], step.dims[1],
                                step.dims[2]);
    case OpKind::conv2d:
      return conv_kernel_cycles(hw, step.engine, step.dims[0], step.dims[1],
                                step.dims[2], step.dims[3], step.dims[4],
                                step.dims[5]);
    case OpKind::eltwise_unary:
    case OpKind::eltwise_add:
      return eltwise_kernel_cycles(hw, step.dims[0]);
  }
  return 0;
}

u64 group_schedule_cycles(const GroupLayout& layout,
                          std::span<const u64> class_extents,
                          const std::map<std::string, MemLevel>& residency,
                          const HardwareConfig& hw, bool double_buffering) {
  GridInfo g = make_grid(layout, class_extents);
  size_t naxes = g.cls.size();
  std::vector<PhaseCost> cache(size_t{1} << naxes);
  std::vector<bool> have(size_t{1} << naxes, false);

  std::vector<u64> idx(naxes, 0);
  auto at = [&](u64) {
    unsigned mask = 0;
    for (size_t a = 0; a < naxes; ++a)
      if (idx[a] == g.num[a] - 1 && g.last[a] != g.extent[a])
        mask |= 1u << a;
    if (!have[mask]) {
      cache[mask] =
          combo_cost(layout, extents_at_mask(layout, g, mask), residency, hw);
      have[mask] = true;
    }
    for (size_t a = naxes; a-- > 0;) {
      if (++idx[a] < g.num[a]) break;
      idx[a] = 0;
    }
    return cache[mask];
  };
  return run_pipeline(g.total_tiles, double_buffering, at).total;
}

ResidencyResult assign_residency(const NetworkGraph& graph,
                                 const std::vector<FusionGroup>& groups,
                                 const HardwareConfig& hw) {
  ResidencyResult res;
  u64 l2_used = 0, l3_used = 0;
  u64 l2_cap = hw.capacity(MemLevel::L2), l3_cap = hw.capacity(MemLevel::L3);

  auto place = [&](const TensorSpec& t, bool record_spill) {
    u64 b = tensor_bytes(t);
    if (l2_used + b <= l2_cap) {
      res.level[t.name] = MemLevel::L2;
      l2_used += b;
    } else if (l3_used + b <= l3_cap) {
      res.level[t.name] = MemLevel::L3;
      l3_used += b;
      if (record_spill) res.spills.push_back({t.name, b, MemLevel::L3});
    } else {
      throw InfeasibleError("no memory level can hold tensor '" + t.name +
                            "' (" + std::to_string(b) + " bytes)");
    }
    res.peak_l2 = std::max(res.peak_l2, l2_used);
    res.peak_l3 = std::max(res.peak_l3, l3_used);
  };

  // Inputs, weights and model outputs persist for the whole run.
  for (const TensorSpec& t : graph.tensors)
    if (t.kind != TensorKind::intermediate) place(t, false);

  // Intermediates that cross a group boundary are materialized while live.
  std::map<std::string, int> node_group;
  for (size_t gi = 0; gi < groups.size(); ++gi)
    for (const std::string& n : groups[gi].nodes)
      node_group[n] = static_cast<int>(gi);

  struct Live {
    std::string tensor;
    int produced = 0;
    int last_use = 0;
  };
  std::vector<Live> crossing;
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    std::set<std::string> members(groups[gi].nodes.begin(), groups[gi].nodes.end());
    for (const std::string& node_name : groups[gi].nodes) {
      for (const std::string& tname : graph.node(node_name).outputs) {
        const TensorSpec& t = graph.tensor(tname);
        if (t.kind != TensorKind::intermediate) continue;
        const std::vector<int>& uses = graph.consumers(tname);
        bool inside = !uses.empty();
        int last = static_cast<int>(gi);
        for (int c : uses) {
          int cg = node_group.at(graph.nodes[static_cast<size_t>(c)].name);
          if (cg != static_cast<int>(gi)) inside = false;
          last = std::max(last, cg);
        }
        if (inside) continue; // fused away, never materialized
        crossing.push_back({tname, static_cast<int>(gi), last});
      }
    }
  }

  for (size_t gi = 0; gi < groups.size(); ++gi) {
    for (const Live& lv : crossing)
      if (lv.produced == static_cast<int>(gi))
        place(graph.tensor(lv.tensor), true);
    for (const Live& lv : crossing)
      if (lv.last_use == static_cast<int>(gi)) {
        u64 b = tensor_bytes(graph.tensor(lv.tensor));
        if (res.level.at(lv.tensor) == MemLevel::L2)
          l2_used -= b;
        else
          l3_used -= b;
      }
  }
  return res;
}

Schedule build_schedule(const NetworkGraph& graph,
                        const std::vector<FusionGroup>& groups,
                        const std::vector<TilingSolution>& solutions,
                        const ResidencyResult& residency,
                        const HardwareConfig& hw, const std::string& mode) {
  if (groups.size() != solutions.size())
    throw InfeasibleError("build_schedule: one solution per group required");
  Schedule sched;
  sched.mode = mode;
  sched.residency = residency;

  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const TilingSolution& sol = solutions[gi];
    const GroupLayout& layout = *sol.layout;
    ScheduleSegment seg;
    seg.group_label = sol.group_label;
    seg.nodes = sol.nodes;
    seg.l1_bytes = sol.buffers.total_bytes;

    GridInfo g = make_grid(layout, sol.extents);
    seg.iterations.reserve(g.total_tiles);
    size_t ncombos = size_t{1} << g.cls.size();
    std::vector<std::vector<u64>> combo_ext(ncombos);
    std::vector<bool> have(ncombos, false);

    walk_grid(g, [&](u64, const std::vector<u64>& idx, unsigned mask) {
      if (!have[mask]) {
        combo_ext[mask] = extents_at_mask(layout, g, mask);
        have[mask] = true;
      }
      const std::vector<u64>& ext = combo_ext[mask];
      TileIteration it;
      it.index = idx;
      for (const GroupLayout::TensorUse& t : layout.tensors) {
        if (t.internal) continue;
        TransferDescriptor desc;
        desc.bytes = tensor_tile_bytes(t, ext);
        desc.dims = transfer_dims(t, ext);
        MemLevel level = residency_of(residency.level, t.name);
        if (t.loaded) {
          desc.src = level;
          desc.dst = MemLevel::L1;
          it.loads.push_back({t.name, desc});
        } else if (t.stored) {
          desc.src = MemLevel::L1;
          desc.dst = level;
          it.stores.push_back({t.name, desc});
        }
      }
      for (const GroupLayout::NodeCompute& nc : layout.computes) {
        ComputeStep step;
        step.node = nc.node;
        step.kind = nc.kind;
        step.engine = nc.engine;
        if (nc.kind == OpKind::eltwise_unary || nc.kind == OpKind::eltwise_add) {
          u64 elems = 1;
          for (const GroupLayout::AxisRef& d : nc.dims) elems *= d.eval(ext);
          step.dims = {elems};
        } else {
          for (const GroupLayout::AxisRef& d : nc.dims)
            step.dims.push_back(d.eval(ext));
        }
        it.computes.push_back(std::move(step));
      }
      seg.iterations.push_back(std::move(it));
    });
    sched.segments.push_back(std::move(seg));
  }
  return sched;
}

SimReport simulate(const Schedule& schedule, const HardwareConfig& hw,
                   bool double_buffering) {
  SimReport r;
  r.mode = schedule.mode;
  r.double_buffering = double_buffering;
  r.spill_events = schedule.residency.spills;
  r.peak_usage[static_cast<int>(MemLevel::L2)] = schedule.residency.peak_l2;
  r.peak_usage[static_cast<int>(MemLevel::L3)] = schedule.residency.peak_l3;

  for (const ScheduleSegment& seg : schedule.segments) {
    r.peak_usage[static_cast<int>(MemLevel::L1)] =
        std::max(r.peak_usage[static_cast<int>(MemLevel::L1)], seg.l1_bytes);

    std::vector<PhaseCost> costs;
    costs.reserve(seg.iterations.size());
    for (const TileIteration& it : seg.iterations) {
      PhaseCost pc;
      for (const Transfer& t : it.loads) {
        pc.load += dma_cost(hw, t.desc);
        r.dma_transfer_count += 1;
        r.bytes_moved[t.desc.pair()] += t.desc.bytes;
        r.per_tensor_bytes[t.tensor] += t.desc.bytes;
      }
      for (const Transfer& t : it.stores) {
        pc.store += dma_cost(hw, t.desc);
        r.dma_transfer_count += 1;
        r.bytes_moved[t.desc.pair()] += t.desc.bytes;
        r.per_tensor_bytes[t.tensor] += t.desc.bytes;
      }
      for (const ComputeStep& c : it.computes)
        pc.compute += kernel_step_cycles(hw, c);
      costs.push_back(pc);
    }
    PipelineTotals totals =
        run_pipeline(costs.size(), double_buffering,
                     [&](u64 i) { return costs[static_cast<size_t>(i)]; });
    r.total_cycles += totals.total;
    r.dma_bound_cycles += totals.dma;
    r.compute_bound_cycles += totals.comp;
  }
  return r;
}

ComparisonReport compare(const SimReport& baseline, const SimReport& fused) {
  ComparisonReport c;
  c.baseline_cycles = baseline.total_cycles;
  c.fused_cycles = fused.total_cycles;
  if (baseline.total_cycles > 0)
    c.runtime_reduction_pct =
        100.0 *
        (static_cast<double>(baseline.total_cycles) -
         static_cast<double>(fused.total_cycles)) /
        static_cast<double>(baseline.total_cycles);
  c.baseline_transfers = baseline.dma_transfer_count;
  c.fused_transfers = fused.dma_transfer_count;
  if (baseline.dma_transfer_count > 0)
    c.transfer_reduction_pct =
        100.0 *
        (static_cast<double>(baseline.dma_transfer_count) -
         static_cast<double>(fused.dma_transfer_count)) /
        static_cast<double>(baseline.dma_transfer_count);
  std::set<LevelPair> pairs;
  for (const auto& [p, b] : baseline.bytes_moved) pairs.insert(p);
  for (const auto& [p, b] : fused.bytes_moved) pairs.insert(p);
  for (LevelPair p : pairs)
    c.bytes_delta[p] = static_cast<i64>(fused.bytes_on(p)) -
                       static_cast<i64>(baseline.bytes_on(p));
  return c;
}

} // namespace ftl
