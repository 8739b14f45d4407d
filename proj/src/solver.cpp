#include "ftl/solver.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ftl/errors.hpp"
#include "ftl/pipeline.hpp"
#include "ftl/sim.hpp"

namespace ftl {

namespace {

u64 ceil_div(u64 a, u64 b) { return (a + b - 1) / b; }

} // namespace

GroupLayout build_group_layout(const BoundProblem& problem,
                               const NetworkGraph& graph,
                               const HardwareConfig& hw, Engine engine) {
  GroupLayout layout;
  layout.owner = problem.group.label();

  // Solve-side unification: shared-tensor bindings plus every equality and
  // unit affine link collapse into one class.
  VarUnion dsu = problem.binding;
  for (const DimVar& v : problem.vars) dsu.ensure(v.id);
  for (const Constraint& c : problem.constraints) {
    if (c.kind == Constraint::Kind::equal) dsu.unite(c.a, c.b);
    if (c.kind == Constraint::Kind::link && c.link.scale == 1 &&
        c.link.offset == 0)
      dsu.unite(c.link.input_var, c.link.output_var);
  }

  std::map<int, int> root_to_class;
  for (const DimVar& v : problem.vars) {
    int root = dsu.find(v.id);
    auto [it, fresh] =
        root_to_class.emplace(root, static_cast<int>(layout.classes.size()));
    if (fresh) {
      GroupLayout::VarClass cls;
      cls.rep = root;
      layout.classes.push_back(std::move(cls));
    }
    GroupLayout::VarClass& cls = layout.classes[static_cast<size_t>(it->second)];
    cls.members.push_back(v.id);
    if (v.id == cls.rep || cls.label.empty()) {
      if (v.id == cls.rep) cls.label = v.label();
    }
    if (cls.full == 0) {
      cls.full = v.full_extent;
    } else if (cls.full != v.full_extent) {
      throw InfeasibleError("group '" + layout.owner + "': unified axis '" +
                            v.label() + "' disagrees on extent (" +
                            std::to_string(v.full_extent) + " vs " +
                            std::to_string(cls.full) + ")");
    }
    layout.var_to_class[v.id] = it->second;
  }

  for (const Constraint& c : problem.constraints) {
    if (c.kind == Constraint::Kind::fixed) {
      GroupLayout::VarClass& cls =
          layout.classes[static_cast<size_t>(layout.class_of(c.a))];
      if (c.value < 1 || c.value > cls.full)
        throw InfeasibleError("group '" + layout.owner + "': Fixed(" +
                              std::to_string(c.value) + ") outside [1," +
                              std::to_string(cls.full) + "] on " + cls.label);
      if (cls.fixed && *cls.fixed != c.value)
        throw InfeasibleError("group '" + layout.owner +
                              "': conflicting Fixed constraints on " + cls.label);
      cls.fixed = c.value;
    }
    if (c.kind == Constraint::Kind::link &&
        !(c.link.scale == 1 && c.link.offset == 0)) {
      int dst = layout.class_of(c.link.input_var);
      int src = layout.class_of(c.link.output_var);
      if (dst == src)
        throw InfeasibleError("group '" + layout.owner +
                              "': affine link within one variable class");
      GroupLayout::VarClass& cls = layout.classes[static_cast<size_t>(dst)];
      if (cls.dep_on >= 0 &&
          (cls.dep_on != src || cls.dep_scale != c.link.scale ||
           cls.dep_offset != c.link.offset))
        throw InfeasibleError("group '" + layout.owner +
                              "': conflicting affine links into " + cls.label);
      cls.dep_on = src;
      cls.dep_scale = c.link.scale;
      cls.dep_offset = c.link.offset;
    }
  }

  // Collapse link chains so every dependent class points at an iteration
  // axis directly.
  for (size_t round = 0; round <= layout.classes.size(); ++round) {
    bool changed = false;
    for (GroupLayout::VarClass& cls : layout.classes) {
      if (cls.dep_on < 0) continue;
      const GroupLayout::VarClass& src =
          layout.classes[static_cast<size_t>(cls.dep_on)];
      if (src.dep_on < 0) continue;
      // a1*(a2*x + b2) + b1
      cls.dep_offset += static_cast<i64>(cls.dep_scale) * src.dep_offset;
      cls.dep_scale *= src.dep_scale;
      cls.dep_on = src.dep_on;
      changed = true;
      if (round == layout.classes.size())
        throw InfeasibleError("group '" + layout.owner + "': cyclic affine links");
    }
    if (!changed) break;
  }

  for (size_t i = 0; i < layout.classes.size(); ++i) {
    const GroupLayout::VarClass& cls = layout.classes[i];
    if (cls.dep_on >= 0) continue;
    layout.iter_axes.push_back(static_cast<int>(i));
    if (!cls.fixed) layout.free_axes.push_back(static_cast<int>(i));
  }

  // Tensor roles and axis resolution.
  std::set<std::string> members(problem.group.nodes.begin(),
                                problem.group.nodes.end());
  std::set<std::string> internals(problem.internal_tensors.begin(),
                                  problem.internal_tensors.end());
  std::set<std::string> seen;
  auto axis_ref = [&](int var_id) {
    const GroupLayout::VarClass& cls =
        layout.classes[static_cast<size_t>(layout.class_of(var_id))];
    if (cls.dep_on >= 0)
      return GroupLayout::AxisRef{cls.dep_on, cls.dep_scale, cls.dep_offset};
    return GroupLayout::AxisRef{layout.class_of(var_id), 1, 0};
  };
  for (size_t ni = 0; ni < problem.group.nodes.size(); ++ni) {
    const OperatorNode& node = graph.node(problem.group.nodes[ni]);
    const std::vector<int>& ids = problem.node_vars[ni];
    size_t cursor = 0;
    auto visit = [&](const std::string& tname, bool is_output) {
      const TensorSpec& spec = graph.tensor(tname);
      size_t axes = spec.axes.size();
      if (!seen.insert(tname).second) {
        cursor += axes;
        return;
      }
      GroupLayout::TensorUse use;
      use.name = tname;
      use.elem_bytes = spec.elem_bytes;
      for (size_t a = 0; a < axes; ++a) {
        use.axes.push_back(axis_ref(ids[cursor + a]));
        use.full_extents.push_back(spec.axes[a].extent);
      }
      cursor += axes;
      int producer = graph.producer(tname);
      bool produced_inside =
          producer >= 0 &&
          members.count(graph.nodes[static_cast<size_t>(producer)].name);
      if (produced_inside) {
        use.internal = internals.count(tname) > 0;
        use.stored = !use.internal;
      } else {
        use.loaded = true;
      }
      (void)is_output;
      layout.tensors.push_back(std::move(use));
    };
    for (const std::string& t : node.inputs) visit(t, false);
    for (const std::string& t : node.outputs) visit(t, true);
  }

  // Per-node kernel dimensions.
  for (size_t ni = 0; ni < problem.group.nodes.size(); ++ni) {
    const OperatorNode& node = graph.node(problem.group.nodes[ni]);
    const std::vector<int>& ids = problem.node_vars[ni];
    auto ref = [&](int operand, int axis) {
      return axis_ref(
          ids[static_cast<size_t>(var_position(node, graph, operand, axis))]);
    };
    GroupLayout::NodeCompute nc;
    nc.node = node.name;
    nc.kind = node.kind;
    nc.engine = node_engine(node, hw, engine);
    int out_op = static_cast<int>(node.inputs.size());
    switch (node.kind) {
      case OpKind::gemm:
        nc.dims = {ref(out_op, 0), ref(out_op, 1), ref(0, 1)}; // M, N, K
        break;
      case OpKind::conv2d:
        nc.dims = {ref(out_op, 0), ref(out_op, 1), ref(out_op, 2),
                   ref(1, 1),      ref(1, 2),      ref(1, 3)}; // F,OH,OW,C,KH,KW
        break;
      case OpKind::eltwise_unary:
      case OpKind::eltwise_add: {
        size_t axes = graph.tensor(node.outputs[0]).axes.size();
        for (size_t a = 0; a < axes; ++a)
          nc.dims.push_back(ref(out_op, static_cast<int>(a)));
        break;
      }
    }
    layout.computes.push_back(std::move(nc));
  }
  return layout;
}

std::vector<u64> candidate_extents(u64 full, std::span<const u64> factors) {
  std::set<u64> cands;
  for (u64 d = 1; d * d <= full; ++d) {
    if (full % d == 0) {
      cands.insert(d);
      cands.insert(full / d);
    }
  }
  for (u64 f : factors) {
    if (f == 0) continue;
    for (u64 m = f; m <= full; m += f) cands.insert(m);
  }
  cands.insert(full);
  return {cands.begin(), cands.end()};
}

std::optional<BufferPlan> allocate_buffers(const GroupLayout& layout,
                                           std::span<const u64> class_extents,
                                           const HardwareConfig& hw) {
  std::vector<BufferPlan::Entry> entries;
  entries.reserve(layout.tensors.size());
  for (const GroupLayout::TensorUse& t : layout.tensors) {
    BufferPlan::Entry e;
    e.tensor = t.name;
    e.bytes_per_tile = t.elem_bytes;
    for (const GroupLayout::AxisRef& a : t.axes)
      e.bytes_per_tile *= a.eval(class_extents);
    e.copies = t.internal ? 1 : 2;
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const BufferPlan::Entry& a, const BufferPlan::Entry& b) {
              u64 wa = a.bytes_per_tile * static_cast<u64>(a.copies);
              u64 wb = b.bytes_per_tile * static_cast<u64>(b.copies);
              if (wa != wb) return wa > wb;
              return a.tensor < b.tensor;
            });
  BufferPlan plan;
  u64 offset = 0;
  for (BufferPlan::Entry& e : entries) {
    e.offset = offset;
    offset += e.bytes_per_tile * static_cast<u64>(e.copies);
  }
  plan.entries = std::move(entries);
  plan.total_bytes = offset;
  if (plan.total_bytes > hw.capacity(MemLevel::L1)) return std::nullopt;
  return plan;
}

namespace {

struct SearchSpace {
  GroupLayout layout;
  std::vector<int> order;                  // free axes, descending full extent
  std::vector<std::vector<u64>> cands;     // per order entry
  std::vector<int> priorities;             // distinct soft priorities, ascending
};

SearchSpace make_space(const BoundProblem& problem, const NetworkGraph& graph,
                       const HardwareConfig& hw, Engine engine) {
  SearchSpace s;
  s.layout = build_group_layout(problem, graph, hw, engine);

  s.order = s.layout.free_axes;
  std::sort(s.order.begin(), s.order.end(), [&](int a, int b) {
    u64 fa = s.layout.classes[static_cast<size_t>(a)].full;
    u64 fb = s.layout.classes[static_cast<size_t>(b)].full;
    if (fa != fb) return fa > fb;
    return a < b;
  });

  std::set<int> prios;
  for (const Constraint& c : problem.constraints)
    if (c.is_soft()) prios.insert(c.priority);
  s.priorities.assign(prios.begin(), prios.end());

  for (int cls : s.order) {
    std::vector<u64> factors;
    for (const Constraint& c : problem.constraints)
      if (c.kind == Constraint::Kind::multiple_of &&
          s.layout.class_of(c.a) == cls)
        factors.push_back(c.value);
    s.cands.push_back(candidate_extents(
        s.layout.classes[static_cast<size_t>(cls)].full, factors));
  }
  return s;
}

// Resolve fixed and affine-dependent classes; free classes must already be
// written into `extents`.
void resolve_extents(const GroupLayout& layout, std::vector<u64>& extents) {
  for (size_t i = 0; i < layout.classes.size(); ++i) {
    const GroupLayout::VarClass& cls = layout.classes[i];
    if (cls.fixed) extents[i] = *cls.fixed;
  }
  for (size_t i = 0; i < layout.classes.size(); ++i) {
    const GroupLayout::VarClass& cls = layout.classes[i];
    if (cls.dep_on >= 0)
      extents[i] = cls.dep_scale * extents[static_cast<size_t>(cls.dep_on)] +
                   static_cast<u64>(cls.dep_offset);
  }
}

// Hard constraints always hold; soft constraints hold unless their priority
// is <= relax_level.
bool assignment_ok(const BoundProblem& problem, const GroupLayout& layout,
                   std::span<const u64> extents, int relax_level) {
  for (const Constraint& c : problem.constraints) {
    bool enforced = !c.is_soft() || c.priority > relax_level;
    if (!enforced) continue;
    switch (c.kind) {
      case Constraint::Kind::fixed:
        if (extents[static_cast<size_t>(layout.class_of(c.a))] != c.value)
          return false;
        break;
      case Constraint::Kind::multiple_of:
        if (extents[static_cast<size_t>(layout.class_of(c.a))] % c.value != 0)
          return false;
        break;
      case Constraint::Kind::min_value:
        if (extents[static_cast<size_t>(layout.class_of(c.a))] < c.value)
          return false;
        break;
      case Constraint::Kind::equal:
      case Constraint::Kind::link:
        break; // satisfied by class construction
    }
  }
  return true;
}

u64 tile_volume(const GroupLayout& layout, std::span<const u64> extents) {
  u64 vol = 0;
  for (const GroupLayout::TensorUse& t : layout.tensors) {
    u64 bytes = t.elem_bytes;
    for (const GroupLayout::AxisRef& a : t.axes) bytes *= a.eval(extents);
    vol += bytes;
  }
  return vol;
}

// Lower bound on the L1 footprint with unassigned free classes at extent 1.
u64 footprint_lower_bound(const GroupLayout& layout,
                          std::span<const u64> extents_or_zero) {
  u64 total = 0;
  auto class_low = [&](int cls) -> u64 {
    const GroupLayout::VarClass& c = layout.classes[static_cast<size_t>(cls)];
    if (c.fixed) return *c.fixed;
    u64 v = extents_or_zero[static_cast<size_t>(cls)];
    return v ? v : 1;
  };
  for (const GroupLayout::TensorUse& t : layout.tensors) {
    u64 bytes = t.elem_bytes;
    for (const GroupLayout::AxisRef& a : t.axes)
      bytes *= a.scale * class_low(a.cls) + static_cast<u64>(a.offset);
    total += bytes * (t.internal ? 1 : 2);
  }
  return total;
}

struct Candidate {
  bool valid = false;
  u64 objective = 0;
  u64 volume = 0;
  std::vector<u64> extents;
};

bool better(const Candidate& a, const Candidate& b) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  if (a.objective != b.objective) return a.objective < b.objective;
  if (a.volume != b.volume) return a.volume > b.volume;
  return a.extents < b.extents;
}

struct EvalContext {
  const BoundProblem& problem;
  const NetworkGraph& graph;
  const HardwareConfig& hw;
  const SearchSpace& space;
  const std::map<std::string, MemLevel>& residency;
  int relax_level;
};

void consider_leaf(const EvalContext& ctx, std::vector<u64>& extents,
                   Candidate& best) {
  resolve_extents(ctx.space.layout, extents);
  if (!assignment_ok(ctx.problem, ctx.space.layout, extents, ctx.relax_level))
    return;
  if (!allocate_buffers(ctx.space.layout, extents, ctx.hw)) return;
  Candidate cand;
  cand.valid = true;
  cand.extents = extents;
  cand.volume = tile_volume(ctx.space.layout, extents);
  cand.objective = group_schedule_cycles(ctx.space.layout, extents,
                                         ctx.residency, ctx.hw, true);
  if (better(cand, best)) best = std::move(cand);
}

void dfs(const EvalContext& ctx, size_t depth, std::vector<u64>& extents,
         Candidate& best) {
  if (depth == ctx.space.order.size()) {
    consider_leaf(ctx, extents, best);
    return;
  }
  int cls = ctx.space.order[depth];
  for (u64 extent : ctx.space.cands[depth]) {
    extents[static_cast<size_t>(cls)] = extent;
    if (footprint_lower_bound(ctx.space.layout, extents) >
        ctx.hw.capacity(MemLevel::L1)) {
      extents[static_cast<size_t>(cls)] = 0;
      continue; // larger candidates only grow the footprint
    }
    dfs(ctx, depth + 1, extents, best);
    extents[static_cast<size_t>(cls)] = 0;
  }
}

Candidate search_level(const EvalContext& ctx) {
  size_t nclasses = ctx.space.layout.classes.size();
  if (ctx.space.order.empty()) {
    Candidate best;
    std::vector<u64> extents(nclasses, 0);
    consider_leaf(ctx, extents, best);
    return best;
  }

  const std::vector<u64>& first = ctx.space.cands[0];
  std::vector<Candidate> per_first(first.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(first.size()); ++i) {
    std::vector<u64> extents(nclasses, 0);
    int cls = ctx.space.order[0];
    extents[static_cast<size_t>(cls)] = first[static_cast<size_t>(i)];
    if (footprint_lower_bound(ctx.space.layout, extents) >
        ctx.hw.capacity(MemLevel::L1))
      continue;
    dfs(ctx, 1, extents, per_first[static_cast<size_t>(i)]);
  }
  // Deterministic reduction in candidate order.
  Candidate best;
  for (Candidate& c : per_first)
    if (better(c, best)) best = std::move(c);
  return best;
}

TilingSolution finish_solution(const BoundProblem& problem,
                               const SearchSpace& space,
                               const HardwareConfig& hw, Engine engine,
                               const Candidate& winner, int relax_level) {
  const GroupLayout& layout = space.layout;
  TilingSolution sol;
  sol.group_label = problem.group.label();
  sol.nodes = problem.group.nodes;
  sol.engine = engine;
  sol.extents = winner.extents;
  for (const GroupLayout::VarClass& cls : layout.classes)
    sol.class_labels.push_back(cls.label);
  for (int cls : layout.iter_axes) {
    const GroupLayout::VarClass& c = layout.classes[static_cast<size_t>(cls)];
    TileGridAxis axis;
    axis.cls = cls;
    axis.label = c.label;
    axis.extent = winner.extents[static_cast<size_t>(cls)];
    axis.num_tiles = ceil_div(c.full, axis.extent);
    axis.last_extent = c.full - (axis.num_tiles - 1) * axis.extent;
    sol.grid.push_back(std::move(axis));
  }
  auto plan = allocate_buffers(layout, winner.extents, hw);
  assert(plan);
  sol.buffers = *plan;
  for (const Constraint& c : problem.constraints) {
    if (!c.is_soft() || c.priority > relax_level) continue;
    bool violated = false;
    u64 v = winner.extents[static_cast<size_t>(layout.class_of(c.a))];
    if (c.kind == Constraint::Kind::multiple_of) violated = v % c.value != 0;
    if (c.kind == Constraint::Kind::min_value) violated = v < c.value;
    if (violated) sol.relaxed.push_back(c.describe(problem.vars));
  }
  sol.objective_cycles = winner.objective;
  sol.layout = std::make_shared<GroupLayout>(layout);
  return sol;
}

std::map<std::string, MemLevel> default_residency(const BoundProblem& problem,
                                                  const NetworkGraph& graph,
                                                  const HardwareConfig& hw) {
  // Standalone-solve fallback: each external tensor independently at the
  // lowest level whose capacity holds it. The planning pipeline supplies
  // the real assignment.
  std::map<std::string, MemLevel> res;
  std::set<std::string> internals(problem.internal_tensors.begin(),
                                  problem.internal_tensors.end());
  for (const std::string& node_name : problem.group.nodes) {
    const OperatorNode& node = graph.node(node_name);
    for (const std::string& list : node.inputs) {
      if (!internals.count(list) && !res.count(list))
        res[list] = tensor_bytes(graph.tensor(list)) <= hw.capacity(MemLevel::L2)
                        ? MemLevel::L2
                        : MemLevel::L3;
    }
    for (const std::string& list : node.outputs) {
      if (!internals.count(list) && !res.count(list))
        res[list] = tensor_bytes(graph.tensor(list)) <= hw.capacity(MemLevel::L2)
                        ? MemLevel::L2
                        : MemLevel::L3;
    }
  }
  return res;
}

std::optional<TilingSolution> solve_impl(const BoundProblem& problem,
                                         const NetworkGraph& graph,
                                         const HardwareConfig& hw, Engine engine,
                                         bool exhaustive) {
  SearchSpace space = make_space(problem, graph, hw, engine);

  const std::map<std::string, MemLevel>* residency = &problem.residency;
  std::map<std::string, MemLevel> fallback;
  if (residency->empty()) {
    fallback = default_residency(problem, graph, hw);
    residency = &fallback;
  }

  if (exhaustive) {
    u64 lattice = 1;
    for (const std::vector<u64>& c : space.cands) {
      lattice *= c.size();
      if (lattice > 100000)
        throw InfeasibleError("brute_force_solve: candidate lattice exceeds 10^5");
    }
  }

  std::vector<int> levels = {0};
  for (int p : space.priorities) levels.push_back(p);
  for (int level : levels) {
    EvalContext ctx{problem, graph, hw, space, *residency, level};
    Candidate best;
    if (exhaustive) {
      // Reference path: flat odometer enumeration, no pruning, serial.
      size_t n = space.order.size();
      std::vector<size_t> idx(n, 0);
      std::vector<u64> extents(space.layout.classes.size(), 0);
      bool done = n == 0;
      if (done) consider_leaf(ctx, extents, best);
      while (!done) {
        for (size_t d = 0; d < n; ++d)
          extents[static_cast<size_t>(space.order[d])] = space.cands[d][idx[d]];
        consider_leaf(ctx, extents, best);
        size_t d = n;
        while (d > 0) {
          --d;
          if (++idx[d] < space.cands[d].size()) break;
          idx[d] = 0;
          if (d == 0) done = true;
        }
      }
    } else {
      best = search_level(ctx);
    }
    if (best.valid) return finish_solution(problem, space, hw, engine, best, level);
  }
  return std::nullopt;
}

} // namespace

std::optional<TilingSolution> try_solve(const BoundProblem& problem,
                                        const NetworkGraph& graph,
                                        const HardwareConfig& hw, Engine engine) {
  return solve_impl(problem, graph, hw, engine, false);
}

TilingSolution solve(const BoundProblem& problem, const NetworkGraph& graph,
                     const HardwareConfig& hw, Engine engine) {
  auto sol = try_solve(problem, graph, hw, engine);
  if (!sol)
    throw InfeasibleError(
        "group '" + problem.group.label() +
        "': no tile assignment fits L1 even with all soft constraints "
        "relaxed and minimal tiles" +
        (problem.group.nodes.size() > 1 ? " (split the fusion group)" : ""));
  return *sol;
}

TilingSolution brute_force_solve(const BoundProblem& problem,
                                 const NetworkGraph& graph,
                                 const HardwareConfig& hw, Engine engine) {
  auto sol = solve_impl(problem, graph, hw, engine, true);
  if (!sol)
    throw InfeasibleError("group '" + problem.group.label() +
                          "': infeasible (brute force)");
  return *sol;
}

u64 lattice_size(const BoundProblem& problem, const NetworkGraph& graph,
                 const HardwareConfig& hw, Engine engine) {
  SearchSpace space = make_space(problem, graph, hw, engine);
  u64 lattice = 1;
  for (const std::vector<u64>& c : space.cands) lattice *= c.size();
  return lattice;
}

std::pair<std::vector<FusionGroup>, std::vector<TilingSolution>>
solve_with_fallback(const FusionGroup& group, const NetworkGraph& graph,
                    const HardwareConfig& hw, Engine engine) {
  // Residency context: the group's current pieces, every other node a
  // singleton, all in topological order.
  std::set<std::string> members(group.nodes.begin(), group.nodes.end());
  std::vector<FusionGroup> partition;
  bool placed = false;
  for (const OperatorNode& n : graph.nodes) {
    if (members.count(n.name)) {
      if (!placed) {
        partition.push_back(group);
        placed = true;
      }
    } else {
      partition.push_back({{n.name}, {}});
    }
  }
  SolvedPartition solved = solve_partition(graph, hw, engine, partition);

  std::vector<FusionGroup> out_groups;
  std::vector<TilingSolution> out_solutions;
  for (size_t i = 0; i < solved.groups.size(); ++i) {
    bool inside = true;
    for (const std::string& n : solved.groups[i].nodes)
      if (!members.count(n)) inside = false;
    if (inside) {
      out_groups.push_back(solved.groups[i]);
      out_solutions.push_back(solved.solutions[i]);
    }
  }
  return {out_groups, out_solutions};
}

} // namespace ftl
