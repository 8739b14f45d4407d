#include "ftl/constraints.hpp"

#include <algorithm>
#include <sstream>

#include "ftl/errors.hpp"

namespace ftl {

namespace {

const DimVar& by_id(std::span<const DimVar> vars, int id) {
  for (const DimVar& v : vars)
    if (v.id == id) return v;
  throw InfeasibleError("constraint references unknown variable id " +
                        std::to_string(id));
}

} // namespace

std::string Constraint::describe(std::span<const DimVar> vars) const {
  std::ostringstream os;
  switch (kind) {
    case Kind::link: {
      const DimVar& in = by_id(vars, link.input_var);
      const DimVar& out = by_id(vars, link.output_var);
      os << in.label() << " = " << link.scale << "*" << out.label();
      if (link.offset >= 0)
        os << " + " << link.offset;
      else
        os << " - " << -link.offset;
      break;
    }
    case Kind::equal:
      os << by_id(vars, a).label() << " == " << by_id(vars, b).label();
      break;
    case Kind::fixed:
      os << by_id(vars, a).label() << " fixed at " << value;
      break;
    case Kind::multiple_of:
      os << by_id(vars, a).label() << " multiple of " << value;
      break;
    case Kind::min_value:
      os << by_id(vars, a).label() << " >= " << value;
      break;
  }
  if (cls == ConstraintClass::performance) os << " [performance p" << priority << "]";
  if (cls == ConstraintClass::kernel_policy) os << " [kernel-policy]";
  if (cls == ConstraintClass::geometric) os << " [geometric]";
  return os.str();
}

std::vector<DimVar> attribute_vars(const OperatorNode& node,
                                   const NetworkGraph& graph,
                                   VarAllocator& alloc) {
  std::vector<DimVar> vars;
  auto add_tensor = [&](const std::string& name) {
    const TensorSpec& t = graph.tensor(name);
    for (const AxisSpec& a : t.axes) {
      DimVar v;
      v.id = alloc.next();
      v.node = node.name;
      v.tensor = name;
      v.axis = a.name;
      v.full_extent = a.extent;
      vars.push_back(std::move(v));
    }
  };
  for (const std::string& t : node.inputs) add_tensor(t);
  for (const std::string& t : node.outputs) add_tensor(t);
  return vars;
}

int var_position(const OperatorNode& node, const NetworkGraph& graph,
                 int operand_pos, int axis_idx) {
  int pos = 0;
  int operand = 0;
  auto walk = [&](const std::vector<std::string>& tensors) -> int {
    for (const std::string& t : tensors) {
      int axes = static_cast<int>(graph.tensor(t).axes.size());
      if (operand == operand_pos) {
        if (axis_idx >= axes)
          throw InfeasibleError("axis index out of range for tensor '" + t + "'");
        return pos + axis_idx;
      }
      pos += axes;
      ++operand;
    }
    return -1;
  };
  int r = walk(node.inputs);
  if (r >= 0) return r;
  r = walk(node.outputs);
  if (r >= 0) return r;
  throw InfeasibleError("operand index out of range for node '" + node.name + "'");
}

namespace {

Constraint equal(int a, int b) {
  Constraint c;
  c.kind = Constraint::Kind::equal;
  c.cls = ConstraintClass::geometric;
  c.a = a;
  c.b = b;
  return c;
}

Constraint fixed(int var, u64 value, ConstraintClass cls) {
  Constraint c;
  c.kind = Constraint::Kind::fixed;
  c.cls = cls;
  c.a = var;
  c.value = value;
  return c;
}

} // namespace

std::vector<Constraint> emit_geometric(const OperatorNode& node,
                                       const NetworkGraph& graph,
                                       std::span<const DimVar> vars) {
  auto id = [&](int operand, int axis) {
    return vars[static_cast<size_t>(var_position(node, graph, operand, axis))].id;
  };
  std::vector<Constraint> out;
  int out_operand = static_cast<int>(node.inputs.size());
  switch (node.kind) {
    case OpKind::gemm: {
      out.push_back(equal(id(0, 0), id(out_operand, 0))); // A.M == C.M
      out.push_back(equal(id(1, 1), id(out_operand, 1))); // B.N == C.N
      out.push_back(equal(id(0, 1), id(1, 0)));           // A.K == B.K
      if (node.has_bias())
        out.push_back(equal(id(2, 0), id(out_operand, 1))); // bias.N == C.N
      break;
    }
    case OpKind::eltwise_unary: {
      size_t axes = graph.tensor(node.inputs[0]).axes.size();
      for (size_t i = 0; i < axes; ++i)
        out.push_back(equal(id(0, static_cast<int>(i)),
                            id(out_operand, static_cast<int>(i))));
      break;
    }
    case OpKind::eltwise_add: {
      size_t axes = graph.tensor(node.outputs[0]).axes.size();
      for (size_t i = 0; i < axes; ++i) {
        out.push_back(equal(id(0, static_cast<int>(i)),
                            id(out_operand, static_cast<int>(i))));
        out.push_back(equal(id(1, static_cast<int>(i)),
                            id(out_operand, static_cast<int>(i))));
      }
      break;
    }
    case OpKind::conv2d: {
      // in = [C,H,W], w = [F,C,KH,KW], out = [F,OH,OW]
      Constraint h;
      h.kind = Constraint::Kind::link;
      h.cls = ConstraintClass::geometric;
      h.link = AffineLink{id(0, 1), id(out_operand, 1), node.stride_h,
                          static_cast<i64>(node.kernel_h) -
                              static_cast<i64>(node.stride_h)};
      out.push_back(h);
      Constraint w = h;
      w.link = AffineLink{id(0, 2), id(out_operand, 2), node.stride_w,
                          static_cast<i64>(node.kernel_w) -
                              static_cast<i64>(node.stride_w)};
      out.push_back(w);
      out.push_back(equal(id(0, 0), id(1, 1)));           // in.C == w.C
      out.push_back(equal(id(out_operand, 0), id(1, 0))); // out.F == w.F
      // The kernel window is always consumed whole.
      out.push_back(fixed(id(1, 2), node.kernel_h, ConstraintClass::geometric));
      out.push_back(fixed(id(1, 3), node.kernel_w, ConstraintClass::geometric));
      break;
    }
  }
  return out;
}

std::vector<Constraint> emit_kernel_policy(const OperatorNode& node,
                                           const NetworkGraph& graph,
                                           const KernelDescriptor& kernel,
                                           std::span<const DimVar> vars) {
  auto id = [&](int operand, int axis) {
    return vars[static_cast<size_t>(var_position(node, graph, operand, axis))].id;
  };
  std::vector<Constraint> out;
  int out_operand = static_cast<int>(node.inputs.size());
  if (kernel.requires_full_reduction) {
    if (node.kind == OpKind::gemm) {
      // No partial-sum accumulation across tiles: K is never split.
      u64 k_full = graph.tensor(node.inputs[0]).axes[1].extent;
      out.push_back(fixed(id(0, 1), k_full, ConstraintClass::kernel_policy));
    } else if (node.kind == OpKind::conv2d) {
      u64 c_full = graph.tensor(node.inputs[0]).axes[0].extent;
      out.push_back(fixed(id(0, 0), c_full, ConstraintClass::kernel_policy));
    }
  }
  if (kernel.vectorized_n && kernel.simd_width > 1 && node.kind == OpKind::gemm) {
    Constraint c;
    c.kind = Constraint::Kind::multiple_of;
    c.cls = ConstraintClass::kernel_policy;
    c.a = id(out_operand, 1);
    c.value = kernel.simd_width;
    out.push_back(c);
  }
  return out;
}

std::vector<Constraint> emit_performance(const OperatorNode& node,
                                         const NetworkGraph& graph,
                                         const HardwareConfig& hw,
                                         std::span<const DimVar> vars) {
  auto id = [&](int operand, int axis) {
    return vars[static_cast<size_t>(var_position(node, graph, operand, axis))].id;
  };
  std::vector<Constraint> out;
  int out_operand = static_cast<int>(node.inputs.size());
  int row_var = id(out_operand, 0);
  u64 row_full = graph.tensor(node.outputs[0]).axes[0].extent;
  if (hw.cluster.num_cores > 1) {
    // Balanced multi-core split; cheapest to give up, so relaxed first.
    Constraint c;
    c.kind = Constraint::Kind::multiple_of;
    c.cls = ConstraintClass::performance;
    c.priority = 1;
    c.a = row_var;
    c.value = hw.cluster.num_cores;
    out.push_back(c);
  }
  if (hw.cluster.min_tile_elems > 1) {
    // DMA setup amortization on the outermost tiled axis.
    Constraint c;
    c.kind = Constraint::Kind::min_value;
    c.cls = ConstraintClass::performance;
    c.priority = 2;
    c.a = row_var;
    c.value = std::min(hw.cluster.min_tile_elems, row_full);
    out.push_back(c);
  }
  return out;
}

ConstraintSet emit_node_constraints(const OperatorNode& node,
                                    const NetworkGraph& graph,
                                    const HardwareConfig& hw, Engine engine,
                                    VarAllocator& alloc) {
  ConstraintSet set;
  set.owner = node.name;
  set.vars = attribute_vars(node, graph, alloc);
  auto geo = emit_geometric(node, graph, set.vars);
  Engine resolved = node_engine(node, hw, engine);
  const KernelEntry& entry =
      hw.kernel_or_throw(kernel_category(node.kind), resolved);
  auto policy = emit_kernel_policy(node, graph, entry.desc, set.vars);
  auto perf = emit_performance(node, graph, hw, set.vars);
  set.constraints.reserve(geo.size() + policy.size() + perf.size());
  set.constraints.insert(set.constraints.end(), geo.begin(), geo.end());
  set.constraints.insert(set.constraints.end(), policy.begin(), policy.end());
  set.constraints.insert(set.constraints.end(), perf.begin(), perf.end());
  return set;
}

} // namespace ftl
