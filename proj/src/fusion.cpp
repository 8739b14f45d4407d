#include "ftl/fusion.hpp"

#include <algorithm>
#include <set>

#include "ftl/errors.hpp"

namespace ftl {

std::string FusionGroup::label() const {
  std::string s;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (i) s += "+";
    s += nodes[i];
  }
  return s;
}

void VarUnion::ensure(int id) {
  while (parent_.size() <= static_cast<size_t>(id))
    parent_.push_back(static_cast<int>(parent_.size()));
}

int VarUnion::find(int id) const {
  if (static_cast<size_t>(id) >= parent_.size()) return id;
  int root = id;
  while (parent_[static_cast<size_t>(root)] != root)
    root = parent_[static_cast<size_t>(root)];
  while (parent_[static_cast<size_t>(id)] != root) {
    int next = parent_[static_cast<size_t>(id)];
    parent_[static_cast<size_t>(id)] = root;
    id = next;
  }
  return root;
}

void VarUnion::unite(int a, int b) {
  ensure(std::max(a, b));
  int ra = find(a), rb = find(b);
  if (ra == rb) return;
  if (ra > rb) std::swap(ra, rb); // smaller id becomes the representative
  parent_[static_cast<size_t>(rb)] = ra;
}

bool VarUnion::same(int a, int b) const { return find(a) == find(b); }

namespace {

// A producer->consumer edge is fusable when the producer's (single) output
// is consumed exactly once in the whole graph.
bool fusable_edge(const NetworkGraph& graph, int producer, int consumer,
                  FusionGroup::SharedEdge& edge) {
  const OperatorNode& p = graph.nodes[static_cast<size_t>(producer)];
  const OperatorNode& c = graph.nodes[static_cast<size_t>(consumer)];
  const std::string& t = p.outputs[0];
  const std::vector<int>& uses = graph.consumers(t);
  if (uses.size() != 1 || uses[0] != consumer) return false;
  auto it = std::find(c.inputs.begin(), c.inputs.end(), t);
  if (it == c.inputs.end()) return false;
  edge.tensor = t;
  edge.producer_output = 0;
  edge.consumer_input = static_cast<int>(it - c.inputs.begin());
  return true;
}

} // namespace

std::vector<FusionGroup> select_fusion_groups(const NetworkGraph& graph,
                                              const FusionPolicy& policy) {
  std::vector<FusionGroup> groups;
  if (policy.mode == FusionPolicy::Mode::none) {
    for (const OperatorNode& n : graph.nodes) groups.push_back({{n.name}, {}});
    return groups;
  }

  if (policy.mode == FusionPolicy::Mode::automatic) {
    std::vector<bool> taken(graph.nodes.size(), false);
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
      if (taken[i]) continue;
      FusionGroup g;
      g.nodes.push_back(graph.nodes[i].name);
      taken[i] = true;
      int tail = static_cast<int>(i);
      for (;;) {
        const std::vector<int>& uses =
            graph.consumers(graph.nodes[static_cast<size_t>(tail)].outputs[0]);
        if (uses.size() != 1) break;
        int next = uses[0];
        if (taken[static_cast<size_t>(next)]) break;
        FusionGroup::SharedEdge edge;
        if (!fusable_edge(graph, tail, next, edge)) break;
        g.shared.push_back(edge);
        g.nodes.push_back(graph.nodes[static_cast<size_t>(next)].name);
        taken[static_cast<size_t>(next)] = true;
        tail = next;
      }
      groups.push_back(std::move(g));
    }
    return groups;
  }

  // Explicit chains: validate, then fill the rest with singletons.
  std::set<std::string> assigned;
  std::vector<FusionGroup> chains;
  for (const std::vector<std::string>& chain : policy.chains) {
    if (chain.empty()) throw InfeasibleError("empty fusion chain");
    FusionGroup g;
    for (const std::string& name : chain) {
      if (graph.node_index(name) < 0)
        throw InfeasibleError("fusion chain names unknown node '" + name + "'");
      if (!assigned.insert(name).second)
        throw InfeasibleError("node '" + name + "' appears in two fusion groups");
      g.nodes.push_back(name);
    }
    for (size_t i = 0; i + 1 < chain.size(); ++i) {
      int p = graph.node_index(chain[i]);
      int c = graph.node_index(chain[i + 1]);
      const std::string& t = graph.nodes[static_cast<size_t>(p)].outputs[0];
      FusionGroup::SharedEdge edge;
      if (!fusable_edge(graph, p, c, edge)) {
        if (graph.consumers(t).size() > 1)
          throw InfeasibleError("fusion chain '" + g.label() + "': shared tensor '" +
                                t + "' has multiple consumers");
        throw InfeasibleError("fusion chain '" + g.label() + "': nodes '" +
                              chain[i] + "' and '" + chain[i + 1] +
                              "' are not consecutive producer/consumer");
      }
      g.shared.push_back(edge);
    }
    chains.push_back(std::move(g));
  }
  std::vector<FusionGroup> result;
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    const std::string& name = graph.nodes[i].name;
    bool starts_chain = false;
    for (FusionGroup& g : chains)
      if (g.nodes.front() == name) {
        result.push_back(g);
        starts_chain = true;
        break;
      }
    if (!starts_chain && !assigned.count(name)) result.push_back({{name}, {}});
  }
  return result;
}

BoundProblem bind_shared_dims(const FusionGroup& group,
                              const std::vector<ConstraintSet>& per_node,
                              const NetworkGraph& graph) {
  if (per_node.size() != group.nodes.size())
    throw InfeasibleError("bind_shared_dims: one constraint set per member required");

  BoundProblem p;
  p.group = group;
  for (const ConstraintSet& set : per_node) {
    p.vars.insert(p.vars.end(), set.vars.begin(), set.vars.end());
    p.constraints.insert(p.constraints.end(), set.constraints.begin(),
                         set.constraints.end());
    std::vector<int> ids;
    ids.reserve(set.vars.size());
    for (const DimVar& v : set.vars) ids.push_back(v.id);
    p.node_vars.push_back(std::move(ids));
  }
  std::sort(p.vars.begin(), p.vars.end(),
            [](const DimVar& a, const DimVar& b) { return a.id < b.id; });
  for (const DimVar& v : p.vars) p.binding.ensure(v.id);

  for (size_t i = 0; i < group.shared.size(); ++i) {
    const FusionGroup::SharedEdge& edge = group.shared[i];
    const OperatorNode& prod = graph.node(group.nodes[i]);
    const OperatorNode& cons = graph.node(group.nodes[i + 1]);
    size_t axes = graph.tensor(edge.tensor).axes.size();
    const ConstraintSet& pset = per_node[i];
    const ConstraintSet& cset = per_node[i + 1];
    int prod_operand = static_cast<int>(prod.inputs.size()) + edge.producer_output;
    for (size_t ax = 0; ax < axes; ++ax) {
      int pp = var_position(prod, graph, prod_operand, static_cast<int>(ax));
      int cp = var_position(cons, graph, edge.consumer_input, static_cast<int>(ax));
      if (static_cast<size_t>(pp) >= pset.vars.size() ||
          static_cast<size_t>(cp) >= cset.vars.size())
        throw InfeasibleError("bind_shared_dims: axis count mismatch on '" +
                              edge.tensor + "' (IR corruption)");
      p.binding.unite(pset.vars[static_cast<size_t>(pp)].id,
                      cset.vars[static_cast<size_t>(cp)].id);
    }
  }

  // Shared tensors kept entirely inside the group. Model outputs must be
  // materialized even when consumed in-group.
  std::set<std::string> members(group.nodes.begin(), group.nodes.end());
  for (const FusionGroup::SharedEdge& edge : group.shared) {
    const TensorSpec& t = graph.tensor(edge.tensor);
    if (t.kind != TensorKind::intermediate) continue;
    bool all_inside = true;
    for (int c : graph.consumers(edge.tensor))
      if (!members.count(graph.nodes[static_cast<size_t>(c)].name))
        all_inside = false;
    if (all_inside) p.internal_tensors.push_back(edge.tensor);
  }
  return p;
}

BoundProblem bind_group(const FusionGroup& group, const NetworkGraph& graph,
                        const HardwareConfig& hw, Engine engine) {
  VarAllocator alloc;
  std::vector<ConstraintSet> sets;
  sets.reserve(group.nodes.size());
  for (const std::string& name : group.nodes)
    sets.push_back(emit_node_constraints(graph.node(name), graph, hw, engine, alloc));
  return bind_shared_dims(group, sets, graph);
}

} // namespace ftl
