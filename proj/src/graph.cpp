#include "ftl/graph.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "ftl/errors.hpp"

namespace ftl {

namespace {

constexpr u64 kMaxTensorBytes = u64{1} << 48;

[[noreturn]] void fail(const std::string& source, const YAML::Node& where,
                       const std::string& msg) {
  std::ostringstream os;
  os << source;
  if (where.IsDefined() && where.Mark().line >= 0)
    os << ":" << (where.Mark().line + 1) << ":" << (where.Mark().column + 1);
  os << ": " << msg;
  throw ParseError(os.str());
}

[[noreturn]] void fail(const std::string& source, const std::string& msg) {
  throw ParseError(source + ": " + msg);
}

u64 require_u64(const std::string& source, const YAML::Node& node,
                const std::string& field, u64 min_value) {
  if (!node || !node.IsScalar()) fail(source, node, "missing field '" + field + "'");
  u64 v;
  try {
    v = node.as<u64>();
  } catch (const YAML::Exception&) {
    fail(source, node, "field '" + field + "' is not a non-negative integer");
  }
  if (v < min_value)
    fail(source, node,
         "field '" + field + "' must be >= " + std::to_string(min_value));
  return v;
}

std::string require_str(const std::string& source, const YAML::Node& node,
                        const std::string& field) {
  if (!node || !node.IsScalar()) fail(source, node, "missing field '" + field + "'");
  return node.as<std::string>();
}

} // namespace

bool TensorSpec::shape_known() const {
  return std::all_of(axes.begin(), axes.end(),
                     [](const AxisSpec& a) { return a.extent >= 1; });
}

u64 tensor_bytes(const TensorSpec& spec) {
  if (!spec.shape_known())
    throw ParseError("tensor '" + spec.name + "': byte size of unknown shape");
  u64 bytes = spec.elem_bytes;
  for (const AxisSpec& a : spec.axes) {
    if (a.extent != 0 && bytes > kMaxTensorBytes / a.extent)
      throw ParseError("tensor '" + spec.name + "': byte size exceeds 2^48");
    bytes *= a.extent;
  }
  return bytes;
}

const std::vector<int> NetworkGraph::no_consumers_{};

const TensorSpec& NetworkGraph::tensor(const std::string& name) const {
  auto it = tensor_index_.find(name);
  if (it == tensor_index_.end())
    throw ParseError("unknown tensor '" + name + "'");
  return tensors[static_cast<size_t>(it->second)];
}

TensorSpec& NetworkGraph::tensor(const std::string& name) {
  return const_cast<TensorSpec&>(std::as_const(*this).tensor(name));
}

bool NetworkGraph::has_tensor(const std::string& name) const {
  return tensor_index_.count(name) > 0;
}

const OperatorNode& NetworkGraph::node(const std::string& name) const {
  int idx = node_index(name);
  if (idx < 0) throw ParseError("unknown node '" + name + "'");
  return nodes[static_cast<size_t>(idx)];
}

int NetworkGraph::node_index(const std::string& name) const {
  auto it = node_index_.find(name);
  return it == node_index_.end() ? -1 : it->second;
}

int NetworkGraph::producer(const std::string& tensor) const {
  auto it = producer_.find(tensor);
  return it == producer_.end() ? -1 : it->second;
}

const std::vector<int>& NetworkGraph::consumers(const std::string& tensor) const {
  auto it = consumers_.find(tensor);
  return it == consumers_.end() ? no_consumers_ : it->second;
}

void NetworkGraph::finalize() {
  tensor_index_.clear();
  for (size_t i = 0; i < tensors.size(); ++i) {
    if (!tensor_index_.emplace(tensors[i].name, static_cast<int>(i)).second)
      throw ParseError("duplicate tensor '" + tensors[i].name + "'");
    for (size_t a = 0; a < tensors[i].axes.size(); ++a)
      for (size_t b = a + 1; b < tensors[i].axes.size(); ++b)
        if (tensors[i].axes[a].name == tensors[i].axes[b].name)
          throw ParseError("tensor '" + tensors[i].name + "': duplicate axis '" +
                           tensors[i].axes[a].name + "'");
  }

  for (const OperatorNode& n : nodes) {
    size_t in = n.inputs.size(), out = n.outputs.size();
    bool ok = false;
    switch (n.kind) {
      case OpKind::gemm: ok = (in == 2 || in == 3) && out == 1; break;
      case OpKind::eltwise_unary: ok = in == 1 && out == 1; break;
      case OpKind::eltwise_add: ok = in == 2 && out == 1; break;
      case OpKind::conv2d: ok = in == 2 && out == 1; break;
    }
    if (!ok)
      throw ParseError("node '" + n.name + "': " + to_string(n.kind) +
                       " takes the wrong operand count (" + std::to_string(in) +
                       " inputs, " + std::to_string(out) + " outputs)");
    for (const std::string& t : n.inputs)
      if (!has_tensor(t))
        throw ParseError("node '" + n.name + "': dangling tensor reference '" + t + "'");
    for (const std::string& t : n.outputs)
      if (!has_tensor(t))
        throw ParseError("node '" + n.name + "': dangling tensor reference '" + t + "'");
  }

  producer_.clear();
  consumers_.clear();
  for (size_t i = 0; i < nodes.size(); ++i) {
    for (const std::string& t : nodes[i].outputs) {
      TensorKind k = tensor(t).kind;
      if (k == TensorKind::input || k == TensorKind::weight)
        throw ParseError("node '" + nodes[i].name + "' writes to " + to_string(k) +
                         " tensor '" + t + "'");
      if (!producer_.emplace(t, static_cast<int>(i)).second)
        throw ParseError("tensor '" + t + "' has more than one producer");
    }
    for (const std::string& t : nodes[i].inputs)
      consumers_[t].push_back(static_cast<int>(i));
  }
  for (const TensorSpec& t : tensors) {
    if ((t.kind == TensorKind::intermediate || t.kind == TensorKind::output) &&
        producer_.find(t.name) == producer_.end())
      throw ParseError(to_string(t.kind) + " tensor '" + t.name + "' has no producer");
  }

  // Stable topological order (Kahn over producer->consumer edges).
  std::vector<int> indeg(nodes.size(), 0);
  for (size_t i = 0; i < nodes.size(); ++i)
    for (const std::string& t : nodes[i].inputs)
      if (producer_.count(t)) ++indeg[i];
  std::deque<int> ready;
  for (size_t i = 0; i < nodes.size(); ++i)
    if (indeg[i] == 0) ready.push_back(static_cast<int>(i));
  std::vector<OperatorNode> ordered;
  ordered.reserve(nodes.size());
  std::vector<bool> done(nodes.size(), false);
  while (!ready.empty()) {
    int i = ready.front();
    ready.pop_front();
    done[static_cast<size_t>(i)] = true;
    ordered.push_back(nodes[static_cast<size_t>(i)]);
    for (const std::string& t : nodes[static_cast<size_t>(i)].outputs)
      for (int c : consumers_[t])
        if (--indeg[static_cast<size_t>(c)] == 0) ready.push_back(c);
  }
  if (ordered.size() != nodes.size())
    throw ParseError("graph has a cycle");
  nodes = std::move(ordered);

  node_index_.clear();
  producer_.clear();
  consumers_.clear();
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (!node_index_.emplace(nodes[i].name, static_cast<int>(i)).second)
      throw ParseError("duplicate node '" + nodes[i].name + "'");
    for (const std::string& t : nodes[i].outputs) producer_[t] = static_cast<int>(i);
    for (const std::string& t : nodes[i].inputs)
      consumers_[t].push_back(static_cast<int>(i));
  }
}

namespace {

struct ShapeRule {
  // Returns the output shape of the node and validates input agreement.
  static std::vector<u64> apply(const OperatorNode& n, const NetworkGraph& g) {
    auto extents = [&](const std::string& t) {
      std::vector<u64> e;
      for (const AxisSpec& a : g.tensor(t).axes) e.push_back(a.extent);
      return e;
    };
    auto need_axes = [&](const std::string& t, size_t count, const char* role) {
      if (g.tensor(t).axes.size() != count)
        throw ParseError("node '" + n.name + "': " + role + " tensor '" + t +
                         "' must have " + std::to_string(count) + " axes");
    };
    switch (n.kind) {
      case OpKind::gemm: {
        need_axes(n.inputs[0], 2, "A");
        need_axes(n.inputs[1], 2, "B");
        auto a = extents(n.inputs[0]), b = extents(n.inputs[1]);
        if (a[1] != b[0])
          throw ParseError("node '" + n.name + "': shape mismatch on axis K (" +
                           std::to_string(a[1]) + " != " + std::to_string(b[0]) +
                           ") between '" + n.inputs[0] + "' and '" + n.inputs[1] + "'");
        if (n.has_bias()) {
          need_axes(n.inputs[2], 1, "bias");
          if (extents(n.inputs[2])[0] != b[1])
            throw ParseError("node '" + n.name + "': bias extent " +
                             std::to_string(extents(n.inputs[2])[0]) +
                             " does not match N=" + std::to_string(b[1]));
        }
        return {a[0], b[1]};
      }
      case OpKind::eltwise_unary:
        return extents(n.inputs[0]);
      case OpKind::eltwise_add: {
        auto lhs = extents(n.inputs[0]), rhs = extents(n.inputs[1]);
        if (lhs != rhs)
          throw ParseError("node '" + n.name +
                           "': add operands have mismatched shapes ('" +
                           n.inputs[0] + "' vs '" + n.inputs[1] + "')");
        return lhs;
      }
      case OpKind::conv2d: {
        need_axes(n.inputs[0], 3, "input");
        need_axes(n.inputs[1], 4, "weight");
        auto in = extents(n.inputs[0]), w = extents(n.inputs[1]);
        if (in[0] != w[1])
          throw ParseError("node '" + n.name + "': shape mismatch on axis C (" +
                           std::to_string(in[0]) + " != " + std::to_string(w[1]) + ")");
        if (w[2] != n.kernel_h || w[3] != n.kernel_w)
          throw ParseError("node '" + n.name +
                           "': weight kernel window does not match kernel_h/kernel_w");
        if (in[1] < n.kernel_h || in[2] < n.kernel_w)
          throw ParseError("node '" + n.name + "': input smaller than kernel window");
        u64 oh = (in[1] - n.kernel_h) / n.stride_h + 1;
        u64 ow = (in[2] - n.kernel_w) / n.stride_w + 1;
        return {w[0], oh, ow};
      }
    }
    throw ParseError("node '" + n.name + "': unsupported operator kind");
  }
};

} // namespace

NetworkGraph infer_shapes(NetworkGraph graph) {
  for (const TensorSpec& t : graph.tensors)
    if ((t.kind == TensorKind::input || t.kind == TensorKind::weight) &&
        !t.shape_known())
      throw ParseError("underdetermined shape: " + to_string(t.kind) +
                       " tensor '" + t.name + "' must declare all extents");

  for (const OperatorNode& n : graph.nodes) {
    for (const std::string& t : n.inputs)
      if (!graph.tensor(t).shape_known())
        throw ParseError("underdetermined shape: node '" + n.name +
                         "' consumes '" + t + "' before its shape is known");
    std::vector<u64> out = ShapeRule::apply(n, graph);
    TensorSpec& spec = graph.tensor(n.outputs[0]);
    if (spec.axes.size() != out.size())
      throw ParseError("node '" + n.name + "': output tensor '" + spec.name +
                       "' must have " + std::to_string(out.size()) + " axes");
    for (size_t i = 0; i < out.size(); ++i) {
      if (spec.axes[i].extent == 0) {
        spec.axes[i].extent = out[i];
      } else if (spec.axes[i].extent != out[i]) {
        throw ParseError("node '" + n.name + "': declared extent of '" +
                         spec.name + "." + spec.axes[i].name + "' is " +
                         std::to_string(spec.axes[i].extent) +
                         " but operator semantics give " + std::to_string(out[i]));
      }
    }
  }
  for (const TensorSpec& t : graph.tensors) tensor_bytes(t); // overflow check
  return graph;
}

namespace {

OpKind parse_kind(const std::string& source, const YAML::Node& where,
                  const std::string& kind, EltFn& fn) {
  if (kind == "gemm") return OpKind::gemm;
  if (kind == "add") return OpKind::eltwise_add;
  if (kind == "conv2d") return OpKind::conv2d;
  if (kind == "gelu") { fn = EltFn::gelu; return OpKind::eltwise_unary; }
  if (kind == "relu") { fn = EltFn::relu; return OpKind::eltwise_unary; }
  if (kind == "identity") { fn = EltFn::identity; return OpKind::eltwise_unary; }
  fail(source, where, "unknown operator kind '" + kind + "'");
}

TensorKind parse_tensor_kind(const std::string& source, const YAML::Node& where,
                             const std::string& kind) {
  if (kind == "input") return TensorKind::input;
  if (kind == "weight") return TensorKind::weight;
  if (kind == "intermediate") return TensorKind::intermediate;
  if (kind == "output") return TensorKind::output;
  fail(source, where, "unknown tensor kind '" + kind + "'");
}

} // namespace

static NetworkGraph parse_network_doc(const YAML::Node& doc,
                                      const std::string& source);

NetworkGraph parse_network(const std::string& text, const std::string& source) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    fail(source, "syntax error at line " + std::to_string(e.mark.line + 1) +
                     ", column " + std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  try {
    return parse_network_doc(doc, source);
  } catch (const YAML::Exception& e) {
    fail(source, "invalid value at line " + std::to_string(e.mark.line + 1) +
                     ", column " + std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
}

static NetworkGraph parse_network_doc(const YAML::Node& doc,
                                      const std::string& source) {
  if (!doc.IsMap()) fail(source, "model file must be a mapping");
  if (require_u64(source, doc["version"], "version", 1) != 1)
    fail(source, doc["version"], "unsupported model file version");

  NetworkGraph g;
  if (doc["name"]) g.name = doc["name"].as<std::string>();

  const YAML::Node tensors = doc["tensors"];
  if (!tensors || !tensors.IsSequence())
    fail(source, doc, "missing 'tensors' sequence");
  for (const YAML::Node entry : tensors) {
    TensorSpec spec;
    spec.name = require_str(source, entry["name"], "tensors[].name");
    spec.kind = parse_tensor_kind(source, entry["kind"],
                                  require_str(source, entry["kind"], "tensors[].kind"));
    spec.elem_bytes = entry["elem_bytes"]
                          ? require_u64(source, entry["elem_bytes"], "elem_bytes", 1)
                          : 1;
    const YAML::Node axes = entry["axes"];
    if (!axes || !axes.IsSequence() || axes.size() == 0)
      fail(source, entry, "tensor '" + spec.name + "': missing 'axes'");
    for (const YAML::Node ax : axes) {
      AxisSpec a;
      if (ax.IsScalar()) {
        a.name = ax.as<std::string>();
        a.extent = 0;
      } else if (ax.IsSequence() && (ax.size() == 1 || ax.size() == 2)) {
        a.name = ax[0].as<std::string>();
        a.extent = ax.size() == 2 ? ax[1].as<u64>() : 0;
      } else {
        fail(source, ax, "tensor '" + spec.name +
                             "': axes entries must be [name, extent] pairs");
      }
      spec.axes.push_back(std::move(a));
    }
    g.tensors.push_back(std::move(spec));
  }

  const YAML::Node nodes = doc["nodes"];
  if (!nodes || !nodes.IsSequence()) fail(source, doc, "missing 'nodes' sequence");
  for (const YAML::Node entry : nodes) {
    OperatorNode n;
    n.name = require_str(source, entry["name"], "nodes[].name");
    n.kind = parse_kind(source, entry["kind"],
                        require_str(source, entry["kind"], "nodes[].kind"), n.fn);
    if (n.kind == OpKind::conv2d) {
      n.stride_h = require_u64(source, entry["stride_h"], "stride_h", 1);
      n.stride_w = require_u64(source, entry["stride_w"], "stride_w", 1);
      n.kernel_h = require_u64(source, entry["kernel_h"], "kernel_h", 1);
      n.kernel_w = require_u64(source, entry["kernel_w"], "kernel_w", 1);
      if (entry["pad"] && entry["pad"].as<std::string>() != "none")
        fail(source, entry["pad"], "node '" + n.name + "': only pad: none is supported");
    }
    for (const char* key : {"inputs", "outputs"}) {
      const YAML::Node list = entry[key];
      if (!list || !list.IsSequence())
        fail(source, entry, "node '" + n.name + "': missing '" + std::string(key) + "'");
      for (const YAML::Node t : list)
        (key[0] == 'i' ? n.inputs : n.outputs).push_back(t.as<std::string>());
    }
    g.nodes.push_back(std::move(n));
  }

  g.finalize();
  g = infer_shapes(std::move(g));
  g.finalize();
  return g;
}

std::string serialize_network(const NetworkGraph& graph) {
  std::ostringstream os;
  os << "version: 1\n";
  if (!graph.name.empty()) os << "name: " << graph.name << "\n";
  os << "tensors:\n";
  for (const TensorSpec& t : graph.tensors) {
    os << "  - name: " << t.name << "\n"
       << "    kind: " << to_string(t.kind) << "\n"
       << "    elem_bytes: " << t.elem_bytes << "\n"
       << "    axes: [";
    for (size_t i = 0; i < t.axes.size(); ++i) {
      if (i) os << ", ";
      os << "[" << t.axes[i].name << ", " << t.axes[i].extent << "]";
    }
    os << "]\n";
  }
  os << "nodes:\n";
  for (const OperatorNode& n : graph.nodes) {
    std::string kind = n.kind == OpKind::eltwise_unary ? to_string(n.fn)
                                                       : to_string(n.kind);
    os << "  - name: " << n.name << "\n"
       << "    kind: " << kind << "\n";
    if (n.kind == OpKind::conv2d) {
      os << "    stride_h: " << n.stride_h << "\n"
         << "    stride_w: " << n.stride_w << "\n"
         << "    kernel_h: " << n.kernel_h << "\n"
         << "    kernel_w: " << n.kernel_w << "\n";
    }
    auto list = [&os](const char* key, const std::vector<std::string>& v) {
      os << "    " << key << ": [";
      for (size_t i = 0; i < v.size(); ++i) {
        if (i) os << ", ";
        os << v[i];
      }
      os << "]\n";
    };
    list("inputs", n.inputs);
    list("outputs", n.outputs);
  }
  return os.str();
}

std::string to_string(TensorKind k) {
  switch (k) {
    case TensorKind::input: return "input";
    case TensorKind::weight: return "weight";
    case TensorKind::intermediate: return "intermediate";
    case TensorKind::output: return "output";
  }
  return "?";
}

std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::gemm: return "gemm";
    case OpKind::eltwise_unary: return "eltwise";
    case OpKind::eltwise_add: return "add";
    case OpKind::conv2d: return "conv2d";
  }
  return "?";
}

std::string to_string(EltFn f) {
  switch (f) {
    case EltFn::gelu: return "gelu";
    case EltFn::relu: return "relu";
    case EltFn::identity: return "identity";
  }
  return "?";
}

} // namespace ftl
