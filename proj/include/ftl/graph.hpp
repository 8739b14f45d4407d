#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ftl {

using u64 = std::uint64_t;
using i64 = std::int64_t;

enum class TensorKind { input, weight, intermediate, output };

struct AxisSpec {
  std::string name;
  u64 extent = 0; // 0 = to be inferred (intermediate/output tensors only)
};

struct TensorSpec {
  std::string name;
  std::vector<AxisSpec> axes;
  u64 elem_bytes = 1;
  TensorKind kind = TensorKind::intermediate;

  bool shape_known() const;
};

/// Byte size of a tensor: product of extents times elem_bytes.
/// Throws ParseError if the size is unknown or exceeds 2^48 bytes.
u64 tensor_bytes(const TensorSpec& spec);

enum class OpKind { gemm, eltwise_unary, eltwise_add, conv2d };
enum class EltFn { gelu, relu, identity };

/// Tensor operand conventions are positional:
///   gemm:    A=[M,K], B=[K,N], optional bias=[N] -> C=[M,N]
///   eltwise: in (or lhs,rhs) -> out, same shape
///   conv2d:  in=[C,H,W], w=[F,C,KH,KW] -> out=[F,OH,OW], no padding
struct OperatorNode {
  std::string name;
  OpKind kind = OpKind::eltwise_unary;
  EltFn fn = EltFn::identity;          // eltwise_unary only
  u64 stride_h = 1, stride_w = 1;      // conv2d only
  u64 kernel_h = 1, kernel_w = 1;      // conv2d only
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  bool has_bias() const { return kind == OpKind::gemm && inputs.size() == 3; }
};

class NetworkGraph {
public:
  std::string name;
  std::vector<TensorSpec> tensors;   // declaration order
  std::vector<OperatorNode> nodes;   // topological order

  const TensorSpec& tensor(const std::string& name) const;
  TensorSpec& tensor(const std::string& name);
  bool has_tensor(const std::string& name) const;
  const OperatorNode& node(const std::string& name) const;
  int node_index(const std::string& name) const;

  /// Index of the producing node, or -1 for graph inputs/weights.
  int producer(const std::string& tensor) const;
  /// Node indices consuming the tensor, one entry per use.
  const std::vector<int>& consumers(const std::string& tensor) const;

  /// Rebuild producer/consumer maps and topological order; validates
  /// arity, references, single-producer and acyclicity.
  void finalize();

private:
  std::unordered_map<std::string, int> tensor_index_;
  std::unordered_map<std::string, int> node_index_;
  std::unordered_map<std::string, int> producer_;
  std::unordered_map<std::string, std::vector<int>> consumers_;
  static const std::vector<int> no_consumers_;
};

/// Parse a model file (grammar documented in the README). Validates all
/// graph invariants and runs shape inference, so the returned graph is
/// ready for planning.
NetworkGraph parse_network(const std::string& text,
                           const std::string& source_name = "<model>");

/// Inverse of parse_network for round-tripping.
std::string serialize_network(const NetworkGraph& graph);

/// Compute intermediate/output extents from operator semantics. Declared
/// extents are cross-checked. Idempotent.
NetworkGraph infer_shapes(NetworkGraph graph);

std::string to_string(TensorKind k);
std::string to_string(OpKind k);
std::string to_string(EltFn f);

} // namespace ftl
