#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dalign/tensor.hpp"

namespace dalign {

struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class OpKind {
  Input,      // placeholder bound before evaluation
  Constant,
  Parameter,  // trainable leaf
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Relu,
  Exp,
  Log,
  Sigmoid,
  LogSigmoid,
  Sum,
  Mean,
  MeanRows,
  L2Norm,
  RowNorms,
  Dot,
  Softmax,
  LogSoftmax,
  Cosine,
  CosineRows,
  GatherRows,
  Pick,
  ConcatRows,
  GradReverse,
};

const char* op_name(OpKind op);

// Append-only computation graph. Every node knows its shape at construction,
// so shape mismatches surface where the graph is built. Values are computed
// lazily by forward() and cached until a leaf is rebound.
//
// Single writer. Once fully evaluated, concurrent forward() calls on the same
// graph are read-only.
class Graph {
 public:
  NodeId input(Shape shape, std::string name = {});
  NodeId constant(Tensor value);
  NodeId parameter(Tensor value, std::string name = {});

  // Binds a value to an Input leaf or replaces a Parameter's value.
  void bind(NodeId leaf, Tensor value);

  NodeId add(NodeId a, NodeId b);  // b may be same-shape, a row vector, or a scalar
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId matmul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId log_sigmoid(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId mean_rows(NodeId a);
  NodeId l2_norm(NodeId a);
  NodeId row_norms(NodeId a);
  NodeId dot(NodeId a, NodeId b);
  NodeId softmax(NodeId a);
  NodeId log_softmax(NodeId a);
  NodeId cosine(NodeId a, NodeId b);
  NodeId cosine_rows(NodeId a, NodeId b);
  NodeId gather_rows(NodeId a, std::vector<std::size_t> rows);
  NodeId pick(NodeId a, std::vector<std::size_t> columns);
  NodeId concat_rows(NodeId a, NodeId b);
  NodeId grad_reverse(NodeId a, double lambda);

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(NodeId id) const { return node(id).op; }
  const Shape& shape(NodeId id) const { return node(id).shape; }
  const std::string& name(NodeId id) const { return node(id).name; }
  const std::vector<NodeId>& parameters() const noexcept { return parameters_; }

  // True if some ReLU input, norm input, or cosine operand of the evaluated
  // graph lies within `radius` of a point where the op is not differentiable.
  bool near_kink(double radius) const;

 private:
  friend Tensor forward(Graph& graph, NodeId node);
  friend class Backward;

  struct Node {
    Node(OpKind kind, std::vector<NodeId> inputs, Shape out, Tensor v = {})
        : op(kind), operands(std::move(inputs)), shape(std::move(out)), value(std::move(v)) {}

    OpKind op;
    std::vector<NodeId> operands;
    Shape shape;
    Tensor value;
    bool evaluated = false;
    double scalar = 0.0;                // Scale factor or reversal lambda
    std::vector<std::size_t> indices;   // GatherRows / Pick
    std::string name;
  };

  const Node& node(NodeId id) const;
  Node& node(NodeId id);
  NodeId push(Node n);
  NodeId unary(OpKind op, NodeId a, Shape out);
  void evaluate(std::size_t index);
  void invalidate_from(std::size_t index);

  std::vector<Node> nodes_;
  std::vector<NodeId> parameters_;
};

// Evaluates `node` and every ancestor not yet cached.
Tensor forward(Graph& graph, NodeId node);

// Gradient of a scalar loss with respect to every parameter of the graph.
// Parameters the loss does not depend on get a zero tensor.
class Gradients {
 public:
  const Tensor& at(NodeId parameter) const;
  bool contains(NodeId parameter) const { return grads_.count(parameter) != 0; }
  const std::map<NodeId, Tensor>& all() const noexcept { return grads_; }

 private:
  friend class Backward;
  std::map<NodeId, Tensor> grads_;
};

Gradients backward(Graph& graph, NodeId scalar_loss);

}  // namespace dalign
