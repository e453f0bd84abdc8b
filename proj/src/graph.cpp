#include "dalign/graph.hpp"

#include <algorithm>
#include <cmath>

#include "dalign/error.hpp"

namespace dalign {

namespace {

// How the right operand of an elementwise binary op is broadcast over the left.
enum Broadcast : std::size_t { kSame = 0, kRow = 1, kScalar = 2 };

Broadcast broadcast_mode(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return kSame;
  if (b.empty()) return kScalar;
  if (a.size() == 2 && b.size() == 1 && a[1] == b[0]) return kRow;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_to_string(a) +
                   " and " + shape_to_string(b));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot_of(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine_of(std::span<const double> a, std::span<const double> b) {
  const double na = norm_of(a);
  const double nb = norm_of(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateFeatureError("cosine similarity of a zero-norm vector");
  }
  return std::clamp(dot_of(a, b) / (na * nb), -1.0, 1.0);
}

// d cos(a,b) / d a, accumulated into `out` scaled by g.
void cosine_grad(std::span<const double> a, std::span<const double> b, double g,
                 std::span<double> out) {
  const double na = norm_of(a);
  const double nb = norm_of(b);
  const double c = dot_of(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] += g * (b[i] / (na * nb) - c * a[i] / (na * na));
  }
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw RankError(std::string(op) + ": expected rank " + std::to_string(rank) +
                    ", got " + shape_to_string(s));
  }
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::Relu: return "relu";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LogSigmoid: return "log_sigmoid";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::MeanRows: return "mean_rows";
    case OpKind::L2Norm: return "l2_norm";
    case OpKind::RowNorms: return "row_norms";
    case OpKind::Dot: return "dot";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::Cosine: return "cosine";
    case OpKind::CosineRows: return "cosine_rows";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::Pick: return "pick";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::GradReverse: return "grad_reverse";
  }
  return "?";
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw MissingInputError("node " + std::to_string(id.index) + " does not exist");
  }
  return nodes_[id.index];
}

Graph::Node& Graph::node(NodeId id) {
  if (id.index >= nodes_.size()) {
    throw MissingInputError("node " + std::to_string(id.index) + " does not exist");
  }
  return nodes_[id.index];
}

NodeId Graph::push(Node n) {
  for (NodeId op : n.operands) node(op);  // existence check
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

NodeId Graph::unary(OpKind op, NodeId a, Shape out) {
  Node n{op, {a}, std::move(out), {}};
  return push(std::move(n));
}

NodeId Graph::input(Shape shape, std::string name) {
  Node n{OpKind::Input, {}, std::move(shape), {}};
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor value) {
  Node n{OpKind::Constant, {}, value.shape(), std::move(value)};
  n.evaluated = true;
  return push(std::move(n));
}

NodeId Graph::parameter(Tensor value, std::string name) {
  Node n{OpKind::Parameter, {}, value.shape(), std::move(value)};
  n.evaluated = true;
  n.name = std::move(name);
  NodeId id = push(std::move(n));
  parameters_.push_back(id);
  return id;
}

void Graph::bind(NodeId leaf, Tensor value) {
  Node& n = node(leaf);
  if (n.op != OpKind::Input && n.op != OpKind::Parameter) {
    throw ConfigError(std::string("cannot bind a value to a ") + op_name(n.op) + " node");
  }
  if (value.shape() != n.shape) {
    throw ShapeError("bind: node expects " + shape_to_string(n.shape) + ", got " +
                     shape_to_string(value.shape()));
  }
  n.value = std::move(value);
  n.evaluated = true;
  invalidate_from(leaf.index + 1);
}

void Graph::invalidate_from(std::size_t index) {
  for (std::size_t i = index; i < nodes_.size(); ++i) {
    OpKind op = nodes_[i].op;
    if (op != OpKind::Input && op != OpKind::Constant && op != OpKind::Parameter) {
      nodes_[i].evaluated = false;
    }
  }
}

NodeId Graph::add(NodeId a, NodeId b) {
  Broadcast m = broadcast_mode("add", shape(a), shape(b));
  Node n{OpKind::Add, {a, b}, shape(a), {}};
  n.indices = {m};
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  Broadcast m = broadcast_mode("sub", shape(a), shape(b));
  Node n{OpKind::Sub, {a, b}, shape(a), {}};
  n.indices = {m};
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  Broadcast m = broadcast_mode("mul", shape(a), shape(b));
  Node n{OpKind::Mul, {a, b}, shape(a), {}};
  n.indices = {m};
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double factor) {
  Node n{OpKind::Scale, {a}, shape(a), {}};
  n.scalar = factor;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  require_rank("matmul", shape(a), 2);
  require_rank("matmul", shape(b), 2);
  if (shape(a)[1] != shape(b)[0]) {
    throw ShapeError("matmul: inner dimensions differ in " + shape_to_string(shape(a)) +
                     " and " + shape_to_string(shape(b)));
  }
  return push(Node{OpKind::MatMul, {a, b}, Shape{shape(a)[0], shape(b)[1]}, {}});
}

NodeId Graph::relu(NodeId a) { return unary(OpKind::Relu, a, shape(a)); }
NodeId Graph::exp(NodeId a) { return unary(OpKind::Exp, a, shape(a)); }
NodeId Graph::log(NodeId a) { return unary(OpKind::Log, a, shape(a)); }
NodeId Graph::sigmoid(NodeId a) { return unary(OpKind::Sigmoid, a, shape(a)); }
NodeId Graph::log_sigmoid(NodeId a) { return unary(OpKind::LogSigmoid, a, shape(a)); }
NodeId Graph::sum(NodeId a) { return unary(OpKind::Sum, a, Shape{}); }

NodeId Graph::mean(NodeId a) {
  if (shape_size(shape(a)) == 0) throw EmptyBatchError("mean of an empty tensor");
  return unary(OpKind::Mean, a, Shape{});
}

NodeId Graph::mean_rows(NodeId a) {
  require_rank("mean_rows", shape(a), 2);
  if (shape(a)[0] == 0) throw EmptyBatchError("mean_rows of an empty batch");
  return unary(OpKind::MeanRows, a, Shape{shape(a)[1]});
}

NodeId Graph::l2_norm(NodeId a) { return unary(OpKind::L2Norm, a, Shape{}); }

NodeId Graph::row_norms(NodeId a) {
  require_rank("row_norms", shape(a), 2);
  return unary(OpKind::RowNorms, a, Shape{shape(a)[0]});
}

NodeId Graph::dot(NodeId a, NodeId b) {
  require_rank("dot", shape(a), 1);
  if (shape(a) != shape(b)) {
    throw ShapeError("dot: shapes " + shape_to_string(shape(a)) + " and " +
                     shape_to_string(shape(b)) + " differ");
  }
  return push(Node{OpKind::Dot, {a, b}, Shape{}, {}});
}

NodeId Graph::softmax(NodeId a) {
  if (shape(a).empty()) throw RankError("softmax needs rank >= 1");
  return unary(OpKind::Softmax, a, shape(a));
}

NodeId Graph::log_softmax(NodeId a) {
  if (shape(a).empty()) throw RankError("log_softmax needs rank >= 1");
  return unary(OpKind::LogSoftmax, a, shape(a));
}

NodeId Graph::cosine(NodeId a, NodeId b) {
  require_rank("cosine", shape(a), 1);
  if (shape(a) != shape(b)) {
    throw ShapeError("cosine: shapes " + shape_to_string(shape(a)) + " and " +
                     shape_to_string(shape(b)) + " differ");
  }
  return push(Node{OpKind::Cosine, {a, b}, Shape{}, {}});
}

NodeId Graph::cosine_rows(NodeId a, NodeId b) {
  require_rank("cosine_rows", shape(a), 2);
  if (shape(a) != shape(b)) {
    throw ShapeError("cosine_rows: shapes " + shape_to_string(shape(a)) + " and " +
                     shape_to_string(shape(b)) + " differ");
  }
  return push(Node{OpKind::CosineRows, {a, b}, Shape{shape(a)[0]}, {}});
}

NodeId Graph::gather_rows(NodeId a, std::vector<std::size_t> rows) {
  require_rank("gather_rows", shape(a), 2);
  for (std::size_t r : rows) {
    if (r >= shape(a)[0]) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       shape_to_string(shape(a)));
    }
  }
  Node n{OpKind::GatherRows, {a}, Shape{rows.size(), shape(a)[1]}, {}};
  n.indices = std::move(rows);
  return push(std::move(n));
}

NodeId Graph::pick(NodeId a, std::vector<std::size_t> columns) {
  require_rank("pick", shape(a), 2);
  if (columns.size() != shape(a)[0]) {
    throw ShapeError("pick: " + std::to_string(columns.size()) + " columns for " +
                     shape_to_string(shape(a)));
  }
  for (std::size_t c : columns) {
    if (c >= shape(a)[1]) {
      throw ShapeError("pick: column " + std::to_string(c) + " out of range for " +
                       shape_to_string(shape(a)));
    }
  }
  Node n{OpKind::Pick, {a}, Shape{shape(a)[0]}, {}};
  n.indices = std::move(columns);
  return push(std::move(n));
}

NodeId Graph::concat_rows(NodeId a, NodeId b) {
  require_rank("concat_rows", shape(a), 2);
  require_rank("concat_rows", shape(b), 2);
  if (shape(a)[1] != shape(b)[1]) {
    throw ShapeError("concat_rows: widths differ in " + shape_to_string(shape(a)) + " and " +
                     shape_to_string(shape(b)));
  }
  return push(
      Node{OpKind::ConcatRows, {a, b}, Shape{shape(a)[0] + shape(b)[0], shape(a)[1]}, {}});
}

NodeId Graph::grad_reverse(NodeId a, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("gradient reversal lambda must be finite and >= 0, got " +
                      std::to_string(lambda));
  }
  Node n{OpKind::GradReverse, {a}, shape(a), {}};
  n.scalar = lambda;
  return push(std::move(n));
}

void Graph::evaluate(std::size_t index) {
  Node& n = nodes_[index];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.operands[k].index].value; };
  Tensor out(n.shape);
  auto o = out.values();

  switch (n.op) {
    case OpKind::Input:
      throw MissingInputError("input node " + std::to_string(index) +
                              (n.name.empty() ? "" : " ('" + n.name + "')") + " is unbound");
    case OpKind::Constant:
    case OpKind::Parameter:
      return;
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t width = b.size();
      for (std::size_t i = 0; i < o.size(); ++i) {
        double bv = n.indices[0] == kSame ? b[i] : n.indices[0] == kRow ? b[i % width] : b[0];
        o[i] = n.op == OpKind::Add ? a[i] + bv : n.op == OpKind::Sub ? a[i] - bv : a[i] * bv;
      }
      break;
    }
    case OpKind::Scale:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = n.scalar * in(0)[i];
      break;
    case OpKind::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
          const double av = a[i * k + t];
          for (std::size_t j = 0; j < p; ++j) o[i * p + j] += av * b[t * p + j];
        }
      }
      break;
    }
    case OpKind::Relu:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = in(0)[i] > 0.0 ? in(0)[i] : 0.0;
      break;
    case OpKind::Exp:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(in(0)[i]);
      break;
    case OpKind::Log:
      for (std::size_t i = 0; i < o.size(); ++i) {
        if (!(in(0)[i] > 0.0)) {
          throw DomainError("log of non-positive value " + std::to_string(in(0)[i]));
        }
        o[i] = std::log(in(0)[i]);
      }
      break;
    case OpKind::Sigmoid:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = stable_sigmoid(in(0)[i]);
      break;
    case OpKind::LogSigmoid:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = stable_log_sigmoid(in(0)[i]);
      break;
    case OpKind::Sum: {
      double s = 0.0;
      for (double v : in(0).values()) s += v;
      o[0] = s;
      break;
    }
    case OpKind::Mean: {
      double s = 0.0;
      for (double v : in(0).values()) s += v;
      o[0] = s / static_cast<double>(in(0).size());
      break;
    }
    case OpKind::MeanRows: {
      const Tensor& a = in(0);
      const std::size_t rows = a.shape()[0], d = a.shape()[1];
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) o[j] += a[r * d + j];
      }
      for (double& v : o) v /= static_cast<double>(rows);
      break;
    }
    case OpKind::L2Norm:
      o[0] = norm_of(in(0).values());
      break;
    case OpKind::RowNorms:
      for (std::size_t r = 0; r < o.size(); ++r) o[r] = norm_of(in(0).row(r));
      break;
    case OpKind::Dot:
      o[0] = dot_of(in(0).values(), in(1).values());
      break;
    case OpKind::Softmax:
    case OpKind::LogSoftmax: {
      const Tensor& a = in(0);
      const std::size_t d = a.shape().back();
      for (std::size_t base = 0; base < a.size(); base += d) {
        double mx = a[base];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, a[base + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += std::exp(a[base + j] - mx);
        const double log_z = std::log(z);
        for (std::size_t j = 0; j < d; ++j) {
          const double lp = a[base + j] - mx - log_z;
          o[base + j] = n.op == OpKind::Softmax ? std::exp(lp) : lp;
        }
      }
      break;
    }
    case OpKind::Cosine:
      o[0] = cosine_of(in(0).values(), in(1).values());
      break;
    case OpKind::CosineRows:
      for (std::size_t r = 0; r < o.size(); ++r) o[r] = cosine_of(in(0).row(r), in(1).row(r));
      break;
    case OpKind::GatherRows: {
      const Tensor& a = in(0);
      const std::size_t d = a.shape()[1];
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        auto src = a.row(n.indices[r]);
        std::copy(src.begin(), src.end(), o.begin() + static_cast<std::ptrdiff_t>(r * d));
      }
      break;
    }
    case OpKind::Pick:
      for (std::size_t r = 0; r < o.size(); ++r) o[r] = in(0).at(r, n.indices[r]);
      break;
    case OpKind::ConcatRows: {
      auto a = in(0).values();
      auto b = in(1).values();
      std::copy(a.begin(), a.end(), o.begin());
      std::copy(b.begin(), b.end(), o.begin() + static_cast<std::ptrdiff_t>(a.size()));
      break;
    }
    case OpKind::GradReverse:
      std::copy(in(0).values().begin(), in(0).values().end(), o.begin());
      break;
  }
  n.value = std::move(out);
  n.evaluated = true;
}

Tensor forward(Graph& graph, NodeId target) {
  graph.node(target);
  std::vector<char> needed(target.index + 1, 0);
  needed[target.index] = 1;
  for (std::size_t i = target.index + 1; i-- > 0;) {
    if (!needed[i] || graph.nodes_[i].evaluated) continue;
    for (NodeId op : graph.nodes_[i].operands) needed[op.index] = 1;
  }
  for (std::size_t i = 0; i <= target.index; ++i) {
    if (needed[i] && !graph.nodes_[i].evaluated) graph.evaluate(i);
  }
  return graph.nodes_[target.index].value;
}

bool Graph::near_kink(double radius) const {
  for (const Node& n : nodes_) {
    if (!n.evaluated) continue;
    switch (n.op) {
      case OpKind::Relu:
        for (double v : nodes_[n.operands[0].index].value.values()) {
          if (std::abs(v) <= radius) return true;
        }
        break;
      case OpKind::L2Norm:
      case OpKind::Cosine:
        if (n.op == OpKind::L2Norm && n.value[0] <= radius) return true;
        if (n.op == OpKind::Cosine) {
          for (NodeId op : n.operands) {
            if (norm_of(nodes_[op.index].value.values()) <= radius) return true;
          }
        }
        break;
      case OpKind::RowNorms:
        for (double v : n.value.values()) {
          if (v <= radius) return true;
        }
        break;
      case OpKind::CosineRows:
        for (NodeId op : n.operands) {
          const Tensor& t = nodes_[op.index].value;
          for (std::size_t r = 0; r < t.shape()[0]; ++r) {
            if (norm_of(t.row(r)) <= radius) return true;
          }
        }
        break;
      default:
        break;
    }
  }
  return false;
}

const Tensor& Gradients::at(NodeId parameter) const {
  auto it = grads_.find(parameter);
  if (it == grads_.end()) {
    throw MissingInputError("no gradient recorded for node " + std::to_string(parameter.index));
  }
  return it->second;
}

class Backward {
 public:
  static Gradients run(Graph& g, NodeId loss) {
    if (!g.shape(loss).empty()) {
      throw RankError("backward needs a scalar loss, got shape " +
                      shape_to_string(g.shape(loss)));
    }
    forward(g, loss);

    std::vector<Tensor> adj(loss.index + 1);
    std::vector<char> has(loss.index + 1, 0);
    adj[loss.index] = Tensor::scalar(1.0);
    has[loss.index] = 1;

    auto accum = [&](NodeId target) -> std::span<double> {
      if (!has[target.index]) {
        adj[target.index] = Tensor(g.shape(target));
        has[target.index] = 1;
      }
      return adj[target.index].values();
    };

    for (std::size_t i = loss.index + 1; i-- > 0;) {
      if (!has[i]) continue;
      const Graph::Node& n = g.nodes_[i];
      const Tensor& up = adj[i];
      auto val = [&](std::size_t k) -> const Tensor& { return g.nodes_[n.operands[k].index].value; };

      switch (n.op) {
        case OpKind::Input:
        case OpKind::Constant:
        case OpKind::Parameter:
          break;
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul: {
          const Tensor& a = val(0);
          const Tensor& b = val(1);
          const std::size_t mode = n.indices[0];
          const std::size_t width = b.size();
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < up.size(); ++k) {
            const double bv = mode == kSame ? b[k] : mode == kRow ? b[k % width] : b[0];
            ga[k] += n.op == OpKind::Mul ? up[k] * bv : up[k];
          }
          auto gb = accum(n.operands[1]);
          for (std::size_t k = 0; k < up.size(); ++k) {
            const std::size_t j = mode == kSame ? k : mode == kRow ? k % width : 0;
            double d = n.op == OpKind::Add ? up[k] : n.op == OpKind::Sub ? -up[k] : up[k] * a[k];
            gb[j] += d;
          }
          break;
        }
        case OpKind::Scale: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < up.size(); ++k) ga[k] += n.scalar * up[k];
          break;
        }
        case OpKind::MatMul: {
          const Tensor& a = val(0);
          const Tensor& b = val(1);
          const std::size_t m = a.shape()[0], kk = a.shape()[1], p = b.shape()[1];
          auto ga = accum(n.operands[0]);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t t = 0; t < kk; ++t) {
              double s = 0.0;
              for (std::size_t c = 0; c < p; ++c) s += up[r * p + c] * b[t * p + c];
              ga[r * kk + t] += s;
            }
          }
          auto gb = accum(n.operands[1]);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t t = 0; t < kk; ++t) {
              const double av = a[r * kk + t];
              for (std::size_t c = 0; c < p; ++c) gb[t * p + c] += av * up[r * p + c];
            }
          }
          break;
        }
        case OpKind::Relu: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < up.size(); ++k) ga[k] += val(0)[k] > 0.0 ? up[k] : 0.0;
          break;
        }
        case OpKind::Exp: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < up.size(); ++k) ga[k] += up[k] * n.value[k];
          break;
        }
        case OpKind::Log: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < up.size(); ++k) ga[k] += up[k] / val(0)[k];
          break;
        }
        case OpKind::Sigmoid: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < up.size(); ++k) {
            ga[k] += up[k] * n.value[k] * (1.0 - n.value[k]);
          }
          break;
        }
        case OpKind::LogSigmoid: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < up.size(); ++k) ga[k] += up[k] * stable_sigmoid(-val(0)[k]);
          break;
        }
        case OpKind::Sum:
        case OpKind::Mean: {
          auto ga = accum(n.operands[0]);
          const double s = n.op == OpKind::Sum ? up[0] : up[0] / static_cast<double>(ga.size());
          for (double& v : ga) v += s;
          break;
        }
        case OpKind::MeanRows: {
          const std::size_t rows = val(0).shape()[0], d = val(0).shape()[1];
          auto ga = accum(n.operands[0]);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += up[j] / static_cast<double>(rows);
          }
          break;
        }
        case OpKind::L2Norm: {
          auto ga = accum(n.operands[0]);
          const double nv = n.value[0];
          if (nv > 0.0) {
            for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += up[0] * val(0)[k] / nv;
          }
          break;
        }
        case OpKind::RowNorms: {
          const std::size_t d = val(0).shape()[1];
          auto ga = accum(n.operands[0]);
          for (std::size_t r = 0; r < up.size(); ++r) {
            const double nv = n.value[r];
            if (nv == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += up[r] * val(0)[r * d + j] / nv;
          }
          break;
        }
        case OpKind::Dot: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += up[0] * val(1)[k];
          auto gb = accum(n.operands[1]);
          for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += up[0] * val(0)[k];
          break;
        }
        case OpKind::Softmax:
        case OpKind::LogSoftmax: {
          const std::size_t d = n.shape.back();
          auto ga = accum(n.operands[0]);
          for (std::size_t base = 0; base < up.size(); base += d) {
            if (n.op == OpKind::Softmax) {
              double s = 0.0;
              for (std::size_t j = 0; j < d; ++j) s += up[base + j] * n.value[base + j];
              for (std::size_t j = 0; j < d; ++j) {
                ga[base + j] += n.value[base + j] * (up[base + j] - s);
              }
            } else {
              double s = 0.0;
              for (std::size_t j = 0; j < d; ++j) s += up[base + j];
              for (std::size_t j = 0; j < d; ++j) {
                ga[base + j] += up[base + j] - std::exp(n.value[base + j]) * s;
              }
            }
          }
          break;
        }
        case OpKind::Cosine: {
          auto ga = accum(n.operands[0]);
          cosine_grad(val(0).values(), val(1).values(), up[0], ga);
          auto gb = accum(n.operands[1]);
          cosine_grad(val(1).values(), val(0).values(), up[0], gb);
          break;
        }
        case OpKind::CosineRows: {
          const std::size_t d = val(0).shape()[1];
          auto ga = accum(n.operands[0]);
          for (std::size_t r = 0; r < up.size(); ++r) {
            cosine_grad(val(0).row(r), val(1).row(r), up[r], ga.subspan(r * d, d));
          }
          auto gb = accum(n.operands[1]);
          for (std::size_t r = 0; r < up.size(); ++r) {
            cosine_grad(val(1).row(r), val(0).row(r), up[r], gb.subspan(r * d, d));
          }
          break;
        }
        case OpKind::GatherRows: {
          const std::size_t d = n.shape[1];
          auto ga = accum(n.operands[0]);
          for (std::size_t r = 0; r < n.indices.size(); ++r) {
            for (std::size_t j = 0; j < d; ++j) ga[n.indices[r] * d + j] += up[r * d + j];
          }
          break;
        }
        case OpKind::Pick: {
          const std::size_t d = val(0).shape()[1];
          auto ga = accum(n.operands[0]);
          for (std::size_t r = 0; r < up.size(); ++r) ga[r * d + n.indices[r]] += up[r];
          break;
        }
        case OpKind::ConcatRows: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += up[k];
          auto gb = accum(n.operands[1]);
          for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += up[ga.size() + k];
          break;
        }
        case OpKind::GradReverse: {
          auto ga = accum(n.operands[0]);
          for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += -n.scalar * up[k];
          break;
        }
      }
    }

    Gradients out;
    for (NodeId p : g.parameters_) {
      if (p.index <= loss.index && has[p.index]) {
        out.grads_.emplace(p, std::move(adj[p.index]));
      } else {
        out.grads_.emplace(p, Tensor(g.shape(p)));
      }
    }
    return out;
  }
};

Gradients backward(Graph& graph, NodeId scalar_loss) {
  graph.shape(scalar_loss);
  return Backward::run(graph, scalar_loss);
}

}  // namespace dalign
