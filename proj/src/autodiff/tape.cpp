#include "icumort/autodiff/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "icumort/error.hpp"
#include "icumort/rng.hpp"

namespace icumort::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

Tensor make(std::size_t rows, std::size_t cols) {
  return Tensor::unchecked({rows, cols}, std::vector<double>(rows * cols, 0.0));
}

Tensor like(const Tensor& t) { return Tensor::unchecked(t.shape(), std::vector<double>(t.size(), 0.0)); }

// C = A * B^T-variants through Eigen; all row-major
Tensor matmul_kernel(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  auto A = as_matrix(a);
  auto B = as_matrix(b);
  std::size_t rows = transpose_a ? a.cols() : a.rows();
  std::size_t cols = transpose_b ? b.rows() : b.cols();
  Tensor out = make(rows, cols);
  MutMap C(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (!transpose_a && !transpose_b) C.noalias() = A * B;
  else if (transpose_a && !transpose_b) C.noalias() = A.transpose() * B;
  else if (!transpose_a && transpose_b) C.noalias() = A * B.transpose();
  else C.noalias() = A.transpose() * B.transpose();
  return out;
}

void accumulate(Tensor& into, const Tensor& g) {
  if (into.empty()) {
    into = g;
    return;
  }
  auto dst = into.mutable_values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.size() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  throw DimensionError(std::string(op) + ": cannot combine shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

Tensor reduce_to(const Tensor& g, const Tensor& target, Broadcast kind) {
  if (kind == Broadcast::Same) return g.reshaped(target.shape());
  Tensor out = like(target);
  if (kind == Broadcast::Scalar) {
    double s = 0.0;
    for (double v : g.values()) s += v;
    out[0] = s;
    return out;
  }
  std::size_t cols = g.cols();
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += g(r, c);
  return out;
}

void fill_dropout_mask(Tensor& mask, double rate, Rng& rng) {
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.mutable_values()) m = uniform01(rng) < rate ? 0.0 : keep_scale;
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Relu: return "relu";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::SoftmaxRows: return "softmax";
    case OpKind::LogSumExp: return "logsumexp";
    case OpKind::ConcatCols: return "concat";
    case OpKind::Average: return "average";
    case OpKind::Dropout: return "dropout";
    case OpKind::Reshape: return "reshape";
    case OpKind::Custom: return "custom";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// graph construction

void Tape::check_arg(NodeId id) const {
  if (id >= nodes_.size())
    throw ContractError("node " + std::to_string(id) + " does not exist on this tape");
}

NodeId Tape::push(Node node) {
  for (NodeId a : node.args) {
    check_arg(a);
    node.requires_grad = node.requires_grad || nodes_[a].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::input(std::string name, bool trainable) {
  if (inputs_.count(name)) throw ContractError("duplicate tape input '" + name + "'");
  Node n;
  n.kind = OpKind::Input;
  n.name = name;
  n.trainable = trainable;
  n.requires_grad = trainable;
  NodeId id = push(std::move(n));
  inputs_.emplace(std::move(name), id);
  return id;
}

#define ICUMORT_UNARY(method, KIND)      \
  NodeId Tape::method(NodeId a) {        \
    Node n;                              \
    n.kind = OpKind::KIND;               \
    n.args = {a};                        \
    return push(std::move(n));           \
  }

ICUMORT_UNARY(relu, Relu)
ICUMORT_UNARY(exp, Exp)
ICUMORT_UNARY(log, Log)
ICUMORT_UNARY(square, Square)
ICUMORT_UNARY(sum, Sum)
ICUMORT_UNARY(mean, Mean)
ICUMORT_UNARY(softmax_rows, SoftmaxRows)
ICUMORT_UNARY(logsumexp, LogSumExp)
#undef ICUMORT_UNARY

#define ICUMORT_BINARY(method, KIND)     \
  NodeId Tape::method(NodeId a, NodeId b) { \
    Node n;                              \
    n.kind = OpKind::KIND;               \
    n.args = {a, b};                     \
    return push(std::move(n));           \
  }

ICUMORT_BINARY(matmul, MatMul)
ICUMORT_BINARY(add, Add)
ICUMORT_BINARY(sub, Sub)
ICUMORT_BINARY(mul, Mul)
#undef ICUMORT_BINARY

NodeId Tape::scale(NodeId a, double factor) {
  if (!std::isfinite(factor)) throw ParameterError("scale factor must be finite");
  Node n;
  n.kind = OpKind::Scale;
  n.args = {a};
  n.scalar = factor;
  return push(std::move(n));
}

NodeId Tape::concat_cols(std::vector<NodeId> parts) {
  if (parts.empty()) throw ContractError("concat needs at least one input");
  Node n;
  n.kind = OpKind::ConcatCols;
  n.args = std::move(parts);
  return push(std::move(n));
}

NodeId Tape::average(std::vector<NodeId> parts) {
  if (parts.empty()) throw ContractError("average needs at least one input");
  Node n;
  n.kind = OpKind::Average;
  n.args = std::move(parts);
  return push(std::move(n));
}

NodeId Tape::dropout(NodeId a, double rate, std::uint64_t stream) {
  check_rate(rate);
  Node n;
  n.kind = OpKind::Dropout;
  n.args = {a};
  n.scalar = rate;
  n.stream = stream;
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw DimensionError("reshape extents must be positive");
  Node n;
  n.kind = OpKind::Reshape;
  n.args = {a};
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId Tape::custom(std::shared_ptr<const CustomOp> op, std::vector<NodeId> inputs) {
  if (!op || !op->forward || !op->backward)
    throw ContractError("custom op needs forward and backward rules");
  Node n;
  n.kind = OpKind::Custom;
  n.args = std::move(inputs);
  n.custom = std::move(op);
  return push(std::move(n));
}

void Tape::set_output(std::string name, NodeId node) {
  check_arg(node);
  outputs_[std::move(name)] = node;
}

NodeId Tape::output_node(std::string_view name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw ContractError("tape has no output named '" + std::string(name) + "'");
  return it->second;
}

NodeId Tape::input_node(std::string_view name) const {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) throw ContractError("tape has no input named '" + std::string(name) + "'");
  return it->second;
}

bool Tape::has_input(std::string_view name) const { return inputs_.find(name) != inputs_.end(); }

std::vector<std::string> Tape::input_names() const {
  std::vector<std::string> out;
  for (const auto& [name, id] : inputs_) out.push_back(name);
  return out;
}

std::vector<std::string> Tape::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, id] : inputs_)
    if (nodes_[id].trainable) out.push_back(name);
  return out;
}

std::vector<std::string> Tape::output_names() const {
  std::vector<std::string> out;
  for (const auto& [name, id] : outputs_) out.push_back(name);
  return out;
}

// ---------------------------------------------------------------------------
// forward

Evaluation Tape::forward(const Bindings& inputs, const ForwardOptions& options) const {
  return forward(inputs, options, {});
}

Evaluation Tape::forward(const Bindings& inputs, const ForwardOptions& options,
                         std::span<const std::string> targets) const {
  const std::size_t n = nodes_.size();
  std::vector<char> needed(n, targets.empty() ? 1 : 0);
  if (!targets.empty()) {
    for (const auto& t : targets) needed[output_node(t)] = 1;
    for (std::size_t i = n; i-- > 0;)
      if (needed[i])
        for (NodeId a : nodes_[i].args) needed[a] = 1;
  }

  Evaluation ev;
  ev.values_.resize(n);
  ev.masks_.resize(n);
  ev.computed_.assign(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    if (!needed[i]) continue;
    const Node& node = nodes_[i];
    auto arg = [&](std::size_t k) -> const Tensor& { return ev.values_[node.args[k]]; };
    Tensor out;
    const std::string_view op = op_name(node.kind);

    switch (node.kind) {
      case OpKind::Input: {
        auto it = inputs.find(node.name);
        if (it == inputs.end()) throw ContractError("tape input '" + node.name + "' is not bound");
        out = it->second;
        break;
      }
      case OpKind::MatMul: {
        const Tensor& a = arg(0);
        const Tensor& b = arg(1);
        if (a.cols() != b.rows())
          throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                               shape_string(b.shape()));
        out = matmul_kernel(a, b, false, false);
        break;
      }
      case OpKind::Add:
      case OpKind::Sub: {
        const Tensor& a = arg(0);
        const Tensor& b = arg(1);
        Broadcast kind = broadcast_kind(a, b, op);
        out = make(a.rows(), a.cols());
        const double sign = node.kind == OpKind::Add ? 1.0 : -1.0;
        const std::size_t cols = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            double bv = kind == Broadcast::Same ? b[r * cols + c] : kind == Broadcast::Row ? b[c] : b[0];
            out[r * cols + c] = a[r * cols + c] + sign * bv;
          }
        break;
      }
      case OpKind::Mul: {
        const Tensor& a = arg(0);
        const Tensor& b = arg(1);
        if (a.shape() != b.shape())
          throw DimensionError("mul: shapes differ, " + shape_string(a.shape()) + " vs " +
                               shape_string(b.shape()));
        out = like(a);
        for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
        break;
      }
      case OpKind::Scale: {
        out = arg(0);
        for (double& v : out.mutable_values()) v *= node.scalar;
        break;
      }
      case OpKind::Relu: {
        out = arg(0);
        for (double& v : out.mutable_values()) v = v > 0.0 ? v : 0.0;
        break;
      }
      case OpKind::Exp: {
        out = arg(0);
        for (double& v : out.mutable_values()) v = std::exp(v);
        break;
      }
      case OpKind::Log: {
        out = arg(0);
        for (double& v : out.mutable_values()) v = std::log(v);
        break;
      }
      case OpKind::Square: {
        out = arg(0);
        for (double& v : out.mutable_values()) v = v * v;
        break;
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        double s = 0.0;
        for (double v : arg(0).values()) s += v;
        if (node.kind == OpKind::Mean) s /= static_cast<double>(arg(0).size());
        out = Tensor::unchecked({1, 1}, {s});
        break;
      }
      case OpKind::SoftmaxRows: {
        const Tensor& a = arg(0);
        out = make(a.rows(), a.cols());
        const std::size_t cols = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, a(r, c));
          double z = 0.0;
          for (std::size_t c = 0; c < cols; ++c) z += (out[r * cols + c] = std::exp(a(r, c) - mx));
          for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
        }
        break;
      }
      case OpKind::LogSumExp: {
        const Tensor& a = arg(0);
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : a.values()) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : a.values()) z += std::exp(v - mx);
        out = Tensor::unchecked({1, 1}, {mx + std::log(z)});
        break;
      }
      case OpKind::ConcatCols: {
        std::size_t rows = arg(0).rows();
        std::size_t cols = 0;
        for (std::size_t k = 0; k < node.args.size(); ++k) {
          if (arg(k).rows() != rows)
            throw DimensionError("concat: row counts differ (" + std::to_string(rows) + " vs " +
                                 std::to_string(arg(k).rows()) + ")");
          cols += arg(k).cols();
        }
        out = make(rows, cols);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.args.size(); ++k) {
          const Tensor& p = arg(k);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < p.cols(); ++c) out[r * cols + offset + c] = p(r, c);
          offset += p.cols();
        }
        break;
      }
      case OpKind::Average: {
        const Tensor& first = arg(0);
        out = make(first.rows(), first.cols());
        for (std::size_t k = 0; k < node.args.size(); ++k) {
          const Tensor& p = arg(k);
          if (p.rows() != first.rows() || p.cols() != first.cols())
            throw DimensionError("average: shapes differ, " + shape_string(first.shape()) + " vs " +
                                 shape_string(p.shape()));
          for (std::size_t e = 0; e < p.size(); ++e) out[e] += p[e];
        }
        const double inv = 1.0 / static_cast<double>(node.args.size());
        for (double& v : out.mutable_values()) v *= inv;
        break;
      }
      case OpKind::Dropout: {
        out = arg(0);
        if (options.training && node.scalar > 0.0) {
          Tensor mask = like(out);
          Rng rng(derive_seed(options.seed, {node.stream}));
          fill_dropout_mask(mask, node.scalar, rng);
          for (std::size_t e = 0; e < out.size(); ++e) out[e] *= mask[e];
          ev.masks_[i] = std::move(mask);
        }
        break;
      }
      case OpKind::Reshape: {
        const Tensor& a = arg(0);
        if (a.size() != node.rows * node.cols)
          throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as [" +
                               std::to_string(node.rows) + "x" + std::to_string(node.cols) + "]");
        out = a.reshaped({node.rows, node.cols});
        break;
      }
      case OpKind::Custom: {
        std::vector<const Tensor*> ins;
        for (std::size_t k = 0; k < node.args.size(); ++k) ins.push_back(&arg(k));
        out = node.custom->forward(ins);
        break;
      }
    }

    if (!out.all_finite()) {
      std::string label = node.kind == OpKind::Custom ? node.custom->name : std::string(op);
      throw OverflowError("op '" + label + "' (node " + std::to_string(i) +
                          ") produced a non-finite value");
    }
    ev.values_[i] = std::move(out);
    ev.computed_[i] = 1;
  }
  ev.tape_ = this;
  return ev;
}

// ---------------------------------------------------------------------------
// backward

const Tensor& Evaluation::value(NodeId id) const {
  if (!tape_) throw StateError("evaluation holds no values; run forward first");
  if (id >= values_.size() || !computed_[id])
    throw StateError("node " + std::to_string(id) + " was not evaluated");
  return values_[id];
}

const Tensor& Evaluation::output(std::string_view name) const {
  if (!tape_) throw StateError("evaluation holds no values; run forward first");
  return value(tape_->output_node(name));
}

Gradients Evaluation::backward(std::string_view seed_output) const {
  if (!tape_) throw StateError("backward called before forward");
  const auto& nodes = tape_->nodes_;
  const NodeId seed = tape_->output_node(seed_output);
  if (!computed_[seed]) throw StateError("seed output '" + std::string(seed_output) + "' was not evaluated");
  if (values_[seed].size() != 1)
    throw ContractError("backward seed '" + std::string(seed_output) + "' must be scalar, has shape " +
                        shape_string(values_[seed].shape()));

  std::vector<Tensor> grads(nodes.size());
  grads[seed] = Tensor::unchecked(values_[seed].shape(), {1.0});

  for (std::size_t i = seed + 1; i-- > 0;) {
    const auto& node = nodes[i];
    if (grads[i].empty() || !node.requires_grad || node.kind == OpKind::Input) continue;
    const Tensor& g = grads[i];
    const Tensor& y = values_[i];
    auto x = [&](std::size_t k) -> const Tensor& { return values_[node.args[k]]; };
    auto wants = [&](std::size_t k) { return nodes[node.args[k]].requires_grad; };
    auto give = [&](std::size_t k, const Tensor& t) { accumulate(grads[node.args[k]], t); };

    switch (node.kind) {
      case OpKind::Input:
        break;
      case OpKind::MatMul:
        if (wants(0)) give(0, matmul_kernel(g, x(1), false, true));
        if (wants(1)) give(1, matmul_kernel(x(0), g, true, false));
        break;
      case OpKind::Add:
      case OpKind::Sub: {
        if (wants(0)) give(0, g);
        if (wants(1)) {
          Tensor gb = reduce_to(g, x(1), broadcast_kind(x(0), x(1), op_name(node.kind)));
          if (node.kind == OpKind::Sub)
            for (double& v : gb.mutable_values()) v = -v;
          give(1, gb);
        }
        break;
      }
      case OpKind::Mul:
        for (std::size_t k = 0; k < 2; ++k) {
          if (!wants(k)) continue;
          Tensor t = like(g);
          const Tensor& other = x(1 - k);
          for (std::size_t e = 0; e < t.size(); ++e) t[e] = g[e] * other[e];
          give(k, t);
        }
        break;
      case OpKind::Scale: {
        Tensor t = g;
        for (double& v : t.mutable_values()) v *= node.scalar;
        give(0, t);
        break;
      }
      case OpKind::Relu: {
        Tensor t = like(g);
        for (std::size_t e = 0; e < t.size(); ++e) t[e] = x(0)[e] > 0.0 ? g[e] : 0.0;
        give(0, t);
        break;
      }
      case OpKind::Exp: {
        Tensor t = like(g);
        for (std::size_t e = 0; e < t.size(); ++e) t[e] = g[e] * y[e];
        give(0, t);
        break;
      }
      case OpKind::Log: {
        Tensor t = like(g);
        for (std::size_t e = 0; e < t.size(); ++e) t[e] = g[e] / x(0)[e];
        give(0, t);
        break;
      }
      case OpKind::Square: {
        Tensor t = like(g);
        for (std::size_t e = 0; e < t.size(); ++e) t[e] = 2.0 * x(0)[e] * g[e];
        give(0, t);
        break;
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        double v = g[0];
        if (node.kind == OpKind::Mean) v /= static_cast<double>(x(0).size());
        Tensor t = like(x(0));
        for (double& e : t.mutable_values()) e = v;
        give(0, t);
        break;
      }
      case OpKind::SoftmaxRows: {
        Tensor t = like(g);
        const std::size_t cols = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            t[r * cols + c] = y[r * cols + c] * (g[r * cols + c] - dot);
        }
        give(0, t);
        break;
      }
      case OpKind::LogSumExp: {
        Tensor t = like(x(0));
        const double lse = y[0];
        for (std::size_t e = 0; e < t.size(); ++e) t[e] = g[0] * std::exp(x(0)[e] - lse);
        give(0, t);
        break;
      }
      case OpKind::ConcatCols: {
        const std::size_t cols = g.cols();
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.args.size(); ++k) {
          const Tensor& p = x(k);
          if (wants(k)) {
            Tensor t = like(p);
            for (std::size_t r = 0; r < p.rows(); ++r)
              for (std::size_t c = 0; c < p.cols(); ++c) t[r * p.cols() + c] = g[r * cols + offset + c];
            give(k, t);
          }
          offset += p.cols();
        }
        break;
      }
      case OpKind::Average: {
        Tensor t = g;
        const double inv = 1.0 / static_cast<double>(node.args.size());
        for (double& v : t.mutable_values()) v *= inv;
        for (std::size_t k = 0; k < node.args.size(); ++k)
          if (wants(k)) give(k, t.reshaped(x(k).shape()));
        break;
      }
      case OpKind::Dropout: {
        if (masks_[i].empty()) {
          give(0, g);
        } else {
          Tensor t = like(g);
          for (std::size_t e = 0; e < t.size(); ++e) t[e] = g[e] * masks_[i][e];
          give(0, t);
        }
        break;
      }
      case OpKind::Reshape:
        give(0, g.reshaped(x(0).shape()));
        break;
      case OpKind::Custom: {
        std::vector<const Tensor*> ins;
        for (std::size_t k = 0; k < node.args.size(); ++k) ins.push_back(&x(k));
        std::vector<Tensor> parts = node.custom->backward(ins, y, g);
        if (parts.size() != node.args.size())
          throw ContractError("custom op '" + node.custom->name + "' returned " +
                              std::to_string(parts.size()) + " gradients for " +
                              std::to_string(node.args.size()) + " inputs");
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (!wants(k) || parts[k].empty()) continue;
          if (parts[k].size() != x(k).size())
            throw DimensionError("custom op '" + node.custom->name + "' gradient shape mismatch");
          give(k, parts[k].reshaped(x(k).shape()));
        }
        break;
      }
    }
  }

  Gradients out;
  for (const auto& [name, id] : tape_->inputs_) {
    if (!nodes[id].trainable || !computed_[id]) continue;
    if (grads[id].empty()) out.emplace(name, like(values_[id]));
    else out.emplace(name, grads[id].reshaped(values_[id].shape()));
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed, bool training) {
  check_rate(rate);
  if (!training || rate == 0.0) return x;
  Tensor mask = like(x);
  Rng rng(seed);
  fill_dropout_mask(mask, rate, rng);
  Tensor out = x;
  for (std::size_t e = 0; e < out.size(); ++e) out[e] *= mask[e];
  return out;
}

}  // namespace icumort::ad
