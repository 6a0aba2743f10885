#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icumort/autodiff/tensor.hpp"

namespace icumort::ad {

using NodeId = std::size_t;
using Bindings = std::map<std::string, Tensor, std::less<>>;
using Gradients = std::map<std::string, Tensor, std::less<>>;

enum class OpKind {
  Input,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Relu,
  Exp,
  Log,
  Square,
  Sum,
  Mean,
  SoftmaxRows,
  LogSumExp,
  ConcatCols,
  Average,
  Dropout,
  Reshape,
  Custom,
};

std::string_view op_name(OpKind kind);

/// User-defined primitive. `backward` returns one tensor per input holding
/// d(output)/d(input) contracted with the output gradient; an empty tensor
/// means "no gradient" for that input.
struct CustomOp {
  using Inputs = std::span<const Tensor* const>;
  std::string name;
  std::function<Tensor(Inputs inputs)> forward;
  std::function<std::vector<Tensor>(Inputs inputs, const Tensor& output,
                                    const Tensor& output_grad)>
      backward;
};

struct ForwardOptions {
  bool training = false;     // enables dropout
  std::uint64_t seed = 0;    // dropout masks derive from (seed, stream)
};

class Evaluation;

/// A static computation graph. Nodes are appended in topological order, so the
/// graph is acyclic by construction. Building mutates the tape; evaluating it
/// does not, and one tape may be evaluated concurrently from several threads.
class Tape {
 public:
  NodeId input(std::string name, bool trainable = false);

  NodeId matmul(NodeId a, NodeId b);
  // b may match a's shape, be a single row broadcast over a's rows, or be 1x1
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId square(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId softmax_rows(NodeId a);
  // log of the sum of exp over every element, computed with max subtraction
  NodeId logsumexp(NodeId a);
  NodeId concat_cols(std::vector<NodeId> parts);
  NodeId average(std::vector<NodeId> parts);
  // inverted dropout; `stream` keys the mask RNG independently of node ids
  NodeId dropout(NodeId a, double rate, std::uint64_t stream);
  NodeId reshape(NodeId a, std::size_t rows, std::size_t cols);
  NodeId custom(std::shared_ptr<const CustomOp> op, std::vector<NodeId> inputs);

  void set_output(std::string name, NodeId node);
  NodeId output_node(std::string_view name) const;
  NodeId input_node(std::string_view name) const;
  bool has_input(std::string_view name) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::vector<std::string> input_names() const;
  std::vector<std::string> trainable_names() const;
  std::vector<std::string> output_names() const;

  /// Evaluates every node.
  Evaluation forward(const Bindings& inputs, const ForwardOptions& options = {}) const;
  /// Evaluates only the ancestors of the named outputs; unrelated inputs may be
  /// left unbound.
  Evaluation forward(const Bindings& inputs, const ForwardOptions& options,
                     std::span<const std::string> targets) const;

 private:
  friend class Evaluation;

  struct Node {
    OpKind kind = OpKind::Input;
    std::vector<NodeId> args;
    std::string name;  // input name
    bool trainable = false;
    bool requires_grad = false;
    double scalar = 0.0;
    std::uint64_t stream = 0;
    std::size_t rows = 0, cols = 0;
    std::shared_ptr<const CustomOp> custom;
  };

  NodeId push(Node node);
  void check_arg(NodeId id) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> inputs_;
  std::map<std::string, NodeId, std::less<>> outputs_;
};

/// Values of one forward pass, retained for the backward pass. The tape must
/// outlive the evaluation.
class Evaluation {
 public:
  Evaluation() = default;

  bool evaluated() const noexcept { return tape_ != nullptr; }
  const Tensor& value(NodeId id) const;
  const Tensor& output(std::string_view name) const;

  /// Gradients of a scalar output with respect to every trainable input that
  /// the output depends on (others are reported as zeros).
  Gradients backward(std::string_view seed_output) const;

 private:
  friend class Tape;

  const Tape* tape_ = nullptr;
  std::vector<Tensor> values_;
  std::vector<Tensor> masks_;  // dropout masks, indexed by node
  std::vector<char> computed_;
};

/// Standalone inverted dropout with the same mask generator as the tape op.
Tensor dropout(const Tensor& x, double rate, std::uint64_t seed, bool training);

}  // namespace icumort::ad
