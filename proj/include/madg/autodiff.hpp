#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "madg/tensor.hpp"

namespace madg {

enum class OpKind {
  leaf,
  constant,
  matmul,
  add_bias,
  relu,
  log_softmax,
  gather_label,
  mean,
  scale,
  negate,
  grl,
  add,
  clamp,
  log1m_softmax_at,
};

std::string_view op_name(OpKind kind);

/// Gradient of a saturated clamp: zero (the clamp's true derivative) or the derivative of
/// the unclamped expression, which keeps saturated losses trainable.
enum class ClampGrad { zero, pass_through };

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape for one computation. Nodes are appended in evaluation order, so
/// the node list is already topologically sorted and backward() is a single reverse scan.
///
/// A tape is single-use and single-writer: build it, call backward() once, discard it.
/// Leaves registered with leaf() keep a pointer to the caller's Tensor, which must
/// outlive the tape; backward() accumulates into that tensor's grad when it has
/// requires_grad set.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var leaf(Tensor& tensor);
  Var constant(Tensor value);

  /// (n, m) x (m, p) -> (n, p)
  Var matmul(Var a, Var b);
  /// (n, p) + (p) broadcast over rows. The only broadcasting the tape supports.
  Var add_bias(Var x, Var bias);
  Var relu(Var x);
  /// Row-wise log-softmax of an (n, k) matrix.
  Var log_softmax(Var x);
  /// (n, k) -> (n): picks x[r, labels[r]].
  Var gather_label(Var x, std::span<const std::size_t> labels);
  /// Mean of all entries -> scalar.
  Var mean(Var x);
  Var scale(Var x, double factor);
  Var negate(Var x);
  /// Gradient reversal: identity forward, multiplies the incoming gradient by -eta.
  Var grl(Var x, double eta);
  /// Elementwise sum of equally shaped operands.
  Var add(Var a, Var b);
  /// Elementwise clamp.
  Var clamp(Var x, double lo, double hi, ClampGrad mode = ClampGrad::zero);
  /// (n, k) logits -> (n): log(1 - softmax(x)[r, labels[r]]), with the probability
  /// clamped to [prob_floor, 1 - prob_floor].
  Var log1m_softmax_at(Var x, std::span<const std::size_t> labels, double prob_floor = 1e-12,
                       ClampGrad mode = ClampGrad::zero);

  const Tensor& value(Var v) const;
  OpKind kind(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Propagates d(loss)/d(node) to every node and accumulates into leaf tensors that
  /// require grad. The loss must be a single-element tensor.
  void backward(Var loss);

  /// Gradient of the last backward() pass with respect to a node.
  std::span<const double> grad(Var v) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::vector<std::size_t> labels;
    double scalar = 0.0;
    double scalar2 = 0.0;
    Tensor* target = nullptr;
    bool pass_through = false;
  };

  const Node& node(Var v) const;
  Var push(Node node);
  void backprop(const Node& node, std::span<const double> g);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace madg
