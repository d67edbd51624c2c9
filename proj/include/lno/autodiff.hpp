#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "lno/tensor.hpp"

namespace lno {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape.
///
/// Nodes are appended in evaluation order, which is a topological order of the
/// computation graph; `backward` walks it once in reverse. Only first-order
/// gradients are supported. A tape belongs to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Append an op result. `backward` is dropped when no input requires a gradient.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws ContractError unless
  /// `loss` has exactly one element.
  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of a node after `backward`; exact zeros if nothing reached it.
  Tensor grad(const Var& v) const;

  /// Accumulation buffer for a node, allocated (zero-filled) on first use.
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  /// Number of backward functions run by the last `backward` call.
  std::size_t backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn backward);

  std::deque<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

// Differentiable primitives. All operands must live on the same tape.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// x[r, :] + bias for every row r.
Var add_row(const Var& x, const Var& bias);
Var sum(const Var& a);
Var mean(const Var& a);
Var sqrt(const Var& a);
Var softmax_last_axis(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var gelu(const Var& x);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& x, std::size_t start, std::size_t count);

// Untaped forward evaluations of the nonlinear primitives.
Tensor softmax_last_axis(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x);
double gelu(double x);

}  // namespace lno
