#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "textcnn/tensor.hpp"

namespace textcnn {

enum class Mode { train, eval };

/// Trainable (or frozen) tensor plus its gradient accumulator. When
/// grad_mask is non-empty the optimizer multiplies it into the gradient
/// before stepping; the embedding padding column uses this to stay zero.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
  Tensor<T> grad_mask;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape(), T{}),
        trainable(train) {}

  void zero_grad() { grad.fill(T{}); }
};

namespace debug {
// When non-empty, the named op scales one of its backward contributions by
// 1.01. Exists so gradient-check failure reporting can be exercised against
// a known-bad backward rule.
inline std::string backward_fault;

template <typename T>
T fault_scale(const char* op) {
  if (backward_fault.empty() || backward_fault != op) return T(1);
  return T(1.01);
}
}  // namespace debug

/// Define-by-run recording of one forward pass. Holds the value (and, once
/// backward runs, the gradient) of every intermediate, plus the backward
/// rule of every recorded op in topological order. Rebuilt per batch.
template <typename T>
class Tape {
 public:
  int add_slot(Tensor<T> value, bool requires_grad) {
    slots_.push_back(Slot{std::move(value), Tensor<T>{}, requires_grad});
    return static_cast<int>(slots_.size()) - 1;
  }

  const Tensor<T>& value(int id) const { return slots_[id].value; }
  Tensor<T>& value(int id) { return slots_[id].value; }

  bool requires_grad(int id) const { return slots_[id].requires_grad; }

  /// Gradient buffer for a slot, allocated as zeros on first use.
  Tensor<T>& grad(int id) {
    Slot& s = slots_[id];
    if (s.grad.empty()) s.grad = Tensor<T>(s.value.shape(), T{});
    return s.grad;
  }

  void record(const char* op, std::function<void(Tape&)> backward) {
    nodes_.push_back(Node{op, std::move(backward)});
  }

  std::size_t num_nodes() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss slot; each recorded op runs exactly
  /// once, in reverse order of recording.
  void backward(int loss_id) {
    if (nodes_.empty()) detail::fail("backward called before any forward op was recorded");
    if (backward_done_) detail::fail("backward already ran on this tape");
    if (slots_[loss_id].value.size() != 1)
      detail::fail(detail::str("backward requires a scalar loss, got shape ",
                               shape_str(slots_[loss_id].value.shape())));
    grad(loss_id).fill(T(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward(*this);
    backward_done_ = true;
  }

 private:
  struct Slot {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
  };
  struct Node {
    const char* op;
    std::function<void(Tape&)> backward;
  };

  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

/// Lightweight handle to a tape slot.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
};

/// Wraps a constant input tensor as a leaf; no gradient flows into it.
template <typename T>
Var<T> input(Tape<T>& tape, Tensor<T> x) {
  return Var<T>{&tape, tape.add_slot(std::move(x), false)};
}

/// Injects a parameter's current value as a variable whose backward
/// accumulates straight into the parameter gradient.
template <typename T>
Var<T> param_ref(Tape<T>& tape, Parameter<T>& p) {
  Var<T> out{&tape, tape.add_slot(p.value, p.trainable)};
  Parameter<T>* pp = &p;
  int out_id = out.id;
  tape.record("param_ref", [pp, out_id](Tape<T>& t) {
    if (!pp->trainable) return;
    const Tensor<T>& g = t.grad(out_id);
    for (std::size_t i = 0; i < g.size(); ++i) pp->grad[i] += g[i];
  });
  return out;
}

template <typename T>
void backward(Var<T> loss) {
  loss.tape->backward(loss.id);
}

}  // namespace textcnn
