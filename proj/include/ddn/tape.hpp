#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ddn/tensor.hpp"

namespace ddn {

class Tape;

// One node on the tape: a forward value plus the rule that pushes its
// output-gradient back into its parents. Values are immutable once created.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::size_t index = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad, accumulates into parents' grads.
  std::function<void(const Node&)> backprop;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape);
  }
  void accumulate(const Tensor& g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.data.size(); ++i) grad.data[i] += g.data[i];
  }
};

using Var = std::shared_ptr<Node>;

// Records ops in creation order; creation order is a topological order by
// construction since every op's inputs already exist when it is recorded.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->index = nodes_.size();
    nodes_.push_back(n);
    return n;
  }

  Var record(Tensor value, std::vector<Var> parents,
             std::function<void(const Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents)
      if (p->requires_grad) n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
    n->index = nodes_.size();
    nodes_.push_back(n);
    return n;
  }

  // Reverse sweep from a scalar loss. Visits each recorded op at most once,
  // in reverse creation order; gradients accumulate additively across fan-out.
  void backward(const Var& loss) {
    if (loss->value.size() != 1)
      throw std::logic_error("Tape::backward: loss is not a scalar");
    if (consumed_) throw std::logic_error("Tape::backward: tape already consumed");
    consumed_ = true;
    loss->ensure_grad();
    loss->grad.data[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = *nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
      n.backprop(n);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Var> nodes_;
  bool consumed_ = false;
};

}  // namespace ddn
