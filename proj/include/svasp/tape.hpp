#pragma once

#include <functional>
#include <vector>

#include "svasp/array.hpp"

namespace svasp {

// Wengert list: one node per leaf or recorded primitive application, in
// execution order. Node index doubles as the id of the node's output value.
class Tape {
 public:
  struct Node;
  using BackwardRule = std::function<void(Tape&, const Node&)>;

  struct Node {
    std::vector<Array> inputs;  // shallow copies; untracked inputs keep node == -1
    Array output;
    BackwardRule backward;  // null for leaves
  };

  // registers `value` as a leaf and returns a handle bound to this tape
  Array leaf(const Array& value, bool requires_grad = true);

  // used by apply_primitive; returns `output` bound to the new node
  Array record(std::vector<Array> inputs, Array output, BackwardRule rule);

  // reverse sweep from a scalar loss; adjoints are zeroed first, so replaying
  // the same tape gives bitwise-identical gradients
  void backward(const Array& loss);

  // gradient of a tracked array after backward(); zero-filled when the value
  // never influenced the loss
  Array grad_of(const Array& a) const;

  // adjoint buffer of a node, or nullptr for untracked arrays (rules use this)
  double* adjoint(const Array& a);
  const double* adjoint(const Array& a) const;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }

 private:
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> adjoints_;
};

}  // namespace svasp
