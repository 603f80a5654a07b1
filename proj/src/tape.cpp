#include "svasp/tape.hpp"

#include <algorithm>

namespace svasp {

Array Tape::leaf(const Array& value, bool requires_grad) {
  Array out = value;
  out.requires_grad = requires_grad;
  out.tape = this;
  out.node = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(Node{{}, out, nullptr});
  adjoints_.emplace_back();
  return out;
}

Array Tape::record(std::vector<Array> inputs, Array output, BackwardRule rule) {
  output.requires_grad = true;
  output.tape = this;
  output.node = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(Node{std::move(inputs), output, std::move(rule)});
  adjoints_.emplace_back();
  return output;
}

void Tape::backward(const Array& loss) {
  if (loss.size() != 1) throw NotScalar("backward: loss has shape " + shape_str(loss.shape));
  if (loss.tape != this || !loss.tracked())
    throw Error("backward: loss is not tracked on this tape");

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    adjoints_[i].assign(nodes_[i].output.size(), 0.0);
  }
  adjoints_[static_cast<std::size_t>(loss.node)][0] = 1.0;

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.backward) n.backward(*this, n);
  }
}

Array Tape::grad_of(const Array& a) const {
  if (a.tape != this || !a.tracked()) throw Error("grad_of: array is not tracked on this tape");
  const auto& adj = adjoints_[static_cast<std::size_t>(a.node)];
  Array g = Array::zeros(a.shape);
  if (!adj.empty()) std::copy(adj.begin(), adj.end(), g.ptr());
  return g;
}

double* Tape::adjoint(const Array& a) {
  if (a.tape != this || !a.tracked()) return nullptr;
  return adjoints_[static_cast<std::size_t>(a.node)].data();
}

const double* Tape::adjoint(const Array& a) const {
  if (a.tape != this || !a.tracked()) return nullptr;
  return adjoints_[static_cast<std::size_t>(a.node)].data();
}

}  // namespace svasp
