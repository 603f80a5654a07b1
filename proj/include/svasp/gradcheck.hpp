#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svasp/array.hpp"

namespace svasp {

using ScalarFn = std::function<double(const Array&)>;

// central difference (f(x + h e_i) - f(x - h e_i)) / 2h per element;
// f must be deterministic and side-effect-free
Array finite_difference_gradient(const ScalarFn& f, const Array& x, double step);

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  std::vector<GradCheckCase> cases;
  int failure_count() const;
};

// Compares backward() with the finite-difference oracle on small random
// instances: every primitive, the style statistics, and the attack's
// style-leaf gradients.
GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t instances = 20,
                              double tolerance = 1e-4);

}  // namespace svasp
