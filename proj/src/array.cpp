#include "svasp/array.hpp"

#include <cmath>
#include <sstream>

namespace svasp {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Array Array::zeros(Shape s) {
  Array a;
  a.shape = std::move(s);
  a.data = std::make_shared<std::vector<double>>(numel(a.shape), 0.0);
  return a;
}

Array Array::full(Shape s, double v) {
  Array a = zeros(std::move(s));
  for (double& x : *a.data) x = v;
  return a;
}

Array Array::from(Shape s, std::vector<double> v) {
  if (numel(s) != v.size())
    throw ShapeMismatch("Array::from: " + shape_str(s) + " does not hold " +
                        std::to_string(v.size()) + " values");
  Array a;
  a.shape = std::move(s);
  a.data = std::make_shared<std::vector<double>>(std::move(v));
  return a;
}

Array Array::scalar(double v) { return from({1}, {v}); }

double Array::value() const {
  if (size() != 1) throw NotScalar("expected scalar, got shape " + shape_str(shape));
  return (*data)[0];
}

Array Array::clone() const {
  Array a;
  a.shape = shape;
  a.data = std::make_shared<std::vector<double>>(*data);
  return a;
}

void check_finite(const Array& a, const char* where) {
  for (double x : *a.data)
    if (!std::isfinite(x)) throw NonFinite(std::string(where) + ": non-finite value");
}

bool same_shape(const Array& a, const Array& b) { return a.shape == b.shape; }

}  // namespace svasp
