#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "svasp/errors.hpp"

namespace svasp {

class Tape;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major f64 array. Copies are shallow (shared buffer); `node`
// identifies the value on a Tape when it participates in autodiff.
struct Array {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  bool requires_grad = false;
  Tape* tape = nullptr;
  std::int64_t node = -1;

  Array() : data(std::make_shared<std::vector<double>>()) {}

  static Array zeros(Shape s);
  static Array full(Shape s, double v);
  static Array from(Shape s, std::vector<double> v);
  static Array scalar(double v);

  std::size_t size() const { return data->size(); }
  std::size_t rank() const { return shape.size(); }
  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }
  std::vector<double>& vec() { return *data; }
  const std::vector<double>& vec() const { return *data; }
  double operator[](std::size_t i) const { return (*data)[i]; }
  double& operator[](std::size_t i) { return (*data)[i]; }

  // scalar extraction; throws NotScalar unless size() == 1
  double value() const;

  bool tracked() const { return node >= 0; }

  // deep copy with autodiff state stripped
  Array clone() const;
};

void check_finite(const Array& a, const char* where);
bool same_shape(const Array& a, const Array& b);

}  // namespace svasp
