#pragma once

#include <vector>

#include "svasp/array.hpp"
#include "svasp/rng.hpp"
#include "svasp/tape.hpp"

namespace svasp {

enum class Primitive {
  Add,
  Sub,
  Mul,
  Div,
  Matmul,
  Conv2d,
  Relu,
  AvgPool2d,
  MeanOverAxes,
  VarOverAxes,
  Sqrt,
  Broadcast,
  Reshape,
  Concat,
  Scale,
  Exp,
  Log,
  Softmax,
  Dropout,
};

const char* primitive_name(Primitive p);

struct Attrs {
  std::vector<std::size_t> axes;  // reduction axes (mean/var)
  Shape target;                   // broadcast/reshape target shape
  std::size_t axis = 0;           // concat axis
  double factor = 1.0;            // scale multiplier
  double rate = 0.0;              // dropout rate
  RngStream* rng = nullptr;       // dropout mask source
  const std::vector<double>* fixed_mask = nullptr;  // test hook: pre-drawn 0/1 keep mask
};

// Single dispatch point for all differentiable operations. Computes eagerly;
// records a tape node when any input is tracked. Conv kernels are 3x3 stride 1
// with zero same-padding; pooling is 2x2 average stride 2; softmax acts on the
// last axis.
Array apply_primitive(Primitive kind, const std::vector<Array>& inputs, const Attrs& attrs = {});

namespace ops {

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array div(const Array& a, const Array& b);
Array matmul(const Array& a, const Array& b);
Array conv2d(const Array& x, const Array& w);
Array conv2d(const Array& x, const Array& w, const Array& bias);
Array relu(const Array& x);
Array avgpool2d(const Array& x);
Array mean_over_axes(const Array& x, std::vector<std::size_t> axes);
Array var_over_axes(const Array& x, std::vector<std::size_t> axes);
Array sqrt(const Array& x);
Array broadcast(const Array& x, Shape target);
Array reshape(const Array& x, Shape target);
Array concat(const std::vector<Array>& xs, std::size_t axis);
Array scale(const Array& x, double factor);
Array exp(const Array& x);
Array log(const Array& x);
Array softmax(const Array& x);
Array dropout(const Array& x, double rate, RngStream& rng);
Array dropout_fixed(const Array& x, double rate, const std::vector<double>& keep_mask);

}  // namespace ops

}  // namespace svasp
