#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "svasp/gradcheck.hpp"
#include "svasp/ops.hpp"
#include "svasp/rng.hpp"
#include "svasp/style.hpp"
#include "svasp/tape.hpp"

using namespace svasp;

namespace {

Array rand_array(RngStream& rng, Shape s, double lo = -2.0, double hi = 2.0) {
  Array a = Array::zeros(std::move(s));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

Array sum_all(const Array& x) {
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t d = 0; d < x.rank(); ++d) axes[d] = d;
  return ops::scale(ops::mean_over_axes(x, axes), static_cast<double>(x.size()));
}

}  // namespace

TEST_CASE("relu clamps negatives") {
  Array x = Array::from({3}, {-1.0, 0.0, 2.0});
  Array y = ops::relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
}

TEST_CASE("conv2d with a centered identity kernel is the identity") {
  RngStream rng(7);
  Array x = rand_array(rng, {2, 2, 5, 6});
  Array w = Array::zeros({2, 2, 3, 3});
  w[(0 * 2 + 0) * 9 + 4] = 1.0;  // center tap, matching channel
  w[(1 * 2 + 1) * 9 + 4] = 1.0;
  Array y = ops::conv2d(x, w);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("mean over both spatial axes of a 2x2 map") {
  Array f = Array::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Array m = ops::mean_over_axes(f, {2, 3});
  CHECK(m.size() == 1);
  CHECK(m[0] == doctest::Approx(2.5));
}

TEST_CASE("backward of sum of squares") {
  Tape tape;
  Array x = tape.leaf(Array::from({3}, {1.0, -2.0, 3.0}));
  Array loss = sum_all(ops::mul(x, x));
  tape.backward(loss);
  Array g = tape.grad_of(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(-4.0));
  CHECK(g[2] == doctest::Approx(6.0));
}

TEST_CASE("backward with no dependence yields zero gradients") {
  Tape tape;
  Array x = tape.leaf(Array::from({3}, {1.0, -2.0, 3.0}));
  Array c = tape.leaf(Array::scalar(5.0));
  Array loss = ops::mean_over_axes(ops::mul(c, c), {0});
  tape.backward(loss);
  Array g = tape.grad_of(x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("softmax cross-entropy gradient at uniform logits") {
  // -log softmax(z)[0] at z = 0 has gradient p - onehot = [-2/3, 1/3, 1/3]
  Tape tape;
  Array z = tape.leaf(Array::zeros({1, 3}));
  Array p = ops::softmax(z);
  Array onehot = Array::from({1, 3}, {1.0, 0.0, 0.0});
  Array loss = ops::scale(sum_all(ops::mul(ops::log(p), onehot)), -1.0);
  tape.backward(loss);
  Array g = tape.grad_of(z);
  CHECK(g[0] == doctest::Approx(-2.0 / 3.0));
  CHECK(g[1] == doctest::Approx(1.0 / 3.0));
  CHECK(g[2] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("finite differences: quadratic and sine") {
  Array x = Array::from({2}, {1.0, 2.0});
  Array g = finite_difference_gradient(
      [](const Array& v) { return v[0] * v[0] + v[1] * v[1]; }, x, 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-6);
  CHECK(std::abs(g[1] - 4.0) < 1e-6);

  Array zero = Array::from({1}, {0.0});
  Array gs = finite_difference_gradient(
      [](const Array& v) { return std::sin(v[0]); }, zero, 1e-5);
  CHECK(std::abs(gs[0] - 1.0) < 1e-8);
}

TEST_CASE("style statistics gradients match finite differences") {
  RngStream rng(21);
  Array f = rand_array(rng, {2, 3, 4, 4});
  Tape tape;
  Array leaf = tape.leaf(f);
  Style s = compute_style(leaf);
  Array loss = ops::add(sum_all(s.mu), sum_all(s.sigma));
  tape.backward(loss);
  Array analytic = tape.grad_of(leaf);

  Array fd = finite_difference_gradient(
      [&](const Array& v) {
        Style sv = compute_style(v);
        return sum_all(sv.mu).value() + sum_all(sv.sigma).value();
      },
      f, 1e-5);
  double worst = 0.0, scale = 1.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    worst = std::max(worst, std::abs(fd[i] - analytic[i]));
    scale = std::max(scale, std::abs(fd[i]));
  }
  CHECK(worst / scale < 1e-4);
}

TEST_CASE("full gradient oracle suite") {
  GradCheckReport report = run_gradcheck(404, 5);
  for (const auto& c : report.cases) {
    INFO(c.name, " max rel err ", c.max_rel_err);
    CHECK(c.pass);
  }
}

TEST_CASE("replaying a tape yields bitwise-identical gradients") {
  RngStream rng(3);
  Tape tape;
  Array x = tape.leaf(rand_array(rng, {2, 3, 4, 4}));
  Array w = tape.leaf(rand_array(rng, {2, 3, 3, 3}, -1, 1));
  Array loss = sum_all(ops::relu(ops::conv2d(x, w)));
  tape.backward(loss);
  Array g1 = tape.grad_of(w);
  tape.backward(loss);
  Array g2 = tape.grad_of(w);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("gradient of a sum of losses is the sum of gradients") {
  RngStream rng(5);
  Array x0 = rand_array(rng, {4});

  auto grad_of_loss = [&](int which) {
    Tape tape;
    Array x = tape.leaf(x0);
    Array l1 = sum_all(ops::mul(x, x));
    Array l2 = sum_all(ops::exp(ops::scale(x, 0.5)));
    Array loss = which == 0 ? l1 : (which == 1 ? l2 : ops::add(l1, l2));
    tape.backward(loss);
    return tape.grad_of(x);
  };
  Array ga = grad_of_loss(0), gb = grad_of_loss(1), gsum = grad_of_loss(2);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(gsum[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
}

TEST_CASE("shape and domain errors surface as typed exceptions") {
  Array a = Array::zeros({2, 3});
  Array b = Array::zeros({3, 2});
  CHECK_THROWS_AS(ops::add(a, b), ShapeMismatch);
  CHECK_THROWS_AS(ops::log(Array::from({1}, {-1.0})), NonFinite);

  Tape tape;
  Array x = tape.leaf(Array::zeros({2}));
  Array y = ops::mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), NotScalar);
}

TEST_CASE("dropout: rate zero is the identity, masks replay from the seed") {
  RngStream rng(11);
  Array x = rand_array(rng, {4, 4});
  RngStream d0(99);
  Array same = ops::dropout(x, 0.0, d0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);

  RngStream d1(123);
  Array dropped = ops::dropout(x, 0.5, d1);
  RngStream d2(123);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double expect = d2.bernoulli(0.5) ? x[i] * 2.0 : 0.0;
    CHECK(dropped[i] == expect);
  }
}

TEST_CASE("derived rng streams are stable and independent") {
  RngStream a = derive_stream(42, "crops", 1, 2);
  RngStream b = derive_stream(42, "crops", 1, 2);
  RngStream c = derive_stream(42, "crops", 2, 1);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_stream(42, "crops", 1, 2).next_u64() != c.next_u64());
  CHECK(derive_stream(42, "attack", 1, 2).next_u64() !=
        derive_stream(42, "crops", 1, 2).next_u64());
}
