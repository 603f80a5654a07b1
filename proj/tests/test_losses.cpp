#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "svasp/losses.hpp"
#include "svasp/rng.hpp"

using namespace svasp;

namespace {

Array rand_logits(RngStream& rng, Shape s, double spread = 2.0) {
  Array a = Array::zeros(std::move(s));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-spread, spread);
  return a;
}

// direct softmax cross-entropy, evaluated without the ops layer
double ce_oracle(const Array& logits, const std::vector<int>& labels) {
  std::size_t rows = logits.shape[0], width = logits.shape[1];
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.ptr() + r * width;
    double m = z[0];
    for (std::size_t j = 1; j < width; ++j) m = std::max(m, z[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += std::exp(z[j] - m);
    total += -(z[static_cast<std::size_t>(labels[r])] - m - std::log(s));
  }
  return total / static_cast<double>(rows);
}

}  // namespace

TEST_CASE("uniform logits: classification loss is (k+1) ln Nc") {
  Array uniform = Array::zeros({2, 4});
  std::vector<Array> preds = {uniform, uniform, uniform};  // two crops + global
  double got = cls_loss(preds, {1, 3}).value();
  CHECK(got == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-10));
}

TEST_CASE("confident correct logits give a near-zero classification loss") {
  Array sharp = Array::zeros({2, 4});
  sharp[0 * 4 + 2] = 50.0;
  sharp[1 * 4 + 0] = 50.0;
  double got = cls_loss({sharp}, {2, 0}).value();
  CHECK(got < 1e-8);
}

TEST_CASE("cross entropy matches the direct formula") {
  RngStream rng(90);
  Array logits = rand_logits(rng, {2, 5});
  std::vector<int> labels = {4, 1};
  CHECK(std::abs(cross_entropy(logits, labels).value() - ce_oracle(logits, labels)) < 1e-12);
}

TEST_CASE("episode loss: uniform logits give 2 ln N") {
  Array uniform = Array::zeros({6, 5});
  std::vector<int> y = {0, 1, 2, 3, 4, 0};
  double got = fsl_loss(uniform, &uniform, y).value();
  CHECK(got == doctest::Approx(2.0 * std::log(5.0)).epsilon(1e-10));
}

TEST_CASE("episode loss doubles when the adversarial logits repeat the global ones") {
  RngStream rng(91);
  Array logits = rand_logits(rng, {4, 3});
  std::vector<int> y = {0, 2, 1, 0};
  double single = fsl_loss(logits, nullptr, y).value();
  double both = fsl_loss(logits, &logits, y).value();
  CHECK(both == 2.0 * single);
}

TEST_CASE("episode loss hand computation at N=2, M=1") {
  Array g = Array::from({1, 2}, {1.0, -1.0});
  Array a = Array::from({1, 2}, {0.0, 0.5});
  std::vector<int> y = {0};
  double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0))) -
                  std::log(std::exp(0.0) / (std::exp(0.0) + std::exp(0.5)));
  CHECK(fsl_loss(g, &a, y).value() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("domain loss: a zero-weight head yields ln 2 per feature batch") {
  RngStream rng(92);
  BackboneParams p = BackboneParams::random(rng, 3, {4, 6}, 5);
  p.dom_w = Array::zeros(p.dom_w.shape);
  p.dom_b = Array::zeros(p.dom_b.shape);
  std::vector<Array> feats = {rand_logits(rng, {3, 6}), rand_logits(rng, {3, 6})};
  double got = dom_loss(feats, {0, 1}, p, false, nullptr).value();
  CHECK(got == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("domain loss doubles on a duplicated feature list") {
  RngStream rng(93);
  BackboneParams p = BackboneParams::random(rng, 3, {4, 6}, 5);
  std::vector<Array> feats = {rand_logits(rng, {2, 6}), rand_logits(rng, {4, 6})};
  double once = dom_loss(feats, {0, 1}, p, false, nullptr).value();
  std::vector<Array> twice = {feats[0], feats[1], feats[0], feats[1]};
  double doubled = dom_loss(twice, {0, 1, 0, 1}, p, false, nullptr).value();
  CHECK(doubled == doctest::Approx(2.0 * once).epsilon(1e-14));
}

TEST_CASE("domain loss matches a manual evaluation") {
  RngStream rng(94);
  BackboneParams p = BackboneParams::random(rng, 3, {4, 6}, 5);
  Array feat = rand_logits(rng, {3, 6});
  double got = dom_loss({feat}, {1}, p, false, nullptr).value();
  Array logits = discriminate_domain(p, feat, false, nullptr);
  CHECK(std::abs(got - ce_oracle(logits, {1, 1, 1})) < 1e-12);
}

TEST_CASE("consistency loss at mix 0 is the crop episode term alone") {
  RngStream rng(95);
  std::vector<Array> crop_preds = {rand_logits(rng, {3, 4}), rand_logits(rng, {3, 4})};
  std::vector<Array> crop_fsl = {rand_logits(rng, {3, 2}), rand_logits(rng, {3, 2})};
  std::vector<int> y = {0, 1, 0};
  Array global = rand_logits(rng, {3, 4});
  double got = con_loss(crop_preds, global, crop_fsl, y, 0.0).value();
  double expect = ce_oracle(crop_fsl[0], y) + ce_oracle(crop_fsl[1], y);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("consistency loss at mix 1 with matching logits is the global entropy") {
  RngStream rng(96);
  Array global = rand_logits(rng, {3, 4});
  std::vector<Array> crop_preds = {global, global};
  std::vector<Array> crop_fsl = {rand_logits(rng, {3, 2}), rand_logits(rng, {3, 2})};
  std::vector<int> y = {0, 1, 1};
  double got = con_loss(crop_preds, global, crop_fsl, y, 1.0).value();

  double entropy = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    const double* z = global.ptr() + r * 4;
    double m = *std::max_element(z, z + 4);
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += std::exp(z[j] - m);
    for (int j = 0; j < 4; ++j) {
      double pj = std::exp(z[j] - m) / s;
      entropy -= pj * std::log(pj);
    }
  }
  entropy /= 3.0;  // batch mean inside each term
  CHECK(got == doctest::Approx(2.0 * entropy).epsilon(1e-10));
}

TEST_CASE("kl term vanishes on identical logits and is never negative") {
  RngStream rng(97);
  for (int it = 0; it < 1000; ++it) {
    Array g = rand_logits(rng, {2, 4}, 3.0);
    Array a = rand_logits(rng, {2, 4}, 3.0);
    CHECK(adv_kl_loss(a, g).value() >= 0.0);
  }
  Array same = rand_logits(rng, {3, 5});
  CHECK(adv_kl_loss(same, same).value() == 0.0);
}

TEST_CASE("kl worked example") {
  // global (0.8, 0.2) vs adversarial (0.5, 0.5) over a single query
  Array g = Array::from({1, 2}, {std::log(0.8), std::log(0.2)});
  Array a = Array::from({1, 2}, {0.0, 0.0});
  double expect = 0.5 * (0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5));
  double got = adv_kl_loss(a, g).value();
  CHECK(got == doctest::Approx(expect).epsilon(1e-10));
  CHECK(got == doctest::Approx(0.09637).epsilon(1e-3));
}

TEST_CASE("losses are invariant to batch permutation") {
  RngStream rng(98);
  Array logits = rand_logits(rng, {3, 4});
  std::vector<int> y = {1, 0, 3};
  Array permuted = Array::zeros({3, 4});
  std::vector<int> yp = {3, 1, 0};
  for (int d = 0; d < 4; ++d) {
    permuted[0 * 4 + d] = logits[2 * 4 + d];
    permuted[1 * 4 + d] = logits[0 * 4 + d];
    permuted[2 * 4 + d] = logits[1 * 4 + d];
  }
  CHECK(cross_entropy(logits, y).value() ==
        doctest::Approx(cross_entropy(permuted, yp).value()).epsilon(1e-14));
}

TEST_CASE("label range errors") {
  Array logits = Array::zeros({2, 3});
  CHECK_THROWS_AS(cross_entropy(logits, {0, 3}), LabelOutOfRange);
  CHECK_THROWS_AS(cross_entropy(logits, {-1, 0}), LabelOutOfRange);
}
