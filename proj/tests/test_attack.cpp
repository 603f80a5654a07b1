#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "svasp/attack.hpp"
#include "svasp/rng.hpp"

using namespace svasp;

namespace {

Array rand_array(RngStream& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  Array a = Array::zeros(std::move(s));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

BackboneParams tiny_model(std::uint64_t seed) {
  RngStream rng(seed);
  return BackboneParams::random(rng, 3, {4, 6}, 5);
}

Style rand_style(RngStream& rng, Shape s) {
  Style st;
  st.mu = rand_array(rng, s, -1.0, 1.0);
  st.sigma = rand_array(rng, s, 0.2, 2.0);
  return st;
}

}  // namespace

TEST_CASE("paper defaults for the perturbation scales") {
  AttackConfig cfg;
  CHECK(cfg.init_noise == doctest::Approx(16.0 / 255.0));
  REQUIRE(cfg.step_sizes.size() == 3);
  CHECK(cfg.step_sizes[0] == 0.008);
  CHECK(cfg.step_sizes[1] == 0.08);
  CHECK(cfg.step_sizes[2] == 0.8);
  CHECK(cfg.attack_prob == 0.2);
  CHECK(cfg.crop_decay == 0.1);
  CHECK(cfg.crop.count == 2);
  CHECK(cfg.crop.area_low == 0.2);
  CHECK(cfg.crop.area_high == 0.4);
}

TEST_CASE("zero classifier weights give exactly zero style gradients") {
  BackboneParams model = tiny_model(60);
  model.fc_w = Array::zeros(model.fc_w.shape);
  model.fc_b = Array::zeros(model.fc_b.shape);
  RngStream rng(61);
  std::vector<Array> inputs = {rand_array(rng, {2, 3, 8, 8}), rand_array(rng, {2, 3, 8, 8})};
  StyleGradientSet g = generate_style_gradients(inputs, {0, 1}, 1, {}, model);
  REQUIRE(g.mu.size() == 2);
  for (const Array& a : g.mu)
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == 0.0);
  for (const Array& a : g.sigma)
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == 0.0);
}

TEST_CASE("a single input yields only the global gradient") {
  BackboneParams model = tiny_model(62);
  RngStream rng(63);
  std::vector<Array> inputs = {rand_array(rng, {2, 3, 8, 8})};
  StyleGradientSet g = generate_style_gradients(inputs, {1, 3}, 1, {}, model);
  CHECK(g.mu.size() == 1);
  CHECK(g.sigma.size() == 1);
  CHECK(g.global_style.mu.shape == Shape{2, 4});
}

TEST_CASE("prefix must cover every earlier block") {
  BackboneParams model = tiny_model(64);
  RngStream rng(65);
  std::vector<Array> inputs = {rand_array(rng, {1, 3, 8, 8})};
  CHECK_THROWS_AS(generate_style_gradients(inputs, {0}, 2, {}, model), Error);
}

TEST_CASE("zero decay keeps the ensemble bitwise equal to the normalized global") {
  RngStream rng(66);
  StyleGradientSet g;
  for (int i = 0; i < 3; ++i) {
    g.mu.push_back(rand_array(rng, {2, 4}));
    g.sigma.push_back(rand_array(rng, {2, 4}));
  }
  EnsembledGradients e = ensemble_gradients(g, 0.0);
  Array norm_mu = l2_normalize_rows(g.mu.back());
  Array norm_sigma = l2_normalize_rows(g.sigma.back());
  for (std::size_t i = 0; i < e.mu.size(); ++i) {
    CHECK(e.mu[i] == norm_mu[i]);
    CHECK(e.sigma[i] == norm_sigma[i]);
  }
}

TEST_CASE("one crop: the aggregate is that crop's normalized gradient") {
  RngStream rng(67);
  StyleGradientSet g;
  g.mu = {rand_array(rng, {1, 4}), rand_array(rng, {1, 4})};
  g.sigma = {rand_array(rng, {1, 4}), rand_array(rng, {1, 4})};
  EnsembledGradients e = ensemble_gradients(g, 1.0);
  Array expect = l2_normalize_rows(g.mu.back());
  Array crop = l2_normalize_rows(g.mu.front());
  for (std::size_t i = 0; i < e.mu.size(); ++i)
    CHECK(e.mu[i] == doctest::Approx(expect[i] + crop[i]).epsilon(1e-15));
}

TEST_CASE("collinear crop gradients scale the ensemble by 1 + decay") {
  RngStream rng(68);
  Array base = rand_array(rng, {2, 4});
  StyleGradientSet g;
  g.mu = {base, base, base};  // two crops identical to the global gradient
  g.sigma = {base, base, base};
  EnsembledGradients e = ensemble_gradients(g, 0.1);
  Array norm = l2_normalize_rows(base);
  for (std::size_t i = 0; i < e.mu.size(); ++i)
    CHECK(e.mu[i] == doctest::Approx(1.1 * norm[i]).epsilon(1e-14));
}

TEST_CASE("zero ensemble gradient leaves the initialized style untouched") {
  RngStream rng(69);
  Style global = rand_style(rng, {2, 4});
  EnsembledGradients zero{Array::zeros({2, 4}), Array::zeros({2, 4})};
  AttackConfig cfg;
  RngStream pr(70);
  StylePerturbation p = perturb_style(global, zero, cfg, pr);
  for (std::size_t i = 0; i < p.adv.mu.size(); ++i) {
    CHECK(p.adv.mu[i] == p.init.mu[i]);
    CHECK(p.adv.sigma[i] == p.init.sigma[i]);
  }
}

TEST_CASE("sign steps move each element by exactly zero or the drawn step") {
  RngStream rng(71);
  AttackConfig cfg;
  for (int it = 0; it < 1000; ++it) {
    Style global = rand_style(rng, {2, 5});
    EnsembledGradients ge{rand_array(rng, {2, 5}), rand_array(rng, {2, 5})};
    if (it % 7 == 0)
      for (std::size_t i = 0; i < ge.mu.size(); i += 3) ge.mu[i] = 0.0;
    StylePerturbation p = perturb_style(global, ge, cfg, rng);
    bool mu_known = std::find(cfg.step_sizes.begin(), cfg.step_sizes.end(), p.mu_step) !=
                    cfg.step_sizes.end();
    CHECK(mu_known);
    for (std::size_t i = 0; i < p.adv.mu.size(); ++i) {
      double d = std::abs(p.adv.mu[i] - p.init.mu[i]);
      bool ok = d == 0.0 || std::abs(d - p.mu_step) < 1e-12;
      CHECK(ok);
    }
    for (std::size_t i = 0; i < p.adv.sigma.size(); ++i) {
      double d = std::abs(p.adv.sigma[i] - p.init.sigma[i]);
      CHECK(d <= p.sigma_step + 1e-12);  // the sigma floor may shorten the step
    }
  }
}

TEST_CASE("attack probability zero never fires") {
  BackboneParams model = tiny_model(72);
  RngStream rng(73);
  Array x = rand_array(rng, {2, 3, 8, 8}, 0.0, 1.0);
  AttackConfig cfg;
  cfg.attack_prob = 0.0;
  for (int it = 0; it < 1000; ++it)
    CHECK(!svasp_attack(x, {0, 1}, model, cfg, rng).has_value());
}

TEST_CASE("the attack is deterministic under a fixed seed") {
  BackboneParams model = tiny_model(74);
  RngStream rng(75);
  Array x = rand_array(rng, {2, 3, 8, 8}, 0.0, 1.0);
  AttackConfig cfg;
  cfg.attack_prob = 1.0;
  RngStream ra(500), rb(500);
  auto a = svasp_attack(x, {0, 1}, model, cfg, ra);
  auto b = svasp_attack(x, {0, 1}, model, cfg, rb);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  REQUIRE(a->styles.size() == model.n_styled_blocks());
  for (std::size_t j = 0; j < a->styles.size(); ++j) {
    for (std::size_t i = 0; i < a->styles[j].mu.size(); ++i) {
      CHECK(a->styles[j].mu[i] == b->styles[j].mu[i]);
      CHECK(a->styles[j].sigma[i] == b->styles[j].sigma[i]);
    }
  }
}

TEST_CASE("global-only ablation differs from the crop-ensembled attack") {
  BackboneParams model = tiny_model(76);
  RngStream rng(77);
  Array x = rand_array(rng, {2, 3, 8, 8}, 0.0, 1.0);

  AttackConfig svasp_cfg;
  svasp_cfg.attack_prob = 1.0;
  AttackConfig global_cfg = svasp_cfg;
  global_cfg.crop_decay = 0.0;
  global_cfg.crop.count = 0;

  RngStream ra(900), rb(900);
  auto full = svasp_attack(x, {0, 1}, model, svasp_cfg, ra);
  auto global_only = svasp_attack(x, {0, 1}, model, global_cfg, rb);
  REQUIRE(full.has_value());
  REQUIRE(global_only.has_value());
  bool differs = false;
  for (std::size_t j = 0; j < full->styles.size(); ++j)
    for (std::size_t i = 0; i < full->styles[j].mu.size(); ++i)
      differs |= full->styles[j].mu[i] != global_only->styles[j].mu[i];
  CHECK(differs);
}

TEST_CASE("the attack never mutates model parameters") {
  BackboneParams model = tiny_model(78);
  BackboneParams snapshot = model;
  std::vector<Array> before;
  snapshot.for_each_param([&](const std::string&, Array& a) { before.push_back(a.clone()); });

  RngStream rng(79);
  Array x = rand_array(rng, {2, 3, 8, 8}, 0.0, 1.0);
  AttackConfig cfg;
  cfg.attack_prob = 1.0;
  RngStream ar(321);
  auto out = svasp_attack(x, {0, 1}, model, cfg, ar);
  REQUIRE(out.has_value());

  std::size_t idx = 0;
  model.for_each_param([&](const std::string&, Array& a) {
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == before[idx][i]);
    ++idx;
  });
}

TEST_CASE("adversarial styles respect the maximum step bound") {
  BackboneParams model = tiny_model(80);
  RngStream rng(81);
  Array x = rand_array(rng, {2, 3, 8, 8}, 0.0, 1.0);
  AttackConfig cfg;
  cfg.attack_prob = 1.0;
  RngStream ar(11);
  auto out = svasp_attack(x, {0, 1}, model, cfg, ar);
  REQUIRE(out.has_value());
  // block channel widths follow the backbone
  CHECK(out->styles[0].mu.shape == Shape{2, 4});
  double sigma_floor = std::sqrt(kStyleEps);
  for (const Style& s : out->styles)
    for (std::size_t i = 0; i < s.sigma.size(); ++i) CHECK(s.sigma[i] >= sigma_floor);
}
