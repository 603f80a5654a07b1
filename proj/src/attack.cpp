#include "svasp/attack.hpp"

#include <cmath>

#include "svasp/losses.hpp"

namespace svasp {

void AttackConfig::validate() const {
  if (crop_decay < 0.0) throw InvalidConfig("attack: crop_decay must be >= 0");
  if (step_sizes.empty()) throw InvalidConfig("attack: step_sizes must not be empty");
  for (double k : step_sizes)
    if (k <= 0.0) throw InvalidConfig("attack: step sizes must be positive");
  if (attack_prob < 0.0 || attack_prob > 1.0)
    throw InvalidConfig("attack: attack_prob must lie in [0, 1]");
  crop.validate();
}

Array l2_normalize_rows(const Array& g) {
  if (g.rank() != 2) throw ShapeMismatch("l2_normalize_rows: expected [B, C]");
  std::size_t rows = g.shape[0], cols = g.shape[1];
  Array out = Array::zeros(g.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = g.ptr() + r * cols;
    double* dst = out.ptr() + r * cols;
    double norm = 0.0;
    for (std::size_t c = 0; c < cols; ++c) norm += src[c] * src[c];
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;  // zero-gradient rows stay zero
    for (std::size_t c = 0; c < cols; ++c) dst[c] = src[c] / norm;
  }
  return out;
}

Array sign_array(const Array& g) {
  Array out = Array::zeros(g.shape);
  for (std::size_t i = 0; i < g.size(); ++i)
    out[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
  return out;
}

StyleGradientSet generate_style_gradients(const std::vector<Array>& inputs,
                                          const std::vector<int>& labels, std::size_t block,
                                          std::span<const Style> adv_prefix,
                                          const BackboneParams& model) {
  if (inputs.empty()) throw Error("generate_style_gradients: empty input set");
  if (block < 1 || block > model.n_styled_blocks())
    throw Error("generate_style_gradients: block " + std::to_string(block) +
                " is not a styled block");
  if (adv_prefix.size() != block - 1)
    throw PrefixGap("generate_style_gradients: prefix covers " +
                    std::to_string(adv_prefix.size()) + " blocks, block " +
                    std::to_string(block) + " needs " + std::to_string(block - 1));

  Tape tape;
  StyleGradientSet result;
  std::vector<Array> mu_leaves, sigma_leaves;
  Array total_loss;

  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    // untracked prefix: model parameters and inputs are constants here
    Array fmap = forward_through_blocks(inputs[idx], model, adv_prefix, block);
    Style natural = compute_style(fmap);
    if (idx + 1 == inputs.size()) result.global_style = natural;

    Array mu_leaf = tape.leaf(natural.mu);
    Array sigma_leaf = tape.leaf(natural.sigma);
    mu_leaves.push_back(mu_leaf);
    sigma_leaves.push_back(sigma_leaf);

    // the map is re-normalized with frozen statistics, so the styled map
    // depends on the leaves alone
    Array normalized = ops::div(
        ops::sub(fmap, ops::broadcast(ops::reshape(natural.mu,
                                                   {fmap.shape[0], fmap.shape[1], 1, 1}),
                                      fmap.shape)),
        ops::broadcast(ops::reshape(natural.sigma, {fmap.shape[0], fmap.shape[1], 1, 1}),
                       fmap.shape));
    Array styled = ops::add(
        ops::mul(normalized, ops::broadcast(ops::reshape(sigma_leaf,
                                                         {fmap.shape[0], fmap.shape[1], 1, 1}),
                                            fmap.shape)),
        ops::broadcast(ops::reshape(mu_leaf, {fmap.shape[0], fmap.shape[1], 1, 1}),
                       fmap.shape));

    Array feat = forward_from_block(model, styled, block + 1);
    Array logits = classify_global(model, feat);
    Array ce = cross_entropy(logits, labels);
    total_loss = idx == 0 ? ce : ops::add(total_loss, ce);
  }

  tape.backward(total_loss);
  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    result.mu.push_back(tape.grad_of(mu_leaves[idx]));
    result.sigma.push_back(tape.grad_of(sigma_leaves[idx]));
    check_finite(result.mu.back(), "generate_style_gradients");
    check_finite(result.sigma.back(), "generate_style_gradients");
  }
  return result;
}

namespace {

Array ensemble_one(const std::vector<Array>& grads, double decay) {
  std::size_t n = grads.size();  // k crops + global
  const Array& global = grads.back();
  Array crop_mean = Array::zeros(global.shape);
  if (n > 1) {
    double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = 0; j < crop_mean.size(); ++j) crop_mean[j] += grads[i][j] * inv;
  }
  Array crop_norm = l2_normalize_rows(crop_mean);
  Array out = l2_normalize_rows(global);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += decay * crop_norm[j];
  return out;
}

}  // namespace

EnsembledGradients ensemble_gradients(const StyleGradientSet& grads, double decay) {
  if (grads.mu.empty() || grads.mu.size() != grads.sigma.size())
    throw Error("ensemble_gradients: malformed gradient set");
  return EnsembledGradients{ensemble_one(grads.mu, decay), ensemble_one(grads.sigma, decay)};
}

StylePerturbation perturb_style(const Style& global, const EnsembledGradients& ge,
                                const AttackConfig& cfg, RngStream& rng) {
  if (!same_shape(global.mu, ge.mu) || !same_shape(global.sigma, ge.sigma))
    throw ShapeMismatch("perturb_style: gradient shape does not match style");
  StylePerturbation p;
  p.mu_step = cfg.step_sizes[rng.uniform_index(cfg.step_sizes.size())];
  p.sigma_step = cfg.step_sizes[rng.uniform_index(cfg.step_sizes.size())];

  double sigma_floor = std::sqrt(kStyleEps);
  p.init.mu = Array::zeros(global.mu.shape);
  p.init.sigma = Array::zeros(global.sigma.shape);
  for (std::size_t i = 0; i < p.init.mu.size(); ++i)
    p.init.mu[i] = global.mu[i] + cfg.init_noise * rng.normal();
  for (std::size_t i = 0; i < p.init.sigma.size(); ++i)
    p.init.sigma[i] =
        std::max(global.sigma[i] + cfg.init_noise * rng.normal(), sigma_floor);

  Array mu_sign = sign_array(ge.mu);
  Array sigma_sign = sign_array(ge.sigma);
  p.adv.mu = Array::zeros(global.mu.shape);
  p.adv.sigma = Array::zeros(global.sigma.shape);
  for (std::size_t i = 0; i < p.adv.mu.size(); ++i)
    p.adv.mu[i] = p.init.mu[i] + p.mu_step * mu_sign[i];
  for (std::size_t i = 0; i < p.adv.sigma.size(); ++i)
    p.adv.sigma[i] = std::max(p.init.sigma[i] + p.sigma_step * sigma_sign[i], sigma_floor);
  return p;
}

std::optional<AdvStyleSet> svasp_attack(const Array& images, const std::vector<int>& labels,
                                        const BackboneParams& model, const AttackConfig& cfg,
                                        RngStream& rng) {
  cfg.validate();
  if (rng.u01() >= cfg.attack_prob) return std::nullopt;

  std::vector<Array> input_set = sample_crops(images, cfg.crop, rng);
  AdvStyleSet out;
  for (std::size_t block = 1; block <= model.n_styled_blocks(); ++block) {
    StyleGradientSet grads =
        generate_style_gradients(input_set, labels, block, out.styles, model);
    EnsembledGradients ge = ensemble_gradients(grads, cfg.crop_decay);
    StylePerturbation p = perturb_style(grads.global_style, ge, cfg, rng);
    out.styles.push_back(std::move(p.adv));
  }
  return out;
}

}  // namespace svasp
