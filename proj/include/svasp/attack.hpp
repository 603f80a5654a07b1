#pragma once

#include <optional>
#include <span>
#include <vector>

#include "svasp/backbone.hpp"
#include "svasp/crops.hpp"
#include "svasp/style.hpp"

namespace svasp {

struct AttackConfig {
  double crop_decay = 0.1;   // weight of the aggregated crop gradient in the ensemble
  std::vector<double> step_sizes = {0.008, 0.08, 0.8};  // sign-step coefficients
  double init_noise = 16.0 / 255.0;                     // gaussian init scale
  double attack_prob = 0.2;  // probability that an episode gets a style change
  CropConfig crop;

  void validate() const;
};

// Per-input style gradients at one block: crop entries first, global last.
struct StyleGradientSet {
  std::vector<Array> mu;     // each [B, C]
  std::vector<Array> sigma;  // each [B, C]
  Style global_style;        // natural style of the benign input at this block
};

// Adversarial styles for the styled blocks, in block order.
struct AdvStyleSet {
  std::vector<Style> styles;
};

struct EnsembledGradients {
  Array mu;
  Array sigma;
};

struct StylePerturbation {
  Style init;  // gaussian-perturbed global style
  Style adv;   // after the sign step
  double mu_step = 0.0;
  double sigma_step = 0.0;
};

// per-sample L2 normalization over the channel axis; rows below 1e-12 map to zero
Array l2_normalize_rows(const Array& g);

// elementwise sign with sign(0) = 0
Array sign_array(const Array& g);

// For each input: forward to `block` through the adversarial prefix, promote
// the block style to gradient leaves (the map's own dependence on its
// statistics is cut), forward the remainder, and differentiate the accumulated
// cross-entropy with respect to every style leaf.
StyleGradientSet generate_style_gradients(const std::vector<Array>& inputs,
                                          const std::vector<int>& labels, std::size_t block,
                                          std::span<const Style> adv_prefix,
                                          const BackboneParams& model);

// crop gradients averaged and normalized, then added to the normalized global
// gradient with weight `decay`
EnsembledGradients ensemble_gradients(const StyleGradientSet& grads, double decay);

// gaussian init around the global style followed by one sign step; the two
// step sizes are drawn independently from cfg.step_sizes
StylePerturbation perturb_style(const Style& global, const EnsembledGradients& ge,
                                const AttackConfig& cfg, RngStream& rng);

// One full attack: optionally (with cfg.attack_prob) synthesizes adversarial
// styles block by block, each conditioned on the styles of the earlier blocks.
// Model parameters are never modified.
std::optional<AdvStyleSet> svasp_attack(const Array& images, const std::vector<int>& labels,
                                        const BackboneParams& model, const AttackConfig& cfg,
                                        RngStream& rng);

}  // namespace svasp
