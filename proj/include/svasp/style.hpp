#pragma once

#include <span>

#include "svasp/array.hpp"
#include "svasp/ops.hpp"

namespace svasp {

// variance floor inside the style sqrt; keeps sigma well-conditioned at f64
inline constexpr double kStyleEps = 1e-5;

struct BackboneParams;

// Per-sample, per-channel feature statistics: the object the attack perturbs.
struct Style {
  Array mu;     // [B, C]
  Array sigma;  // [B, C], >= sqrt(kStyleEps) elementwise
};

// Spatial mean and std of a [B,C,H,W] map. Differentiable: gradients flow into
// the map, and out of (mu, sigma) when they are promoted to leaves.
Style compute_style(const Array& f);

// ((f - mu_f) / sigma_f) * sigma_target + mu_target
Array adain_transfer(const Array& f, const Style& target);

// Forward through blocks 1..upto; after each block i the output is re-styled
// to styles[i-1] when that entry exists. styles is a contiguous prefix over
// the styled blocks (all but the last).
Array forward_through_blocks(const Array& x, const BackboneParams& params,
                             std::span<const Style> styles, std::size_t upto);

// Full pass across every block with the adversarial-style prefix applied.
Array chained_block_transfer(const Array& x, const BackboneParams& params,
                             std::span<const Style> styles);

}  // namespace svasp
