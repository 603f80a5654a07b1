#include "svasp/style.hpp"

#include "svasp/backbone.hpp"

namespace svasp {

Style compute_style(const Array& f) {
  if (f.rank() != 4) throw BadRank("compute_style: expected rank 4, got " + shape_str(f.shape));
  Style s;
  s.mu = ops::mean_over_axes(f, {2, 3});
  Array var = ops::var_over_axes(f, {2, 3});
  s.sigma = ops::sqrt(ops::add(var, Array::full(var.shape, kStyleEps)));
  return s;
}

namespace {

// [B,C] stats expanded to the map shape
Array expand_stat(const Array& stat, const Shape& map_shape) {
  Array r = ops::reshape(stat, {map_shape[0], map_shape[1], 1, 1});
  return ops::broadcast(r, map_shape);
}

}  // namespace

Array adain_transfer(const Array& f, const Style& target) {
  if (f.rank() != 4) throw BadRank("adain_transfer: expected rank 4, got " + shape_str(f.shape));
  Shape bc{f.shape[0], f.shape[1]};
  if (target.mu.shape != bc || target.sigma.shape != bc)
    throw ShapeMismatch("adain_transfer: target style " + shape_str(target.mu.shape) +
                        " does not match map " + shape_str(f.shape));
  Style own = compute_style(f);
  Array normalized = ops::div(ops::sub(f, expand_stat(own.mu, f.shape)),
                              expand_stat(own.sigma, f.shape));
  return ops::add(ops::mul(normalized, expand_stat(target.sigma, f.shape)),
                  expand_stat(target.mu, f.shape));
}

Array forward_through_blocks(const Array& x, const BackboneParams& params,
                             std::span<const Style> styles, std::size_t upto) {
  if (upto > params.n_blocks())
    throw ShapeMismatch("forward_through_blocks: block index out of range");
  if (styles.size() > params.n_styled_blocks())
    throw PrefixGap("forward_through_blocks: more styles than styled blocks");
  Array h = x;
  for (std::size_t i = 1; i <= upto; ++i) {
    h = block_forward(params, i, h);
    if (i <= styles.size()) h = adain_transfer(h, styles[i - 1]);
  }
  return h;
}

Array chained_block_transfer(const Array& x, const BackboneParams& params,
                             std::span<const Style> styles) {
  return forward_through_blocks(x, params, styles, params.n_blocks());
}

}  // namespace svasp
