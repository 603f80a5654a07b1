#include "svasp/backbone.hpp"

#include <cmath>

namespace svasp {

namespace {

Array gaussian(RngStream& rng, Shape shape, double stddev) {
  Array a = Array::zeros(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = stddev * rng.normal();
  return a;
}

}  // namespace

BackboneParams BackboneParams::random(RngStream& rng, std::size_t in_channels,
                                      const std::vector<std::size_t>& widths,
                                      std::size_t n_classes, double dom_dropout,
                                      double proto_temperature) {
  BackboneParams p;
  std::size_t c_in = in_channels;
  for (std::size_t w : widths) {
    ConvBlock blk;
    blk.w = gaussian(rng, {w, c_in, 3, 3}, std::sqrt(2.0 / (9.0 * static_cast<double>(c_in))));
    blk.b = Array::zeros({w});
    p.blocks.push_back(std::move(blk));
    c_in = w;
  }
  std::size_t feat = widths.back();
  double fc_std = std::sqrt(1.0 / static_cast<double>(feat));
  p.fc_w = gaussian(rng, {feat, n_classes}, fc_std);
  p.fc_b = Array::zeros({n_classes});
  p.dom_w = gaussian(rng, {feat, 2}, fc_std);
  p.dom_b = Array::zeros({2});
  p.dom_dropout = dom_dropout;
  p.proto_temperature = proto_temperature;
  return p;
}

BackboneParams BackboneParams::tracked(Tape& tape) const {
  BackboneParams t = *this;
  for (ConvBlock& blk : t.blocks) {
    blk.w = tape.leaf(blk.w);
    blk.b = tape.leaf(blk.b);
  }
  t.fc_w = tape.leaf(t.fc_w);
  t.fc_b = tape.leaf(t.fc_b);
  t.dom_w = tape.leaf(t.dom_w);
  t.dom_b = tape.leaf(t.dom_b);
  return t;
}

void BackboneParams::for_each_param(
    const std::function<void(const std::string&, Array&)>& fn) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    fn("block" + std::to_string(i + 1) + ".w", blocks[i].w);
    fn("block" + std::to_string(i + 1) + ".b", blocks[i].b);
  }
  fn("fc.w", fc_w);
  fn("fc.b", fc_b);
  fn("dom.w", dom_w);
  fn("dom.b", dom_b);
}

void BackboneParams::for_each_param(
    const std::function<void(const std::string&, const Array&)>& fn) const {
  const_cast<BackboneParams*>(this)->for_each_param(
      [&](const std::string& n, Array& a) { fn(n, a); });
}

Array block_forward(const BackboneParams& p, std::size_t block_idx, const Array& x) {
  if (block_idx < 1 || block_idx > p.n_blocks())
    throw ShapeMismatch("block_forward: bad block index " + std::to_string(block_idx));
  const ConvBlock& blk = p.blocks[block_idx - 1];
  return ops::avgpool2d(ops::relu(ops::conv2d(x, blk.w, blk.b)));
}

Array forward_from_block(const BackboneParams& p, const Array& f, std::size_t start_block) {
  if (start_block < 1 || start_block > p.n_blocks())
    throw ShapeMismatch("forward_from_block: bad start block " + std::to_string(start_block));
  if (f.rank() != 4 || f.shape[1] != p.blocks[start_block - 1].w.shape[1])
    throw ShapeMismatch("forward_from_block: map " + shape_str(f.shape) +
                        " does not fit block " + std::to_string(start_block));
  Array h = f;
  for (std::size_t i = start_block; i <= p.n_blocks(); ++i) h = block_forward(p, i, h);
  return ops::mean_over_axes(h, {2, 3});
}

Array features(const BackboneParams& p, const Array& images) {
  return forward_from_block(p, images, 1);
}

Array classify_global(const BackboneParams& p, const Array& feat) {
  Array logits = ops::matmul(feat, p.fc_w);
  Array bias = ops::broadcast(ops::reshape(p.fc_b, {1, p.n_classes()}), logits.shape);
  return ops::add(logits, bias);
}

Array discriminate_domain(const BackboneParams& p, const Array& feat, bool train_mode,
                          RngStream* rng) {
  Array h = feat;
  if (train_mode && p.dom_dropout > 0.0) {
    if (!rng) throw Error("discriminate_domain: rng required in train mode");
    h = ops::dropout(h, p.dom_dropout, *rng);
  }
  Array logits = ops::matmul(h, p.dom_w);
  Array bias = ops::broadcast(ops::reshape(p.dom_b, {1, 2}), logits.shape);
  return ops::add(logits, bias);
}

Array relation_classify(const Array& support_feats, const std::vector<int>& support_labels,
                        const Array& query_feats, std::size_t n_way, double temperature) {
  if (support_feats.rank() != 2 || query_feats.rank() != 2 ||
      support_feats.shape[1] != query_feats.shape[1])
    throw ShapeMismatch("relation_classify: feature shapes " + shape_str(support_feats.shape) +
                        " vs " + shape_str(query_feats.shape));
  std::size_t nk = support_feats.shape[0];
  std::size_t dim = support_feats.shape[1];
  std::size_t nq = query_feats.shape[0];
  if (support_labels.size() != nk) throw LengthMismatch("relation_classify: label count");

  std::vector<std::size_t> counts(n_way, 0);
  for (int y : support_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_way)
      throw LabelOutOfRange("relation_classify: label " + std::to_string(y));
    counts[static_cast<std::size_t>(y)]++;
  }
  for (std::size_t c = 0; c < n_way; ++c)
    if (counts[c] == 0)
      throw MissingClass("relation_classify: class " + std::to_string(c) + " has no support");

  // prototypes as a constant averaging matrix applied to the support features
  Array avg = Array::zeros({n_way, nk});
  for (std::size_t i = 0; i < nk; ++i) {
    auto c = static_cast<std::size_t>(support_labels[i]);
    avg[c * nk + i] = 1.0 / static_cast<double>(counts[c]);
  }
  Array protos = ops::matmul(avg, support_feats);  // [n_way, dim]

  Array qb = ops::broadcast(ops::reshape(query_feats, {nq, 1, dim}), {nq, n_way, dim});
  Array pb = ops::broadcast(ops::reshape(protos, {1, n_way, dim}), {nq, n_way, dim});
  Array diff = ops::sub(qb, pb);
  Array sq = ops::mul(diff, diff);
  // sum over the feature axis, negated and tempered
  return ops::scale(ops::mean_over_axes(sq, {2}),
                    -static_cast<double>(dim) / temperature);
}

}  // namespace svasp
