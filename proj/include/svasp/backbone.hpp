#pragma once

#include <functional>
#include <string>
#include <vector>

#include "svasp/array.hpp"
#include "svasp/ops.hpp"
#include "svasp/rng.hpp"
#include "svasp/tape.hpp"

namespace svasp {

// One block: conv3x3 (stride 1, same padding) -> relu -> avgpool 2x2.
struct ConvBlock {
  Array w;  // [out_c, in_c, 3, 3]
  Array b;  // [out_c]
};

struct BackboneParams {
  std::vector<ConvBlock> blocks;
  Array fc_w;   // [feature_dim, n_classes] global classifier
  Array fc_b;   // [n_classes]
  Array dom_w;  // [feature_dim, 2] seen/unseen discriminator
  Array dom_b;  // [2]
  double dom_dropout = 0.5;
  double proto_temperature = 64.0;

  std::size_t n_blocks() const { return blocks.size(); }
  // styles attach to every block except the last
  std::size_t n_styled_blocks() const { return blocks.empty() ? 0 : blocks.size() - 1; }
  std::size_t feature_dim() const { return blocks.back().w.shape[0]; }
  std::size_t n_classes() const { return fc_w.shape[1]; }
  std::size_t in_channels() const { return blocks.front().w.shape[1]; }

  static BackboneParams random(RngStream& rng, std::size_t in_channels,
                               const std::vector<std::size_t>& widths, std::size_t n_classes,
                               double dom_dropout = 0.5, double proto_temperature = 64.0);

  // same parameter struct with every array registered as a gradient leaf
  BackboneParams tracked(Tape& tape) const;

  // canonical parameter order shared by the optimizer, checkpoints, gradient
  // snapshots and the landscape probe
  void for_each_param(const std::function<void(const std::string&, Array&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Array&)>& fn) const;
};

// block_idx is 1-based
Array block_forward(const BackboneParams& p, std::size_t block_idx, const Array& x);

// blocks start_block..n, then global average pooling to [B, feature_dim]
Array forward_from_block(const BackboneParams& p, const Array& f, std::size_t start_block);

Array features(const BackboneParams& p, const Array& images);

Array classify_global(const BackboneParams& p, const Array& feat);

// dropout is applied only in train mode
Array discriminate_domain(const BackboneParams& p, const Array& feat, bool train_mode,
                          RngStream* rng);

// logits[q, n] = -||query_q - proto_n||^2 / temperature, prototypes being
// per-class means of the support features
Array relation_classify(const Array& support_feats, const std::vector<int>& support_labels,
                        const Array& query_feats, std::size_t n_way, double temperature);

}  // namespace svasp
