#pragma once

#include <vector>

#include "svasp/array.hpp"
#include "svasp/backbone.hpp"
#include "svasp/ops.hpp"

namespace svasp {

// Per-term values of the training objective, in nats. total is always the
// plain sum of the five terms.
struct LossBreakdown {
  double cls = 0.0;
  double fsl = 0.0;
  double dom = 0.0;
  double con = 0.0;
  double adv = 0.0;
  double total = 0.0;
};

// view of the same values with autodiff state stripped (no gradient flow)
Array detach(const Array& a);

// numerically stable log(softmax) over the last axis of a [rows, width] array;
// the row maxima enter as constants, which leaves gradients unchanged
Array log_softmax_rows(const Array& logits);

// mean over rows of -log p[label]
Array cross_entropy(const Array& logits, const std::vector<int>& labels);

// mean over rows of -sum_j q[j] log p[j]; q is taken as a constant target
Array cross_entropy_soft(const Array& logits, const Array& target_probs);

// CE(global, y) + sum_i CE(crop_i, y); preds holds crops first, global last
Array cls_loss(const std::vector<Array>& preds, const std::vector<int>& labels);

// episode CE of the global branch plus, when present, the adversarial branch
Array fsl_loss(const Array& global_fsl_logits, const Array* adv_fsl_logits,
               const std::vector<int>& fsl_labels);

// seen/unseen discrimination: sum of CE(f_dom(F), d_F) over the feature list
Array dom_loss(const std::vector<Array>& feats, const std::vector<int>& domain_labels,
               const BackboneParams& p, bool train_mode, RngStream* rng);

// sum_i [ mix * CE(crop_i, softmax(global)) + (1 - mix) * CE(crop_i_fsl, y_fsl) ];
// the global distribution is detached so crops are pulled toward it
Array con_loss(const std::vector<Array>& crop_preds, const Array& global_pred,
               const std::vector<Array>& crop_fsl_preds, const std::vector<int>& fsl_labels,
               double mix);

// forward KL from the global to the adversarial episode distribution,
// normalized by the total number of logits; probabilities floored at 1e-12
Array adv_kl_loss(const Array& adv_fsl_logits, const Array& global_fsl_logits);

}  // namespace svasp
