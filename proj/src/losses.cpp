#include "svasp/losses.hpp"

#include <algorithm>

namespace svasp {

namespace {

void require_rows(const Array& logits, const char* who) {
  if (logits.rank() != 2) throw ShapeMismatch(std::string(who) + ": expected [rows, width]");
}

Array zero_loss() { return Array::from({}, {0.0}); }

Array mean_all(const Array& a) {
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t d = 0; d < a.rank(); ++d) axes[d] = d;
  return ops::mean_over_axes(a, axes);
}

// elementwise max(p, floor) built from relu so gradients pass where p > floor
Array floor_probs(const Array& p, double floor) {
  Array c = Array::full(p.shape, floor);
  return ops::add(ops::relu(ops::sub(p, c)), c);
}

}  // namespace

Array detach(const Array& a) {
  Array d;
  d.shape = a.shape;
  d.data = a.data;
  return d;
}

Array log_softmax_rows(const Array& logits) {
  require_rows(logits, "log_softmax_rows");
  std::size_t rows = logits.shape[0], width = logits.shape[1];
  Array rowmax = Array::zeros({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.ptr() + r * width;
    rowmax[r] = *std::max_element(x, x + width);
  }
  Array shifted = ops::sub(logits, ops::broadcast(rowmax, logits.shape));
  Array sums = ops::scale(ops::mean_over_axes(ops::exp(shifted), {1}),
                          static_cast<double>(width));
  Array logz = ops::log(ops::reshape(sums, {rows, 1}));
  return ops::sub(shifted, ops::broadcast(logz, logits.shape));
}

Array cross_entropy(const Array& logits, const std::vector<int>& labels) {
  require_rows(logits, "cross_entropy");
  std::size_t rows = logits.shape[0], width = logits.shape[1];
  if (labels.size() != rows) throw LengthMismatch("cross_entropy: label count");
  Array onehot = Array::zeros(logits.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= width)
      throw LabelOutOfRange("cross_entropy: label " + std::to_string(y) + " for width " +
                            std::to_string(width));
    onehot[r * width + static_cast<std::size_t>(y)] = 1.0;
  }
  Array lp = log_softmax_rows(logits);
  return ops::scale(mean_all(ops::mul(lp, onehot)), -static_cast<double>(width));
}

Array cross_entropy_soft(const Array& logits, const Array& target_probs) {
  require_rows(logits, "cross_entropy_soft");
  if (!same_shape(logits, target_probs))
    throw ShapeMismatch("cross_entropy_soft: target shape " + shape_str(target_probs.shape));
  Array lp = log_softmax_rows(logits);
  return ops::scale(mean_all(ops::mul(lp, detach(target_probs))),
                    -static_cast<double>(logits.shape[1]));
}

Array cls_loss(const std::vector<Array>& preds, const std::vector<int>& labels) {
  if (preds.empty()) throw Error("cls_loss: empty prediction list");
  Array total = cross_entropy(preds.back(), labels);  // global branch
  for (std::size_t i = 0; i + 1 < preds.size(); ++i)
    total = ops::add(total, cross_entropy(preds[i], labels));
  return total;
}

Array fsl_loss(const Array& global_fsl_logits, const Array* adv_fsl_logits,
               const std::vector<int>& fsl_labels) {
  Array total = cross_entropy(global_fsl_logits, fsl_labels);
  if (adv_fsl_logits) total = ops::add(total, cross_entropy(*adv_fsl_logits, fsl_labels));
  return total;
}

Array dom_loss(const std::vector<Array>& feats, const std::vector<int>& domain_labels,
               const BackboneParams& p, bool train_mode, RngStream* rng) {
  if (feats.size() != domain_labels.size()) throw LengthMismatch("dom_loss: label count");
  Array total = zero_loss();
  for (std::size_t i = 0; i < feats.size(); ++i) {
    int d = domain_labels[i];
    if (d != 0 && d != 1) throw LabelOutOfRange("dom_loss: domain label must be 0 or 1");
    Array logits = discriminate_domain(p, feats[i], train_mode, rng);
    std::vector<int> labels(feats[i].shape[0], d);
    total = ops::add(total, cross_entropy(logits, labels));
  }
  return total;
}

Array con_loss(const std::vector<Array>& crop_preds, const Array& global_pred,
               const std::vector<Array>& crop_fsl_preds, const std::vector<int>& fsl_labels,
               double mix) {
  if (mix < 0.0 || mix > 1.0) throw Error("con_loss: mix must lie in [0, 1]");
  if (crop_preds.size() != crop_fsl_preds.size())
    throw LengthMismatch("con_loss: crop prediction lists differ");
  Array total = zero_loss();
  Array global_probs = ops::softmax(detach(global_pred));
  for (std::size_t i = 0; i < crop_preds.size(); ++i) {
    Array anchor = ops::scale(cross_entropy_soft(crop_preds[i], global_probs), mix);
    Array fsl = ops::scale(cross_entropy(crop_fsl_preds[i], fsl_labels), 1.0 - mix);
    total = ops::add(total, ops::add(anchor, fsl));
  }
  return total;
}

Array adv_kl_loss(const Array& adv_fsl_logits, const Array& global_fsl_logits) {
  require_rows(adv_fsl_logits, "adv_kl_loss");
  if (!same_shape(adv_fsl_logits, global_fsl_logits))
    throw ShapeMismatch("adv_kl_loss: logit shapes differ");
  Array pg = floor_probs(ops::softmax(global_fsl_logits), 1e-12);
  Array pa = floor_probs(ops::softmax(adv_fsl_logits), 1e-12);
  Array ratio_log = ops::sub(ops::log(pg), ops::log(pa));
  return mean_all(ops::mul(pg, ratio_log));
}

}  // namespace svasp
