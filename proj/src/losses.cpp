#include "rdad/losses.hpp"

#include <stdexcept>

namespace rdad {

std::vector<LabeledRoI> assign_labels(const std::vector<Box>& rois,
                                      const std::vector<std::pair<Box, int>>& gts,
                                      float fg_thresh, float bg_low) {
  std::vector<LabeledRoI> out;
  out.reserve(rois.size());
  for (const Box& roi : rois) {
    LabeledRoI l;
    l.box = roi;
    float best_iou = 0.0f;
    int best_gt = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      const float v = iou(roi, gts[g].first);
      if (v > best_iou) {  // strict > keeps the lower-index gt on ties
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best_iou > fg_thresh) {
      l.label = gts[best_gt].second;
      l.matched_gt = best_gt;
      l.target = encode_deltas(roi, gts[best_gt].first);
    } else if (best_iou >= bg_low) {
      l.label = 0;
    } else {
      l.label = 0;
      l.excluded = true;
    }
    out.push_back(l);
  }
  return out;
}

TensorPtr multitask_loss(Tape& t, const TensorPtr& cls_logits, int label,
                         const TensorPtr& box_deltas, const Delta& target, float lambda) {
  const int ncls = static_cast<int>(cls_logits->numel());
  if (label < 0 || label >= ncls) throw std::invalid_argument("multitask_loss: bad label");
  if (box_deltas->numel() != static_cast<size_t>(4 * ncls))
    throw std::invalid_argument("multitask_loss: delta head size mismatch");

  TensorPtr loss = ops::softmax_cross_entropy(t, cls_logits, label);
  if (label >= 1 && lambda > 0) {
    const int base = 4 * label;
    auto slice = ops::gather(t, box_deltas, {base, base + 1, base + 2, base + 3});
    auto reg = ops::smooth_l1_sum(t, slice, {target.tx, target.ty, target.tw, target.th});
    loss = ops::add(t, loss, ops::scale(t, reg, lambda));
  }
  return loss;
}

void sgd_momentum_step(std::vector<float>& params, const std::vector<float>& grads,
                       std::vector<float>& velocity, float lr, float momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw std::invalid_argument("sgd_momentum_step: size mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

}  // namespace rdad
