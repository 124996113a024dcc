#pragma once

#include <utility>
#include <vector>

#include "rdad/autodiff.hpp"
#include "rdad/geometry.hpp"

namespace rdad {

// Box with assigned class label and regression target. label 0 is background;
// excluded marks candidates outside both the positive and negative IoU bands.
struct LabeledRoI {
  Box box;
  int label = 0;
  Delta target;       // valid only for label >= 1
  int matched_gt = -1;
  bool excluded = false;
  float score = 0.0f;  // carried over from the proposal
};

// IoU > 0.5 with some gt -> positive (best-IoU gt, ties to lower index);
// IoU in [0.1, 0.5] -> background; below -> excluded from sampling.
std::vector<LabeledRoI> assign_labels(const std::vector<Box>& rois,
                                      const std::vector<std::pair<Box, int>>& gts,
                                      float fg_thresh = 0.5f, float bg_low = 0.1f);

// L = -log p_{o*} + lambda [o* >= 1] sum_v smooth_l1(t_v - t*_v), with the
// regression slice taken at class o*. Differentiable w.r.t. logits and deltas.
TensorPtr multitask_loss(Tape& t, const TensorPtr& cls_logits, int label,
                         const TensorPtr& box_deltas, const Delta& target, float lambda);

// v <- momentum v + g ; theta <- theta - lr v
void sgd_momentum_step(std::vector<float>& params, const std::vector<float>& grads,
                       std::vector<float>& velocity, float lr, float momentum);

}  // namespace rdad
