#pragma once

#include <functional>
#include <vector>

#include "rdad/geometry.hpp"
#include "rdad/tensor.hpp"

namespace rdad {

// Define-by-run reverse-mode tape. A forward pass records one backward
// closure per op; backward() replays them in reverse, accumulating into the
// grad buffers of every tensor that participated. The tape is rebuilt per
// forward pass.
class Tape {
 public:
  void record(std::function<void()> back) { back_ops_.push_back(std::move(back)); }

  // loss must be scalar. Seeds d(loss)/d(loss) = 1 and accumulates gradients
  // for every reachable tensor; repeated calls accumulate.
  void backward(const TensorPtr& loss) {
    if (loss->numel() != 1)
      throw std::invalid_argument("backward: loss is not scalar (" + loss->shape_str() + ")");
    loss->ensure_grad();
    loss->grad[0] += 1.0f;
    for (auto it = back_ops_.rbegin(); it != back_ops_.rend(); ++it) (*it)();
  }

  size_t size() const { return back_ops_.size(); }
  void clear() { back_ops_.clear(); }

 private:
  std::vector<std::function<void()>> back_ops_;
};

namespace ops {

TensorPtr conv2d(Tape& t, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride = 1, int pad = 0, int dilation = 1);
TensorPtr relu(Tape& t, const TensorPtr& x);
// W is (out, in, 1, 1); x is flattened to length in.
TensorPtr linear(Tape& t, const TensorPtr& x, const TensorPtr& W, const TensorPtr& b);
// Softmax over all elements of each batch sample.
TensorPtr softmax(Tape& t, const TensorPtr& logits);
TensorPtr sigmoid(Tape& t, const TensorPtr& x);

// Element-wise max over two same-shape tensors; gradient follows the winning
// branch, ties to p.
TensorPtr max_merge(Tape& t, const TensorPtr& p, const TensorPtr& q);
TensorPtr add(Tape& t, const TensorPtr& a, const TensorPtr& b);
TensorPtr concat_channels(Tape& t, const TensorPtr& a, const TensorPtr& b);

TensorPtr upsample2x(Tape& t, const TensorPtr& x);
TensorPtr maxpool2x2(Tape& t, const TensorPtr& x);

// Fast-R-CNN-style max RoI pooling with rounded bin edges; empty bins give 0.
// degenerate (optional) is set when the roi misses the feature map entirely.
TensorPtr roi_pool(Tape& t, const TensorPtr& feat, const Box& roi, int out_h, int out_w,
                   float spatial_stride, bool* degenerate = nullptr);

// out[i] = x.data[indices[i]], shape (1, k, 1, 1).
TensorPtr gather(Tape& t, const TensorPtr& x, const std::vector<int>& indices);
TensorPtr sum(Tape& t, const TensorPtr& x);
TensorPtr scale(Tape& t, const TensorPtr& x, float k);

// -log softmax(logits)[label] for one sample; logits flattened.
TensorPtr softmax_cross_entropy(Tape& t, const TensorPtr& logits, int label);
// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
TensorPtr bce_with_logits_mean(Tape& t, const TensorPtr& logits, const std::vector<float>& targets);
// Sum of smooth-L1 penalties of (pred[i] - target[i]).
TensorPtr smooth_l1_sum(Tape& t, const TensorPtr& pred, const std::vector<float>& target);

}  // namespace ops

// Scalar smooth-L1: 0.5 z^2 inside |z| <= 1, |z| - 0.5 outside.
inline float smooth_l1(float z) {
  const float a = std::fabs(z);
  return a <= 1.0f ? 0.5f * z * z : a - 0.5f;
}
inline float smooth_l1_grad(float z) {
  return std::fabs(z) <= 1.0f ? z : (z > 0 ? 1.0f : -1.0f);
}

}  // namespace rdad
