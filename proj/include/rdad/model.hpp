#pragma once

#include <map>
#include <string>

#include "rdad/autodiff.hpp"
#include "rdad/config.hpp"
#include "rdad/geometry.hpp"
#include "rdad/tensor.hpp"

namespace rdad {

// One assembly block: two convolution branches (kernels w, biases b) whose
// ReLU outputs are merged element-wise.
struct RabParams {
  TensorPtr wp, bp;  // branch taking p
  TensorPtr wq, bq;  // branch taking q
  int m = 3;
  int dilation = 1;
  std::string merge = "max";
};

// Padding that keeps a valid conv legal: 0 while the extent fits the kernel,
// otherwise just enough to produce a 1-extent output.
int pad_for(int extent, int m, int dilation = 1);

// max(relu(conv(p)), relu(conv(q))) with valid convolution (shrink m-1), the
// merge selectable for the ablation arms.
TensorPtr rab_forward(Tape& t, const TensorPtr& p, const TensorPtr& q, const RabParams& params);

// RoI-pooled whole feature plus the four part features pooled from the
// (optionally 2x-upsampled) map.
struct MultiRegionFeatures {
  TensorPtr whole;                       // h_roi x w_roi
  TensorPtr left, right, upper, bottom;  // ceil(h_roi/2) square
  bool degenerate = false;
};

MultiRegionFeatures extract_multiregion_features(Tape& t, const TensorPtr& feat,
                                                 const TensorPtr& upsampled_feat,
                                                 const Box& roi, int h_roi, int w_roi,
                                                 float stride);

class DetectionModel {
 public:
  explicit DetectionModel(const RunConfig& cfg);

  TensorPtr backbone_forward(Tape& t, const TensorPtr& image) const;

  struct RpnOut {
    TensorPtr logits;  // (1, A, fh, fw) objectness logits
    TensorPtr deltas;  // (1, 4A, fh, fw)
  };
  RpnOut rpn_forward(Tape& t, const TensorPtr& feat) const;

  struct RdaOut {
    TensorPtr cls_logits;  // (1, cls+1, 1, 1)
    TensorPtr box_deltas;  // (1, 4(cls+1), 1, 1)
    bool degenerate = false;
  };
  // upsampled_feat may be null when cfg.rda.use_upsample is off.
  RdaOut rda_forward(Tape& t, const TensorPtr& feat, const TensorPtr& upsampled_feat,
                     const Box& roi) const;

  const std::map<std::string, TensorPtr>& params() const { return params_; }
  std::map<std::string, TensorPtr>& params() { return params_; }
  void zero_grads();
  bool all_finite() const;

  const RunConfig& config() const { return cfg_; }
  int num_classes() const { return cfg_.num_classes; }
  int head_input_dim() const { return head_dim_; }
  int comb_extent() const { return e2_; }  // spatial extent entering stage 3
  int final_extent() const { return e3_; }

 private:
  TensorPtr param(const std::string& name, int n, int c, int h, int w, Rng& rng, float stddev);
  RabParams rab(const std::string& prefix) const;
  TensorPtr whole_branch(Tape& t, const TensorPtr& whole) const;

  RunConfig cfg_;
  std::map<std::string, TensorPtr> params_;
  int part_ext_ = 0;  // ceil(h_roi/2)
  int e1_ = 0, e2_ = 0, e3_ = 0;
  int n_whole_convs_ = 0;
  int head_dim_ = 0;
};

}  // namespace rdad
