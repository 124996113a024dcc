#pragma once

#include <vector>

#include "rdad/config.hpp"
#include "rdad/geometry.hpp"
#include "rdad/losses.hpp"
#include "rdad/tensor.hpp"

namespace rdad {

struct Proposal {
  Box box;
  float score = 0.0f;      // objectness in [0,1]
  float scale_tag = 1.0f;  // the s applied (1.0 for originals)
};

// Decode RPN outputs onto anchors, clip, filter tiny boxes, score-sort,
// pre-NMS cut, NMS, post-NMS cut. scores/deltas are the raw head outputs
// (1,A,fh,fw) / (1,4A,fh,fw); objectness goes through a sigmoid here.
std::vector<Proposal> generate_proposals(const Tensor& score_logits, const Tensor& deltas,
                                         const std::vector<Box>& anchors, float img_w, float img_h,
                                         const MrpConfig& cfg);

// Each proposal emits one rescaled, clipped copy per scale factor, tagged
// with s; the s=1 copy is the original.
std::vector<Proposal> multiscale_expand(const std::vector<Proposal>& proposals,
                                        const std::vector<float>& scale_set, float img_w,
                                        float img_h);

struct RoiSample {
  std::vector<LabeledRoI> rois;
  bool short_batch = false;  // not enough candidates to fill the batch
};

// Balanced foreground/background sampling: up to fg_fraction*batch positives
// uniformly, remainder backgrounds; deterministic given the RNG state.
RoiSample sample_rois(const std::vector<Proposal>& proposals,
                      const std::vector<std::pair<Box, int>>& gts, int batch_size,
                      float fg_fraction, Rng& rng);

// Flat index of anchor a at cell (row, col) into the (1,A,fh,fw) score map.
inline int anchor_flat_index(int a, int row, int col, int fh, int fw) {
  return (a * fh + row) * fw + col;
}

}  // namespace rdad
