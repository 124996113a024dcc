#include "rdad/detect.hpp"

#include <algorithm>
#include <stdexcept>

#include "rdad/mrp.hpp"

namespace rdad {

std::vector<Detection> detect(const TensorPtr& image, const DetectionModel& model, int image_id,
                              float score_thresh, float nms_thresh) {
  if (!model.all_finite())
    throw std::runtime_error("detect: model parameters contain NaN/Inf");
  const RunConfig& cfg = model.config();
  const float img_w = static_cast<float>(image->w);
  const float img_h = static_cast<float>(image->h);

  Tape t;
  auto feat = model.backbone_forward(t, image);
  auto rpn = model.rpn_forward(t, feat);
  AnchorGridConfig grid = cfg.mrp.anchors;
  grid.stride = static_cast<float>(cfg.backbone.stride);
  auto anchors = generate_anchors(feat->h, feat->w, grid);
  auto proposals = generate_proposals(*rpn.logits, *rpn.deltas, anchors, img_w, img_h, cfg.mrp);
  if (cfg.mrp.expand_at_inference)
    proposals = multiscale_expand(proposals, cfg.mrp.scale_set, img_w, img_h);

  TensorPtr upfeat;
  if (cfg.rda.use_decomposition && cfg.rda.use_upsample) upfeat = ops::upsample2x(t, feat);

  const int ncls = model.num_classes() + 1;
  std::vector<Box> cand_boxes;
  std::vector<float> cand_scores;
  std::vector<int> cand_cls;
  for (const Proposal& p : proposals) {
    auto out = model.rda_forward(t, feat, upfeat, p.box);
    if (out.degenerate) continue;
    Tape tmp;
    auto probs = ops::softmax(tmp, out.cls_logits);
    for (int c = 1; c < ncls; ++c) {
      const float s = probs->data[c];
      if (s < score_thresh) continue;
      const Delta d{out.box_deltas->data[4 * c + 0], out.box_deltas->data[4 * c + 1],
                    out.box_deltas->data[4 * c + 2], out.box_deltas->data[4 * c + 3]};
      auto box = clip_to_image(decode_deltas(p.box, d), img_w, img_h);
      if (!box) continue;
      cand_boxes.push_back(*box);
      cand_scores.push_back(s);
      cand_cls.push_back(c);
    }
  }

  std::vector<Detection> dets;
  for (int c = 1; c < ncls; ++c) {
    std::vector<Box> boxes;
    std::vector<float> scores;
    for (size_t i = 0; i < cand_boxes.size(); ++i)
      if (cand_cls[i] == c) {
        boxes.push_back(cand_boxes[i]);
        scores.push_back(cand_scores[i]);
      }
    for (int k : nms(boxes, scores, nms_thresh))
      dets.push_back(Detection{image_id, c, scores[k], boxes[k]});
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return dets;
}

}  // namespace rdad
