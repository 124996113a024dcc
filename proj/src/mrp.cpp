#include "rdad/mrp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rdad {

std::vector<Proposal> generate_proposals(const Tensor& score_logits, const Tensor& deltas,
                                         const std::vector<Box>& anchors, float img_w, float img_h,
                                         const MrpConfig& cfg) {
  const int A = score_logits.c, fh = score_logits.h, fw = score_logits.w;
  if (anchors.size() != static_cast<size_t>(A) * fh * fw)
    throw std::invalid_argument("generate_proposals: anchor count mismatch");
  if (deltas.c != 4 * A || deltas.h != fh || deltas.w != fw)
    throw std::invalid_argument("generate_proposals: delta map shape mismatch");

  std::vector<Box> boxes;
  std::vector<float> scores;
  boxes.reserve(anchors.size());
  for (int row = 0; row < fh; ++row)
    for (int col = 0; col < fw; ++col)
      for (int a = 0; a < A; ++a) {
        // anchors are row-major over cells, per-cell in (scale, ratio) order
        const size_t ai = (static_cast<size_t>(row) * fw + col) * A + a;
        const float logit = score_logits.at(0, a, row, col);
        const float score = 1.0f / (1.0f + std::exp(-logit));
        const Delta d{deltas.at(0, 4 * a + 0, row, col), deltas.at(0, 4 * a + 1, row, col),
                      deltas.at(0, 4 * a + 2, row, col), deltas.at(0, 4 * a + 3, row, col)};
        auto clipped = clip_to_image(decode_deltas(anchors[ai], d), img_w, img_h);
        if (!clipped) continue;
        if (clipped->w < cfg.min_side || clipped->h < cfg.min_side) continue;
        boxes.push_back(*clipped);
        scores.push_back(score);
      }

  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  if (static_cast<int>(order.size()) > cfg.pre_nms_top_n) order.resize(cfg.pre_nms_top_n);

  std::vector<Box> top_boxes;
  std::vector<float> top_scores;
  for (int i : order) {
    top_boxes.push_back(boxes[i]);
    top_scores.push_back(scores[i]);
  }
  std::vector<int> kept = nms(top_boxes, top_scores, cfg.nms_threshold);
  if (static_cast<int>(kept.size()) > cfg.post_nms_top_n) kept.resize(cfg.post_nms_top_n);

  std::vector<Proposal> out;
  out.reserve(kept.size());
  for (int i : kept) out.push_back(Proposal{top_boxes[i], top_scores[i], 1.0f});
  return out;
}

std::vector<Proposal> multiscale_expand(const std::vector<Proposal>& proposals,
                                        const std::vector<float>& scale_set, float img_w,
                                        float img_h) {
  if (scale_set.empty()) throw std::invalid_argument("multiscale_expand: empty scale set");
  std::vector<Proposal> out;
  out.reserve(proposals.size() * scale_set.size());
  for (const Proposal& p : proposals)
    for (float s : scale_set) {
      if (s == 1.0f) {
        out.push_back(Proposal{p.box, p.score, 1.0f});
        continue;
      }
      auto clipped = clip_to_image(rescale_box(p.box, s), img_w, img_h);
      if (!clipped) continue;
      out.push_back(Proposal{*clipped, p.score, s});
    }
  return out;
}

RoiSample sample_rois(const std::vector<Proposal>& proposals,
                      const std::vector<std::pair<Box, int>>& gts, int batch_size,
                      float fg_fraction, Rng& rng) {
  if (batch_size < 2) throw std::invalid_argument("sample_rois: batch_size < 2");
  std::vector<Box> boxes;
  boxes.reserve(proposals.size());
  for (const auto& p : proposals) boxes.push_back(p.box);
  std::vector<LabeledRoI> labeled = assign_labels(boxes, gts);
  for (size_t i = 0; i < labeled.size(); ++i) labeled[i].score = proposals[i].score;

  std::vector<int> fg, bg;
  for (size_t i = 0; i < labeled.size(); ++i) {
    if (labeled[i].excluded) continue;
    (labeled[i].label >= 1 ? fg : bg).push_back(static_cast<int>(i));
  }
  const int want_fg = std::min(static_cast<int>(fg_fraction * batch_size),
                               static_cast<int>(fg.size()));
  rng.shuffle(fg);
  rng.shuffle(bg);
  const int want_bg = std::min(batch_size - want_fg, static_cast<int>(bg.size()));

  RoiSample out;
  for (int i = 0; i < want_fg; ++i) out.rois.push_back(labeled[fg[i]]);
  for (int i = 0; i < want_bg; ++i) out.rois.push_back(labeled[bg[i]]);
  out.short_batch = static_cast<int>(out.rois.size()) < batch_size;
  return out;
}

}  // namespace rdad
