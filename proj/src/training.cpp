#include "rdad/training.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "rdad/checkpoint.hpp"
#include "rdad/detect.hpp"
#include "rdad/evaluation.hpp"
#include "rdad/mrp.hpp"

namespace rdad {

namespace {

std::vector<std::pair<Box, int>> scene_gts(const Scene& s) {
  std::vector<std::pair<Box, int>> gts;
  for (const auto& o : s.objects) gts.emplace_back(o.box, o.class_id);
  return gts;
}

double validation_map(const std::vector<Scene>& val_scenes, const DetectionModel& model) {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  for (size_t i = 0; i < val_scenes.size(); ++i) {
    auto d = detect(val_scenes[i].image, model, static_cast<int>(i), 0.05f);
    dets.insert(dets.end(), d.begin(), d.end());
    for (const auto& o : val_scenes[i].objects)
      gts.push_back(GroundTruth{static_cast<int>(i), o.class_id, o.box});
  }
  if (gts.empty()) return 0.0;
  return mean_ap(dets, gts, model.num_classes(), 0.5f);
}

}  // namespace

TrainResult train(const std::vector<Scene>& train_scenes, const std::vector<Scene>& val_scenes,
                  DetectionModel& model, std::ostream* log_csv,
                  const std::string& snapshot_path) {
  if (train_scenes.empty()) throw std::invalid_argument("train: empty dataset");
  const RunConfig& cfg = model.config();
  const TrainConfig& tc = cfg.training;
  const MrpConfig& mrp = cfg.mrp;
  Rng rng(tc.seed);

  std::map<std::string, std::vector<float>> velocity;
  for (const auto& [name, p] : model.params()) velocity[name].assign(p->numel(), 0.0f);

  MrpConfig train_mrp = mrp;  // training-time retention is looser than inference
  train_mrp.post_nms_top_n = mrp.post_nms_top_n;

  TrainResult result;
  if (log_csv) (*log_csv) << "iteration,rpn_cls,rpn_reg,rda_cls,rda_reg,total,val_map\n";

  const int total_iters = tc.total_iterations();
  for (int iter = 0; iter < total_iters; ++iter) {
    const Scene& scene = train_scenes[rng.uniform_int(0, static_cast<int>(train_scenes.size()) - 1)];
    const auto gts = scene_gts(scene);
    const float img_w = static_cast<float>(scene.image->w);
    const float img_h = static_cast<float>(scene.image->h);

    Tape t;
    auto feat = model.backbone_forward(t, scene.image);
    auto rpn = model.rpn_forward(t, feat);

    AnchorGridConfig grid = mrp.anchors;
    grid.stride = static_cast<float>(cfg.backbone.stride);
    const auto anchors = generate_anchors(feat->h, feat->w, grid);
    const int A = grid.anchors_per_cell();
    const int fh = feat->h, fw = feat->w;

    // --- RPN batch: class-agnostic labels on raw anchors ---
    std::vector<Box> anchor_boxes(anchors.begin(), anchors.end());
    std::vector<std::pair<Box, int>> agnostic_gts;
    for (const auto& [b, c] : gts) agnostic_gts.emplace_back(b, 1);
    auto anchor_labels = assign_labels(anchor_boxes, agnostic_gts);

    std::vector<int> fg_idx, bg_idx;
    for (size_t i = 0; i < anchor_labels.size(); ++i) {
      if (anchor_labels[i].excluded) continue;
      (anchor_labels[i].label >= 1 ? fg_idx : bg_idx).push_back(static_cast<int>(i));
    }
    rng.shuffle(fg_idx);
    rng.shuffle(bg_idx);
    const int want_fg = std::min(static_cast<int>(mrp.fg_fraction * mrp.rpn_batch),
                                 static_cast<int>(fg_idx.size()));
    const int want_bg = std::min(mrp.rpn_batch - want_fg, static_cast<int>(bg_idx.size()));
    fg_idx.resize(want_fg);
    bg_idx.resize(want_bg);

    // anchor list index (cell-major) -> flat (A, fh, fw) map index
    auto map_index = [&](int ai) {
      const int a = ai % A;
      const int cell = ai / A;
      return anchor_flat_index(a, cell / fw, cell % fw, fh, fw);
    };

    std::vector<int> cls_indices;
    std::vector<float> cls_targets;
    for (int i : fg_idx) {
      cls_indices.push_back(map_index(i));
      cls_targets.push_back(1.0f);
    }
    for (int i : bg_idx) {
      cls_indices.push_back(map_index(i));
      cls_targets.push_back(0.0f);
    }

    TensorPtr rpn_cls_loss;
    if (!cls_indices.empty()) {
      auto picked = ops::gather(t, rpn.logits, cls_indices);
      rpn_cls_loss = ops::bce_with_logits_mean(t, picked, cls_targets);
    } else {
      rpn_cls_loss = make_tensor(1, 1, 1, 1);
    }

    TensorPtr rpn_reg_loss = make_tensor(1, 1, 1, 1);
    if (!fg_idx.empty()) {
      std::vector<int> reg_indices;
      std::vector<float> reg_targets;
      for (int i : fg_idx) {
        const int a = i % A;
        const int cell = i / A;
        const int row = cell / fw, col = cell % fw;
        for (int v = 0; v < 4; ++v)
          reg_indices.push_back(((4 * a + v) * fh + row) * fw + col);
        const Delta& tg = anchor_labels[i].target;
        reg_targets.insert(reg_targets.end(), {tg.tx, tg.ty, tg.tw, tg.th});
      }
      auto picked = ops::gather(t, rpn.deltas, reg_indices);
      auto sl1 = ops::smooth_l1_sum(t, picked, reg_targets);
      rpn_reg_loss = ops::scale(t, sl1, tc.lambda / static_cast<float>(fg_idx.size()));
    }

    // --- RDA batch ---
    auto proposals = generate_proposals(*rpn.logits, *rpn.deltas, anchors, img_w, img_h, train_mrp);
    // ground-truth boxes join the candidate pool so positives exist from the start
    for (const auto& [b, c] : gts) proposals.push_back(Proposal{b, 1.0f, 1.0f});
    proposals = multiscale_expand(proposals, mrp.scale_set, img_w, img_h);
    auto sample = sample_rois(proposals, gts, mrp.rda_batch, mrp.fg_fraction, rng);

    TensorPtr upfeat;
    if (cfg.rda.use_decomposition && cfg.rda.use_upsample) upfeat = ops::upsample2x(t, feat);

    TensorPtr rda_cls_sum = make_tensor(1, 1, 1, 1);
    TensorPtr rda_reg_sum = make_tensor(1, 1, 1, 1);
    int n_rois = 0;
    for (const LabeledRoI& roi : sample.rois) {
      auto out = model.rda_forward(t, feat, upfeat, roi.box);
      if (out.degenerate) continue;
      ++n_rois;
      rda_cls_sum = ops::add(t, rda_cls_sum, ops::softmax_cross_entropy(t, out.cls_logits, roi.label));
      if (roi.label >= 1) {
        const int base = 4 * roi.label;
        auto slice = ops::gather(t, out.box_deltas, {base, base + 1, base + 2, base + 3});
        auto reg = ops::smooth_l1_sum(t, slice, {roi.target.tx, roi.target.ty,
                                                 roi.target.tw, roi.target.th});
        rda_reg_sum = ops::add(t, rda_reg_sum, reg);
      }
    }
    const float inv_m = n_rois > 0 ? 1.0f / static_cast<float>(n_rois) : 0.0f;
    auto rda_cls_loss = ops::scale(t, rda_cls_sum, inv_m);
    auto rda_reg_loss = ops::scale(t, rda_reg_sum, tc.lambda * inv_m);

    auto total = ops::add(t, ops::add(t, rpn_cls_loss, rpn_reg_loss),
                          ops::add(t, rda_cls_loss, rda_reg_loss));

    if (!std::isfinite(total->data[0])) {
      if (!snapshot_path.empty()) save_checkpoint(snapshot_path, model.params());
      throw std::runtime_error("train: NaN/Inf loss at iteration " + std::to_string(iter) +
                               (snapshot_path.empty() ? "" : "; snapshot written to " + snapshot_path));
    }

    model.zero_grads();
    t.backward(total);

    const float lr = tc.lr_at(iter);
    for (auto& [name, p] : model.params())
      sgd_momentum_step(p->data, p->grad, velocity[name], lr, tc.momentum);

    LossRow row;
    row.iteration = iter;
    row.rpn_cls = rpn_cls_loss->data[0];
    row.rpn_reg = rpn_reg_loss->data[0];
    row.rda_cls = rda_cls_loss->data[0];
    row.rda_reg = rda_reg_loss->data[0];
    row.total = total->data[0];
    const bool do_val = tc.val_interval > 0 && !val_scenes.empty() &&
                        ((iter + 1) % tc.val_interval == 0 || iter + 1 == total_iters);
    if (do_val) row.val_map = validation_map(val_scenes, model);
    result.log.push_back(row);
    if (row.val_map >= 0) result.final_val_map = row.val_map;

    if (log_csv && (iter % tc.log_interval == 0 || do_val || iter + 1 == total_iters)) {
      (*log_csv) << row.iteration << "," << row.rpn_cls << "," << row.rpn_reg << ","
                 << row.rda_cls << "," << row.rda_reg << "," << row.total << ",";
      if (row.val_map >= 0) (*log_csv) << row.val_map;
      (*log_csv) << "\n";
    }
  }
  return result;
}

}  // namespace rdad
