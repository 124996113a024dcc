#include "rdad/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace rdad {

namespace {

void reject_unknown(const ordered_json& j, const std::set<std::string>& known,
                    const std::string& block) {
  for (auto& [key, _] : j.items())
    if (!known.count(key))
      throw std::invalid_argument("config: unknown key \"" + key + "\" in block \"" + block + "\"");
}

template <typename T>
void get(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const ordered_json& j) {
  RunConfig c;
  reject_unknown(j, {"dataset", "backbone", "mrp", "rda", "training", "eval", "num_classes", "version"}, "<root>");
  get(j, "num_classes", c.num_classes);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d, {"seed", "image_count", "height", "width", "classes", "min_objects",
                       "max_objects", "occlusion_prob", "noise_level"}, "dataset");
    get(d, "seed", c.dataset.seed);
    get(d, "image_count", c.dataset.image_count);
    get(d, "height", c.dataset.height);
    get(d, "width", c.dataset.width);
    get(d, "classes", c.dataset.classes);
    get(d, "min_objects", c.dataset.min_objects);
    get(d, "max_objects", c.dataset.max_objects);
    get(d, "occlusion_prob", c.dataset.occlusion_prob);
    get(d, "noise_level", c.dataset.noise_level);
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    reject_unknown(b, {"channels", "stride", "seed"}, "backbone");
    get(b, "channels", c.backbone.channels);
    get(b, "stride", c.backbone.stride);
    get(b, "seed", c.backbone.seed);
  }
  if (j.contains("mrp")) {
    const auto& m = j.at("mrp");
    reject_unknown(m, {"scale_set", "pre_nms_top_n", "post_nms_top_n", "nms_threshold",
                       "rpn_batch", "rda_batch", "fg_fraction", "min_score", "min_side",
                       "min_gt_overlap", "expand_at_inference", "anchor_stride",
                       "anchor_scales", "anchor_ratios"}, "mrp");
    get(m, "scale_set", c.mrp.scale_set);
    get(m, "pre_nms_top_n", c.mrp.pre_nms_top_n);
    get(m, "post_nms_top_n", c.mrp.post_nms_top_n);
    get(m, "nms_threshold", c.mrp.nms_threshold);
    get(m, "rpn_batch", c.mrp.rpn_batch);
    get(m, "rda_batch", c.mrp.rda_batch);
    get(m, "fg_fraction", c.mrp.fg_fraction);
    get(m, "min_score", c.mrp.min_score);
    get(m, "min_side", c.mrp.min_side);
    get(m, "min_gt_overlap", c.mrp.min_gt_overlap);
    get(m, "expand_at_inference", c.mrp.expand_at_inference);
    get(m, "anchor_stride", c.mrp.anchors.stride);
    get(m, "anchor_scales", c.mrp.anchors.scales);
    get(m, "anchor_ratios", c.mrp.anchors.ratios);
  }
  if (j.contains("rda")) {
    const auto& r = j.at("rda");
    reject_unknown(r, {"m", "k", "h_roi", "w_roi", "use_upsample", "use_decomposition",
                       "merge", "dilation"}, "rda");
    get(r, "m", c.rda.m);
    get(r, "k", c.rda.k);
    get(r, "h_roi", c.rda.h_roi);
    get(r, "w_roi", c.rda.w_roi);
    get(r, "use_upsample", c.rda.use_upsample);
    get(r, "use_decomposition", c.rda.use_decomposition);
    get(r, "merge", c.rda.merge);
    get(r, "dilation", c.rda.dilation);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    reject_unknown(t, {"lambda", "momentum", "lr_schedule", "seed", "max_iterations",
                       "val_interval", "log_interval"}, "training");
    get(t, "lambda", c.training.lambda);
    get(t, "momentum", c.training.momentum);
    if (t.contains("lr_schedule")) {
      c.training.lr_schedule.clear();
      for (const auto& seg : t.at("lr_schedule"))
        c.training.lr_schedule.emplace_back(seg.at(0).get<int>(), seg.at(1).get<float>());
    }
    get(t, "seed", c.training.seed);
    get(t, "max_iterations", c.training.max_iterations);
    get(t, "val_interval", c.training.val_interval);
    get(t, "log_interval", c.training.log_interval);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, {"iou_thresh", "score_thresh", "small_area", "large_area"}, "eval");
    get(e, "iou_thresh", c.eval.iou_thresh);
    get(e, "score_thresh", c.eval.score_thresh);
    get(e, "small_area", c.eval.small_area);
    get(e, "large_area", c.eval.large_area);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  ordered_json j;
  f >> j;
  return from_json(j);
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["num_classes"] = num_classes;
  j["dataset"] = {{"seed", dataset.seed},
                  {"image_count", dataset.image_count},
                  {"height", dataset.height},
                  {"width", dataset.width},
                  {"classes", dataset.classes},
                  {"min_objects", dataset.min_objects},
                  {"max_objects", dataset.max_objects},
                  {"occlusion_prob", dataset.occlusion_prob},
                  {"noise_level", dataset.noise_level}};
  j["backbone"] = {{"channels", backbone.channels}, {"stride", backbone.stride},
                   {"seed", backbone.seed}};
  j["mrp"] = {{"scale_set", mrp.scale_set},
              {"pre_nms_top_n", mrp.pre_nms_top_n},
              {"post_nms_top_n", mrp.post_nms_top_n},
              {"nms_threshold", mrp.nms_threshold},
              {"rpn_batch", mrp.rpn_batch},
              {"rda_batch", mrp.rda_batch},
              {"fg_fraction", mrp.fg_fraction},
              {"min_score", mrp.min_score},
              {"min_side", mrp.min_side},
              {"min_gt_overlap", mrp.min_gt_overlap},
              {"expand_at_inference", mrp.expand_at_inference},
              {"anchor_stride", mrp.anchors.stride},
              {"anchor_scales", mrp.anchors.scales},
              {"anchor_ratios", mrp.anchors.ratios}};
  j["rda"] = {{"m", rda.m},        {"k", rda.k},
              {"h_roi", rda.h_roi}, {"w_roi", rda.w_roi},
              {"use_upsample", rda.use_upsample},
              {"use_decomposition", rda.use_decomposition},
              {"merge", rda.merge}, {"dilation", rda.dilation}};
  ordered_json sched = ordered_json::array();
  for (auto& [it, lr] : training.lr_schedule) sched.push_back({it, lr});
  j["training"] = {{"lambda", training.lambda},
                   {"momentum", training.momentum},
                   {"lr_schedule", sched},
                   {"seed", training.seed},
                   {"max_iterations", training.max_iterations},
                   {"val_interval", training.val_interval},
                   {"log_interval", training.log_interval}};
  j["eval"] = {{"iou_thresh", eval.iou_thresh},
               {"score_thresh", eval.score_thresh},
               {"small_area", eval.small_area},
               {"large_area", eval.large_area}};
  return j;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (dataset.image_count <= 0) fail("dataset.image_count must be positive");
  if (dataset.classes < 1) fail("dataset.classes must be >= 1");
  if (num_classes != dataset.classes) fail("num_classes must equal dataset.classes");
  if (backbone.channels.empty() || backbone.channels.back() <= 0) fail("backbone.channels empty");
  if (backbone.stride <= 0 || (backbone.stride & (backbone.stride - 1)))
    fail("backbone.stride must be a power of two");
  if (std::find(mrp.scale_set.begin(), mrp.scale_set.end(), 1.0f) == mrp.scale_set.end())
    fail("mrp.scale_set must contain 1.0");
  for (float s : mrp.scale_set)
    if (s <= 0) fail("mrp.scale_set entries must be positive");
  if (mrp.rpn_batch < 2 || mrp.rda_batch < 2) fail("mrp batch sizes must be >= 2");
  if (rda.m % 2 == 0 || rda.m < 1) fail("rda.m must be odd");
  if (rda.merge != "max" && rda.merge != "sum" && rda.merge != "concat")
    fail("rda.merge must be one of max|sum|concat");
  if (rda.dilation < 1) fail("rda.dilation must be >= 1");
  if (training.lambda < 0) fail("training.lambda must be >= 0");
  for (auto& [it, lr] : training.lr_schedule)
    if (lr <= 0) fail("training learning rates must be positive");
}

}  // namespace rdad
