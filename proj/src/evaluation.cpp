#include "rdad/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace rdad {

namespace {

// Greedy matching of descending-score detections to unmatched gts of one
// class; returns TP/FP flags in score order plus the gt count.
struct MatchResult {
  std::vector<char> tp;
  int n_gt = 0;
};

MatchResult match_class(const std::vector<Detection>& detections,
                        const std::vector<GroundTruth>& gts, int class_id, float iou_thresh) {
  MatchResult r;
  std::vector<int> det_idx;
  for (size_t i = 0; i < detections.size(); ++i)
    if (detections[i].class_id == class_id) det_idx.push_back(static_cast<int>(i));
  std::stable_sort(det_idx.begin(), det_idx.end(), [&](int a, int b) {
    return detections[a].score > detections[b].score;
  });

  std::vector<int> gt_idx;
  for (size_t i = 0; i < gts.size(); ++i)
    if (gts[i].class_id == class_id) gt_idx.push_back(static_cast<int>(i));
  r.n_gt = static_cast<int>(gt_idx.size());

  std::vector<char> gt_used(gts.size(), 0);
  for (int di : det_idx) {
    const Detection& d = detections[di];
    float best_iou = 0.0f;
    int best_gt = -1;
    for (int gi : gt_idx) {
      if (gt_used[gi] || gts[gi].image_id != d.image_id) continue;
      const float v = iou(d.box, gts[gi].box);
      if (v > best_iou) {
        best_iou = v;
        best_gt = gi;
      }
    }
    if (best_gt >= 0 && best_iou >= iou_thresh) {
      gt_used[best_gt] = 1;
      r.tp.push_back(1);
    } else {
      r.tp.push_back(0);
    }
  }
  return r;
}

double ap_from_matches(const MatchResult& m) {
  if (m.n_gt == 0) return 0.0;
  if (m.tp.empty()) return 0.0;
  const size_t n = m.tp.size();
  std::vector<double> precision(n), recall(n);
  int tp_acc = 0;
  for (size_t i = 0; i < n; ++i) {
    tp_acc += m.tp[i];
    precision[i] = static_cast<double>(tp_acc) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp_acc) / m.n_gt;
  }
  // monotone envelope, then exact area under the staircase
  for (size_t i = n - 1; i > 0; --i)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace

std::optional<double> voc_ap(const std::vector<Detection>& detections,
                             const std::vector<GroundTruth>& gts, int class_id,
                             float iou_thresh) {
  MatchResult m = match_class(detections, gts, class_id, iou_thresh);
  if (m.n_gt == 0) return std::nullopt;
  return ap_from_matches(m);
}

double mean_ap(const std::vector<Detection>& detections, const std::vector<GroundTruth>& gts,
               int num_classes, float iou_thresh) {
  double acc = 0.0;
  int defined = 0;
  for (int c = 1; c <= num_classes; ++c) {
    auto ap = voc_ap(detections, gts, c, iou_thresh);
    if (ap) {
      acc += *ap;
      ++defined;
    }
  }
  if (defined == 0) throw std::invalid_argument("mean_ap: no class has ground truth");
  return acc / defined;
}

CocoSweepResult coco_sweep(const std::vector<Detection>& detections,
                           const std::vector<GroundTruth>& gts, int num_classes,
                           float small_area, float large_area) {
  CocoSweepResult r;
  for (int i = 0; i < 10; ++i) {
    const float thresh = 0.5f + 0.05f * i;
    r.per_threshold.push_back(mean_ap(detections, gts, num_classes, thresh));
  }
  r.map = std::accumulate(r.per_threshold.begin(), r.per_threshold.end(), 0.0) / 10.0;

  auto bucket_ap = [&](auto keep) {
    std::vector<GroundTruth> bg;
    std::set<int> imgs;
    for (const auto& g : gts)
      if (keep(g.box.area())) {
        bg.push_back(g);
        imgs.insert(g.image_id);
      }
    if (bg.empty()) return 0.0;
    std::vector<Detection> bd;
    for (const auto& d : detections)
      if (imgs.count(d.image_id) && keep(d.box.area())) bd.push_back(d);
    double acc = 0.0;
    int defined = 0;
    for (int c = 1; c <= num_classes; ++c) {
      auto ap = voc_ap(bd, bg, c, 0.5f);
      if (ap) {
        acc += *ap;
        ++defined;
      }
    }
    return defined ? acc / defined : 0.0;
  };
  r.ap_small = bucket_ap([&](float a) { return a < small_area; });
  r.ap_medium = bucket_ap([&](float a) { return a >= small_area && a <= large_area; });
  r.ap_large = bucket_ap([&](float a) { return a > large_area; });
  return r;
}

double average_recall(const std::vector<Detection>& detections,
                      const std::vector<GroundTruth>& gts, int num_classes, int top_k,
                      float iou_thresh) {
  // keep top-k per image by score
  std::map<int, std::vector<Detection>> per_img;
  for (const auto& d : detections) per_img[d.image_id].push_back(d);
  std::vector<Detection> kept;
  for (auto& [id, v] : per_img) {
    std::stable_sort(v.begin(), v.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    for (size_t i = 0; i < v.size() && static_cast<int>(i) < top_k; ++i) kept.push_back(v[i]);
  }
  int matched = 0, total = static_cast<int>(gts.size());
  for (int c = 1; c <= num_classes; ++c) {
    MatchResult m = match_class(kept, gts, c, iou_thresh);
    matched += std::accumulate(m.tp.begin(), m.tp.end(), 0);
  }
  return total ? static_cast<double>(matched) / total : 0.0;
}

void write_detections(const std::string& path, const std::vector<Detection>& dets) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_detections: cannot open " + path);
  for (const auto& d : dets) {
    nlohmann::ordered_json j = {{"image_id", d.image_id},
                                {"class", d.class_id},
                                {"score", d.score},
                                {"box", {d.box.x, d.box.y, d.box.w, d.box.h}}};
    f << j.dump() << "\n";
  }
}

std::vector<Detection> read_detections(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_detections: cannot open " + path);
  std::vector<Detection> dets;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    Detection d;
    d.image_id = j.at("image_id").get<int>();
    d.class_id = j.at("class").get<int>();
    d.score = j.at("score").get<float>();
    const auto& b = j.at("box");
    d.box = Box{b.at(0).get<float>(), b.at(1).get<float>(), b.at(2).get<float>(), b.at(3).get<float>()};
    dets.push_back(d);
  }
  return dets;
}

}  // namespace rdad
