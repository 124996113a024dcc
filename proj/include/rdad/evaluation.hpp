#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rdad/config.hpp"
#include "rdad/geometry.hpp"

namespace rdad {

struct Detection {
  int image_id = 0;
  int class_id = 0;
  float score = 0.0f;
  Box box;
};

struct GroundTruth {
  int image_id = 0;
  int class_id = 0;
  Box box;
};

// Area under the exact (all-points interpolated) precision-recall staircase
// for one class. nullopt when the class has no ground truth.
std::optional<double> voc_ap(const std::vector<Detection>& detections,
                             const std::vector<GroundTruth>& gts, int class_id,
                             float iou_thresh = 0.5f);

// Arithmetic mean over the classes that have ground truth.
double mean_ap(const std::vector<Detection>& detections, const std::vector<GroundTruth>& gts,
               int num_classes, float iou_thresh = 0.5f);

struct CocoSweepResult {
  double map = 0.0;                     // mean over the 10 thresholds
  std::vector<double> per_threshold;    // 0.5, 0.55, ..., 0.95
  double ap_small = 0.0, ap_medium = 0.0, ap_large = 0.0;  // at IoU 0.5
};
CocoSweepResult coco_sweep(const std::vector<Detection>& detections,
                           const std::vector<GroundTruth>& gts, int num_classes,
                           float small_area = 256.0f, float large_area = 2304.0f);

// AR@k: recall at IoU 0.5 keeping only the top-k detections per image.
double average_recall(const std::vector<Detection>& detections,
                      const std::vector<GroundTruth>& gts, int num_classes, int top_k,
                      float iou_thresh = 0.5f);

// JSON-lines detection dump: {image_id, class, score, box:[x,y,w,h]}
void write_detections(const std::string& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections(const std::string& path);

}  // namespace rdad
