#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdad/geometry.hpp"

namespace rdad {

using ordered_json = nlohmann::ordered_json;

struct DatasetSpec {
  uint64_t seed = 7;
  int image_count = 250;
  int height = 128, width = 128;
  int classes = 3;  // circle, square, triangle
  int min_objects = 1, max_objects = 3;
  float occlusion_prob = 0.3f;
  float noise_level = 0.02f;
};

struct BackboneConfig {
  std::vector<int> channels = {16, 32, 32};  // stage outputs, 3 -> ... -> C_feat
  int stride = 8;
  uint64_t seed = 1;

  int feat_channels() const { return channels.back(); }
};

struct MrpConfig {
  std::vector<float> scale_set = {0.5f, 0.7f, 1.0f, 1.2f, 1.5f};
  int pre_nms_top_n = 1000;
  int post_nms_top_n = 300;
  float nms_threshold = 0.7f;
  int rpn_batch = 256;
  int rda_batch = 64;
  float fg_fraction = 0.5f;
  float min_score = 0.05f;
  float min_side = 4.0f;
  float min_gt_overlap = 0.1f;
  bool expand_at_inference = true;
  AnchorGridConfig anchors;
};

struct RdaConfig {
  int m = 3;           // RAB kernel extent
  int k = 32;          // RAB channel count
  int h_roi = 14, w_roi = 14;
  bool use_upsample = true;
  bool use_decomposition = true;
  std::string merge = "max";  // max | sum | concat
  int dilation = 1;
};

struct TrainConfig {
  float lambda = 1.0f;
  float momentum = 0.9f;
  // two-phase schedule: (iterations, learning rate) segments
  std::vector<std::pair<int, float>> lr_schedule = {{3000, 1e-3f}, {2000, 1e-4f}};
  uint64_t seed = 42;
  int max_iterations = 0;  // 0 = sum of schedule segments
  int val_interval = 0;    // 0 = no periodic validation
  int log_interval = 50;

  int total_iterations() const {
    if (max_iterations > 0) return max_iterations;
    int t = 0;
    for (auto& [it, lr] : lr_schedule) t += it;
    return t;
  }
  float lr_at(int iter) const {
    int acc = 0;
    for (auto& [it, lr] : lr_schedule) {
      acc += it;
      if (iter < acc) return lr;
    }
    return lr_schedule.back().second;
  }
};

struct EvalConfig {
  float iou_thresh = 0.5f;
  float score_thresh = 0.05f;
  // S/M/L area cutoffs scaled to 128x128 images
  float small_area = 16.0f * 16.0f;
  float large_area = 48.0f * 48.0f;
};

// The full CLI configuration document: blocks {dataset, backbone, mrp, rda,
// training, eval}. Unknown keys anywhere are rejected.
struct RunConfig {
  DatasetSpec dataset;
  BackboneConfig backbone;
  MrpConfig mrp;
  RdaConfig rda;
  TrainConfig training;
  EvalConfig eval;
  int num_classes = 3;

  static RunConfig from_json(const ordered_json& j);
  static RunConfig from_file(const std::string& path);
  ordered_json to_json() const;
  void validate() const;
};

}  // namespace rdad
