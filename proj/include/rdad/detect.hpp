#pragma once

#include <vector>

#include "rdad/evaluation.hpp"
#include "rdad/model.hpp"

namespace rdad {

// Full inference path: backbone -> RPN -> proposals -> optional multiscale
// expansion -> per-RoI RDA head -> per-class decode, score threshold,
// per-class NMS. Deterministic given model and image.
std::vector<Detection> detect(const TensorPtr& image, const DetectionModel& model,
                              int image_id = 0, float score_thresh = 0.5f,
                              float nms_thresh = 0.3f);

}  // namespace rdad
