#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "rdad/datagen.hpp"
#include "rdad/losses.hpp"
#include "rdad/model.hpp"

namespace rdad {

struct LossRow {
  int iteration = 0;
  float rpn_cls = 0, rpn_reg = 0, rda_cls = 0, rda_reg = 0, total = 0;
  double val_map = -1.0;  // < 0 when no validation ran this iteration
};

struct TrainResult {
  std::vector<LossRow> log;
  double final_val_map = -1.0;
};

// Joint RPN + RDA training: per iteration one image, 256-anchor RPN batch,
// proposal generation, multiscale expansion, 64-RoI RDA batch, joint
// backward, SGD-with-momentum step. Reproducible from the config seed.
// log_csv (optional) receives the loss table; snapshot_path (optional) is
// written when a NaN loss aborts the run.
TrainResult train(const std::vector<Scene>& train_scenes, const std::vector<Scene>& val_scenes,
                  DetectionModel& model, std::ostream* log_csv = nullptr,
                  const std::string& snapshot_path = "");

}  // namespace rdad
