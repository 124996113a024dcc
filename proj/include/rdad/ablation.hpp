#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "rdad/config.hpp"
#include "rdad/datagen.hpp"

namespace rdad {

// One configuration arm of the ablation table. paper_ref < 0 means the
// reference column has no entry for this arm.
struct AblationArm {
  std::string name;
  double paper_ref = -1.0;
  std::function<void(RunConfig&)> modify;
};

struct AblationRow {
  std::string name;
  double paper_ref = -1.0;
  std::vector<double> per_seed_map;
  double median_map = 0.0;
};

// The seven-arm progression of the reference table: baseline, 3-scale MRP,
// 5-scale MRP, decomposition, and their combinations up to the full model.
std::vector<AblationArm> table1_arms();
// Merge-unit comparison arms: max vs sum vs concat, m in {3,5}.
std::vector<AblationArm> table2_arms();
// Minimal gated set: whole-region baseline, full config, sum-merge arm.
std::vector<AblationArm> core_arms();

// Trains one model per (arm, seed) and evaluates mAP@0.5 on the test scenes.
std::vector<AblationRow> ablation_report(const std::vector<Scene>& train_scenes,
                                         const std::vector<Scene>& test_scenes,
                                         const RunConfig& base,
                                         const std::vector<AblationArm>& arms,
                                         const std::vector<uint64_t>& seeds,
                                         std::ostream* progress = nullptr);

std::string ablation_markdown(const std::vector<AblationRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace rdad
