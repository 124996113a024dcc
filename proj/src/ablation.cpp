#include "rdad/ablation.hpp"

#include <algorithm>
#include <sstream>

#include "rdad/detect.hpp"
#include "rdad/evaluation.hpp"
#include "rdad/training.hpp"

namespace rdad {

namespace {

void no_mrp(RunConfig& c) { c.mrp.scale_set = {1.0f}; }
void mrp3(RunConfig& c) { c.mrp.scale_set = {0.7f, 1.0f, 1.5f}; }
void mrp5(RunConfig& c) { c.mrp.scale_set = {0.5f, 0.7f, 1.0f, 1.2f, 1.5f}; }
void no_decomp(RunConfig& c) { c.rda.use_decomposition = false; }
void decomp(RunConfig& c) { c.rda.use_decomposition = true; }
void no_upsample(RunConfig& c) { c.rda.use_upsample = false; }
void upsample(RunConfig& c) { c.rda.use_upsample = true; }

}  // namespace

std::vector<AblationArm> table1_arms() {
  return {
      {"baseline", 68.90, [](RunConfig& c) { no_mrp(c); no_decomp(c); }},
      {"mrp-3scale", 70.0, [](RunConfig& c) { mrp3(c); no_decomp(c); }},
      {"mrp-5scale", 70.30, [](RunConfig& c) { mrp5(c); no_decomp(c); }},
      {"decomp", 71.95, [](RunConfig& c) { no_mrp(c); decomp(c); no_upsample(c); }},
      {"mrp-3scale+decomp", 72.65, [](RunConfig& c) { mrp3(c); decomp(c); no_upsample(c); }},
      {"mrp-5scale+decomp", 73.90, [](RunConfig& c) { mrp5(c); decomp(c); no_upsample(c); }},
      {"full", 74.90, [](RunConfig& c) { mrp5(c); decomp(c); upsample(c); }},
  };
}

std::vector<AblationArm> table2_arms() {
  return {
      {"merge-max-m3", 74.90, [](RunConfig& c) { c.rda.merge = "max"; c.rda.m = 3; }},
      {"merge-max-m5", 75.10, [](RunConfig& c) { c.rda.merge = "max"; c.rda.m = 5; }},
      {"merge-sum", 69.61, [](RunConfig& c) { c.rda.merge = "sum"; }},
      {"merge-concat", 71.95, [](RunConfig& c) { c.rda.merge = "concat"; }},
  };
}

std::vector<AblationArm> core_arms() {
  return {
      {"baseline", 68.90, [](RunConfig& c) { no_mrp(c); no_decomp(c); }},
      {"full", 74.90, [](RunConfig& c) { mrp5(c); decomp(c); upsample(c); }},
      {"full-sum-merge", 69.61, [](RunConfig& c) { mrp5(c); decomp(c); upsample(c); c.rda.merge = "sum"; }},
  };
}

std::vector<AblationRow> ablation_report(const std::vector<Scene>& train_scenes,
                                         const std::vector<Scene>& test_scenes,
                                         const RunConfig& base,
                                         const std::vector<AblationArm>& arms,
                                         const std::vector<uint64_t>& seeds,
                                         std::ostream* progress) {
  std::vector<GroundTruth> gts;
  for (size_t i = 0; i < test_scenes.size(); ++i)
    for (const auto& o : test_scenes[i].objects)
      gts.push_back(GroundTruth{static_cast<int>(i), o.class_id, o.box});

  std::vector<AblationRow> rows;
  for (const AblationArm& arm : arms) {
    AblationRow row;
    row.name = arm.name;
    row.paper_ref = arm.paper_ref;
    for (uint64_t seed : seeds) {
      RunConfig cfg = base;
      arm.modify(cfg);
      cfg.backbone.seed = seed;
      cfg.training.seed = seed + 1;
      DetectionModel model(cfg);
      train(train_scenes, {}, model);
      std::vector<Detection> dets;
      for (size_t i = 0; i < test_scenes.size(); ++i) {
        auto d = detect(test_scenes[i].image, model, static_cast<int>(i), 0.05f);
        dets.insert(dets.end(), d.begin(), d.end());
      }
      const double map = gts.empty() ? 0.0 : mean_ap(dets, gts, cfg.num_classes, 0.5f);
      row.per_seed_map.push_back(map);
      if (progress)
        (*progress) << arm.name << " seed=" << seed << " mAP@0.5=" << map << "\n" << std::flush;
    }
    std::vector<double> sorted = row.per_seed_map;
    std::sort(sorted.begin(), sorted.end());
    row.median_map = sorted[sorted.size() / 2];
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| configuration | reference mAP | per-seed mAP@0.5 | median |\n";
  os << "|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.name << " | ";
    if (r.paper_ref >= 0) os << r.paper_ref;
    os << " | ";
    for (size_t i = 0; i < r.per_seed_map.size(); ++i)
      os << (i ? " / " : "") << r.per_seed_map[i];
    os << " | " << r.median_map << " |\n";
  }
  return os.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "configuration,reference_map";
  size_t n_seeds = rows.empty() ? 0 : rows[0].per_seed_map.size();
  for (size_t i = 0; i < n_seeds; ++i) os << ",seed" << i;
  os << ",median\n";
  for (const auto& r : rows) {
    os << r.name << ",";
    if (r.paper_ref >= 0) os << r.paper_ref;
    for (double m : r.per_seed_map) os << "," << m;
    os << "," << r.median_map << "\n";
  }
  return os.str();
}

}  // namespace rdad
