// rdad: synthetic-data object detection workbench.
// Subcommands: gen-data, train, detect, eval, ablate.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rdad/ablation.hpp"
#include "rdad/checkpoint.hpp"
#include "rdad/config.hpp"
#include "rdad/datagen.hpp"
#include "rdad/detect.hpp"
#include "rdad/evaluation.hpp"
#include "rdad/model.hpp"
#include "rdad/training.hpp"

namespace fs = std::filesystem;
using namespace rdad;

static constexpr const char* kVersion = "rdad 0.1.0";

namespace {

void apply_thread_cap() {
#ifdef _OPENMP
  if (const char* env = std::getenv("RDAD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

struct Overrides {
  std::string scales;
  bool no_decomp = false;
  bool no_upsample = false;
  std::string merge;
  int m = 0;
  int64_t seed = -1;
};

void apply_overrides(RunConfig& cfg, const Overrides& ov) {
  if (!ov.scales.empty()) {
    cfg.mrp.scale_set.clear();
    std::stringstream ss(ov.scales);
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.mrp.scale_set.push_back(std::stof(tok));
  }
  if (ov.no_decomp) cfg.rda.use_decomposition = false;
  if (ov.no_upsample) cfg.rda.use_upsample = false;
  if (!ov.merge.empty()) cfg.rda.merge = ov.merge;
  if (ov.m > 0) cfg.rda.m = ov.m;
  if (ov.seed >= 0) {
    cfg.training.seed = static_cast<uint64_t>(ov.seed);
    cfg.backbone.seed = static_cast<uint64_t>(ov.seed);
    cfg.dataset.seed = static_cast<uint64_t>(ov.seed);
  }
  cfg.validate();
}

// every run directory carries the resolved config, seed, and version
void echo_run_metadata(const fs::path& out, const RunConfig& cfg) {
  fs::create_directories(out);
  std::ofstream f(out / "config.resolved.json");
  ordered_json j = cfg.to_json();
  j["version"] = kVersion;
  f << j.dump(2) << "\n";
}

std::vector<GroundTruth> gts_from_scenes(const std::vector<Scene>& scenes,
                                         const std::vector<int>& ids) {
  std::vector<GroundTruth> gts;
  for (size_t k = 0; k < ids.size(); ++k)
    for (const auto& o : scenes[ids[k]].objects)
      gts.push_back(GroundTruth{ids[k], o.class_id, o.box});
  return gts;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();
  CLI::App app{kVersion};
  app.require_subcommand(1);

  std::string config_path, out_dir, model_path, image_path, dataset_dir, dets_path, gts_dir;
  Overrides ov;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", ov.seed, "override all seeds");
    sub->add_option("--scales", ov.scales, "comma list overriding the MRP scale set");
    sub->add_flag("--no-decomp", ov.no_decomp, "disable region decomposition");
    sub->add_flag("--no-upsample", ov.no_upsample, "disable the 2x part-feature upsampling");
    sub->add_option("--merge", ov.merge, "assembly merge unit: max|sum|concat")
        ->check(CLI::IsMember({"max", "sum", "concat"}));
    sub->add_option("--m", ov.m, "RAB kernel extent")->check(CLI::IsMember({3, 5}));
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen);
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a detector");
  add_common(tr);
  tr->add_option("--out", out_dir, "run directory")->required();
  tr->add_option("--dataset", dataset_dir, "exported dataset directory (default: generated in-memory)");

  auto* det = app.add_subcommand("detect", "run inference");
  add_common(det);
  det->add_option("--model", model_path, "checkpoint file")->required();
  det->add_option("--image", image_path, "single .rdim image");
  det->add_option("--dataset", dataset_dir, "dataset directory (test split)");
  det->add_option("--out", out_dir, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a detection dump");
  add_common(ev);
  ev->add_option("--dets", dets_path, "JSON-lines detection dump")->required();
  ev->add_option("--gts", gts_dir, "dataset directory with ground truth")->required();

  auto* ab = app.add_subcommand("ablate", "run the ablation table harness");
  add_common(ab);
  ab->add_option("--out", out_dir, "output directory")->required();
  bool full_table = false;
  ab->add_flag("--full-table", full_table, "run all seven reference-table arms plus merge arms");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
    apply_overrides(cfg, ov);

    if (gen->parsed()) {
      export_dataset(cfg.dataset, out_dir);
      echo_run_metadata(out_dir, cfg);
      std::cout << "wrote " << cfg.dataset.image_count << " scenes to " << out_dir << "\n";
      return 0;
    }

    if (tr->parsed()) {
      std::vector<Scene> scenes;
      if (!dataset_dir.empty()) {
        scenes = load_dataset(dataset_dir);
      } else {
        for (int i = 0; i < cfg.dataset.image_count; ++i) scenes.push_back(gen_scene(cfg.dataset, i));
      }
      Splits sp = split_indices(static_cast<int>(scenes.size()));
      std::vector<Scene> train_scenes, val_scenes;
      for (int i : sp.train) train_scenes.push_back(scenes[i]);
      for (int i : sp.test) val_scenes.push_back(scenes[i]);

      echo_run_metadata(out_dir, cfg);
      DetectionModel model(cfg);
      std::ofstream log((fs::path(out_dir) / "loss.csv").string());
      TrainResult res = train(train_scenes, val_scenes, model, &log,
                              (fs::path(out_dir) / "abort_snapshot.ckpt").string());
      save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), model.params());
      std::cout << "trained " << cfg.training.total_iterations() << " iterations";
      if (res.final_val_map >= 0) std::cout << ", val mAP@0.5 = " << res.final_val_map;
      std::cout << "\ncheckpoint: " << (fs::path(out_dir) / "model.ckpt").string() << "\n";
      return 0;
    }

    if (det->parsed()) {
      DetectionModel model(cfg);
      load_checkpoint(model_path, model.params());
      echo_run_metadata(out_dir, cfg);
      std::vector<Detection> dets;
      if (!image_path.empty()) {
        auto img = std::make_shared<Tensor>(read_rdim(image_path));
        dets = detect(img, model, 0, cfg.eval.score_thresh);
      } else if (!dataset_dir.empty()) {
        auto scenes = load_dataset(dataset_dir);
        Splits sp = split_indices(static_cast<int>(scenes.size()));
        for (int i : sp.test) {
          auto d = detect(scenes[i].image, model, i, cfg.eval.score_thresh);
          dets.insert(dets.end(), d.begin(), d.end());
        }
      } else {
        throw std::invalid_argument("detect: need --image or --dataset");
      }
      const std::string out = (fs::path(out_dir) / "detections.jsonl").string();
      write_detections(out, dets);
      std::cout << dets.size() << " detections -> " << out << "\n";
      return 0;
    }

    if (ev->parsed()) {
      auto dets = read_detections(dets_path);
      auto scenes = load_dataset(gts_dir);
      std::vector<int> all_ids(scenes.size());
      for (size_t i = 0; i < scenes.size(); ++i) all_ids[i] = static_cast<int>(i);
      auto gts = gts_from_scenes(scenes, all_ids);
      std::cout << "class AP@" << cfg.eval.iou_thresh << ":\n";
      for (int c = 1; c <= cfg.num_classes; ++c) {
        auto ap = voc_ap(dets, gts, c, cfg.eval.iou_thresh);
        std::cout << "  class " << c << ": ";
        if (ap)
          std::cout << *ap << "\n";
        else
          std::cout << "undefined (no ground truth)\n";
      }
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", mean_ap(dets, gts, cfg.num_classes, cfg.eval.iou_thresh));
      std::cout << "mAP " << buf << "\n";
      auto sweep = coco_sweep(dets, gts, cfg.num_classes, cfg.eval.small_area, cfg.eval.large_area);
      std::cout << "coco mAP[.5:.95] " << sweep.map << "  (S " << sweep.ap_small << " / M "
                << sweep.ap_medium << " / L " << sweep.ap_large << ")\n";
      std::cout << "AR@1 " << average_recall(dets, gts, cfg.num_classes, 1) << "  AR@10 "
                << average_recall(dets, gts, cfg.num_classes, 10) << "  AR@100 "
                << average_recall(dets, gts, cfg.num_classes, 100) << "\n";
      return 0;
    }

    if (ab->parsed()) {
      std::vector<Scene> train_scenes, test_scenes;
      for (int i = 0; i < cfg.dataset.image_count; ++i) train_scenes.push_back(gen_scene(cfg.dataset, i));
      DatasetSpec occl = cfg.dataset;  // occlusion-heavy test split
      occl.seed += 9000;
      occl.image_count = std::max(20, cfg.dataset.image_count / 4);
      occl.occlusion_prob = 0.9f;
      occl.min_objects = 2;
      occl.max_objects = std::max(3, cfg.dataset.max_objects);
      for (int i = 0; i < occl.image_count; ++i) test_scenes.push_back(gen_scene(occl, i));

      auto arms = core_arms();
      if (full_table) {
        arms = table1_arms();
        for (auto& a : table2_arms()) arms.push_back(a);
      }
      std::vector<uint64_t> seeds = {11, 23, 37};
      echo_run_metadata(out_dir, cfg);
      auto rows = ablation_report(train_scenes, test_scenes, cfg, arms, seeds, &std::cout);
      std::ofstream md((fs::path(out_dir) / "ablation.md").string());
      md << ablation_markdown(rows);
      std::ofstream csv((fs::path(out_dir) / "ablation.csv").string());
      csv << ablation_csv(rows);
      std::cout << ablation_markdown(rows);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
