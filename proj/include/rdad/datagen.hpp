#pragma once

#include <string>
#include <vector>

#include "rdad/config.hpp"
#include "rdad/geometry.hpp"
#include "rdad/tensor.hpp"

namespace rdad {

struct SceneObject {
  Box box;            // full (unoccluded) extent
  int class_id = 1;   // 1..classes
  float occlusion = 0.0f;  // fraction of this object's pixels covered by later objects
};

struct Scene {
  TensorPtr image;  // 1x3xHxW in [0,1]
  std::vector<SceneObject> objects;
};

// Pure function of (spec, index); later objects may occlude earlier ones.
Scene gen_scene(const DatasetSpec& spec, int index);

// Per-image raw tensor files ("RDIM" magic + extents + LE f32) plus one
// annotations JSON-lines file and the echoed spec.
void export_dataset(const DatasetSpec& spec, const std::string& dir);
std::vector<Scene> load_dataset(const std::string& dir);

void write_rdim(const std::string& path, const Tensor& t);
Tensor read_rdim(const std::string& path);

// Disjoint deterministic index partition of [0, count).
struct Splits {
  std::vector<int> train, val, test;
};
Splits split_indices(int count, float train_frac = 0.8f, float val_frac = 0.0f);

}  // namespace rdad
