#include "rdad/datagen.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace rdad {

namespace {

struct ShapeDesc {
  int class_id;     // 1 circle, 2 square, 3 triangle
  float cx, cy, s;  // center and nominal side/diameter
};

// point-in-shape test at image coordinates
bool inside(const ShapeDesc& d, float px, float py) {
  const float dx = px - d.cx, dy = py - d.cy;
  switch (d.class_id) {
    case 1:
      return dx * dx + dy * dy <= (d.s / 2) * (d.s / 2);
    case 2:
      return std::fabs(dx) <= d.s / 2 && std::fabs(dy) <= d.s / 2;
    default: {
      // up-pointing isoceles triangle inscribed in the s x s box
      if (dy < -d.s / 2 || dy > d.s / 2) return false;
      const float half_width = (dy + d.s / 2) / 2;  // 0 at apex, s/2 at base
      return std::fabs(dx) <= half_width;
    }
  }
}

// 4x4 supersampled coverage in [0,1]
float coverage(const ShapeDesc& d, int px, int py) {
  int hit = 0;
  for (int sy = 0; sy < 4; ++sy)
    for (int sx = 0; sx < 4; ++sx)
      if (inside(d, px + (sx + 0.5f) / 4.0f, py + (sy + 0.5f) / 4.0f)) ++hit;
  return hit / 16.0f;
}

}  // namespace

Scene gen_scene(const DatasetSpec& spec, int index) {
  if (index < 0 || index >= spec.image_count)
    throw std::invalid_argument("gen_scene: index out of range");
  Rng rng(spec.seed * 1000003ull + static_cast<uint64_t>(index) * 7919ull + 17ull);
  const int H = spec.height, W = spec.width;

  Scene scene;
  scene.image = make_tensor(1, 3, H, W);
  float bg[3];
  for (float& v : bg) v = rng.uniform(0.05f, 0.30f);
  for (int c = 0; c < 3; ++c)
    std::fill_n(&scene.image->data[static_cast<size_t>(c) * H * W], H * W, bg[c]);

  const int n_obj = rng.uniform_int(spec.min_objects, spec.max_objects);
  std::vector<ShapeDesc> shapes;
  std::vector<std::array<float, 3>> colors;
  for (int i = 0; i < n_obj; ++i) {
    ShapeDesc d;
    d.class_id = rng.uniform_int(1, spec.classes);
    d.s = rng.uniform(18.0f, 52.0f);
    const float margin = d.s / 2 + 2.0f;
    if (i > 0 && rng.uniform() < spec.occlusion_prob) {
      // overlap a previous object
      const ShapeDesc& prev = shapes[rng.uniform_int(0, i - 1)];
      d.cx = prev.cx + rng.uniform(-prev.s / 2, prev.s / 2);
      d.cy = prev.cy + rng.uniform(-prev.s / 2, prev.s / 2);
      d.cx = std::clamp(d.cx, margin, W - margin);
      d.cy = std::clamp(d.cy, margin, H - margin);
    } else {
      d.cx = rng.uniform(margin, W - margin);
      d.cy = rng.uniform(margin, H - margin);
    }
    shapes.push_back(d);
    std::array<float, 3> col;
    for (float& v : col) v = rng.uniform(0.45f, 1.0f);
    colors.push_back(col);
  }

  // paint in order; track binary masks for occlusion accounting
  std::vector<std::vector<char>> masks(shapes.size(), std::vector<char>(static_cast<size_t>(H) * W, 0));
  for (size_t i = 0; i < shapes.size(); ++i) {
    const ShapeDesc& d = shapes[i];
    const int x0 = std::max(0, static_cast<int>(d.cx - d.s / 2 - 1));
    const int x1 = std::min(W - 1, static_cast<int>(d.cx + d.s / 2 + 1));
    const int y0 = std::max(0, static_cast<int>(d.cy - d.s / 2 - 1));
    const int y1 = std::min(H - 1, static_cast<int>(d.cy + d.s / 2 + 1));
    for (int py = y0; py <= y1; ++py)
      for (int px = x0; px <= x1; ++px) {
        const float cov = coverage(d, px, py);
        if (cov <= 0) continue;
        if (cov > 0.5f) masks[i][static_cast<size_t>(py) * W + px] = 1;
        for (int c = 0; c < 3; ++c) {
          float& v = scene.image->data[(static_cast<size_t>(c) * H + py) * W + px];
          v = (1 - cov) * v + cov * colors[i][c];
        }
      }
  }

  for (size_t i = 0; i < shapes.size(); ++i) {
    const ShapeDesc& d = shapes[i];
    SceneObject obj;
    obj.class_id = d.class_id;
    obj.box = Box{d.cx, d.cy, d.s, d.s};
    size_t own = 0, covered = 0;
    for (size_t p = 0; p < masks[i].size(); ++p) {
      if (!masks[i][p]) continue;
      ++own;
      for (size_t j = i + 1; j < shapes.size(); ++j)
        if (masks[j][p]) {
          ++covered;
          break;
        }
    }
    obj.occlusion = own ? static_cast<float>(covered) / static_cast<float>(own) : 0.0f;
    scene.objects.push_back(obj);
  }

  if (spec.noise_level > 0)
    for (float& v : scene.image->data)
      v = std::clamp(v + rng.uniform(-spec.noise_level, spec.noise_level), 0.0f, 1.0f);
  return scene;
}

void write_rdim(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_rdim: cannot open " + path);
  f.write("RDIM", 4);
  const int32_t ext[4] = {t.n, t.c, t.h, t.w};
  f.write(reinterpret_cast<const char*>(ext), sizeof(ext));
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

Tensor read_rdim(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_rdim: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "RDIM", 4) != 0)
    throw std::runtime_error("read_rdim: bad magic in " + path);
  int32_t ext[4];
  f.read(reinterpret_cast<char*>(ext), sizeof(ext));
  if (!f || ext[0] < 1 || ext[1] < 1 || ext[2] < 1 || ext[3] < 1)
    throw std::runtime_error("read_rdim: bad extents in " + path);
  Tensor t(ext[0], ext[1], ext[2], ext[3]);
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("read_rdim: truncated file " + path);
  return t;
}

void export_dataset(const DatasetSpec& spec, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  {
    nlohmann::ordered_json j = {{"seed", spec.seed},
                                {"image_count", spec.image_count},
                                {"height", spec.height},
                                {"width", spec.width},
                                {"classes", spec.classes},
                                {"min_objects", spec.min_objects},
                                {"max_objects", spec.max_objects},
                                {"occlusion_prob", spec.occlusion_prob},
                                {"noise_level", spec.noise_level}};
    std::ofstream f(fs::path(dir) / "spec.json");
    f << j.dump(2) << "\n";
  }
  std::ofstream ann(fs::path(dir) / "annotations.jsonl");
  for (int i = 0; i < spec.image_count; ++i) {
    Scene s = gen_scene(spec, i);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.rdim", i);
    write_rdim((fs::path(dir) / "images" / name).string(), *s.image);
    for (const auto& o : s.objects) {
      nlohmann::ordered_json j = {{"image_id", i},
                                  {"class", o.class_id},
                                  {"box", {o.box.x, o.box.y, o.box.w, o.box.h}},
                                  {"occlusion", o.occlusion}};
      ann << j.dump() << "\n";
    }
  }
}

std::vector<Scene> load_dataset(const std::string& dir) {
  std::ifstream sf(fs::path(dir) / "spec.json");
  if (!sf) throw std::runtime_error("load_dataset: missing spec.json in " + dir);
  nlohmann::json sj;
  sf >> sj;
  const int count = sj.at("image_count").get<int>();

  std::vector<Scene> scenes(count);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.rdim", i);
    scenes[i].image = std::make_shared<Tensor>(read_rdim((fs::path(dir) / "images" / name).string()));
  }
  std::ifstream ann(fs::path(dir) / "annotations.jsonl");
  if (!ann) throw std::runtime_error("load_dataset: missing annotations.jsonl in " + dir);
  std::string line;
  while (std::getline(ann, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    const int id = j.at("image_id").get<int>();
    if (id < 0 || id >= count) throw std::runtime_error("load_dataset: bad image_id");
    SceneObject o;
    o.class_id = j.at("class").get<int>();
    const auto& b = j.at("box");
    o.box = Box{b.at(0).get<float>(), b.at(1).get<float>(), b.at(2).get<float>(), b.at(3).get<float>()};
    if (j.contains("occlusion")) o.occlusion = j.at("occlusion").get<float>();
    scenes[id].objects.push_back(o);
  }
  return scenes;
}

Splits split_indices(int count, float train_frac, float val_frac) {
  Splits s;
  const int n_train = static_cast<int>(count * train_frac);
  const int n_val = static_cast<int>(count * val_frac);
  for (int i = 0; i < count; ++i) {
    if (i < n_train)
      s.train.push_back(i);
    else if (i < n_train + n_val)
      s.val.push_back(i);
    else
      s.test.push_back(i);
  }
  return s;
}

}  // namespace rdad
