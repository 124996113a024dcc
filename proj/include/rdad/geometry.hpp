#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace rdad {

// Center-parameterized box (x, y, w, h) in image pixels.
struct Box {
  float x = 0, y = 0, w = 0, h = 0;

  float x1() const { return x - w / 2; }
  float y1() const { return y - h / 2; }
  float x2() const { return x + w / 2; }
  float y2() const { return y + h / 2; }
  float area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }

  static Box from_corners(float x1, float y1, float x2, float y2) {
    return Box{(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
  }
};

// Normalized box regression offsets: center offsets scaled by the reference
// extent, log-scale width/height ratios.
struct Delta {
  float tx = 0, ty = 0, tw = 0, th = 0;
};

struct BoxParts {
  Box left, right, upper, bottom;
};

inline Box rescale_box(const Box& d, float s) {
  if (s <= 0) throw std::invalid_argument("rescale_box: s <= 0");
  return Box{d.x, d.y, d.w * s, d.h * s};
}

// Axis-aligned half-splits; left/right tile d along x, upper/bottom along y.
inline BoxParts decompose_region(const Box& d) {
  return BoxParts{
      Box{d.x - d.w / 4, d.y, d.w / 2, d.h},
      Box{d.x + d.w / 4, d.y, d.w / 2, d.h},
      Box{d.x, d.y - d.h / 4, d.w, d.h / 2},
      Box{d.x, d.y + d.h / 4, d.w, d.h / 2},
  };
}

inline float iou(const Box& a, const Box& b) {
  const float ix1 = std::max(a.x1(), b.x1());
  const float iy1 = std::max(a.y1(), b.y1());
  const float ix2 = std::min(a.x2(), b.x2());
  const float iy2 = std::min(a.y2(), b.y2());
  const float iw = std::max(0.0f, ix2 - ix1);
  const float ih = std::max(0.0f, iy2 - iy1);
  const float inter = iw * ih;
  if (inter <= 0) return 0.0f;
  return inter / (a.area() + b.area() - inter);
}

// Clip to [0,W]x[0,H]; boxes left with no positive extent are dropped.
inline std::optional<Box> clip_to_image(const Box& b, float img_w, float img_h) {
  const float x1 = std::clamp(b.x1(), 0.0f, img_w);
  const float y1 = std::clamp(b.y1(), 0.0f, img_h);
  const float x2 = std::clamp(b.x2(), 0.0f, img_w);
  const float y2 = std::clamp(b.y2(), 0.0f, img_h);
  if (x2 - x1 <= 0 || y2 - y1 <= 0) return std::nullopt;
  return Box::from_corners(x1, y1, x2, y2);
}

// Greedy descending-score suppression; ties broken by lower index.
inline std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<float>& scores,
                            float iou_threshold) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("nms: length mismatch");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> kept;
  std::vector<char> suppressed(boxes.size(), 0);
  for (int i : order) {
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (int j : order)
      if (!suppressed[j] && j != i && iou(boxes[i], boxes[j]) > iou_threshold)
        suppressed[j] = 1;
  }
  return kept;
}

// Eq-style box regression codec: t = ((x̂−x)/w, (ŷ−y)/h, log(ŵ/w), log(ĥ/h)).
inline Delta encode_deltas(const Box& ref, const Box& gt) {
  if (!ref.valid() || !gt.valid())
    throw std::invalid_argument("encode_deltas: non-positive extent");
  return Delta{(gt.x - ref.x) / ref.w, (gt.y - ref.y) / ref.h,
               std::log(gt.w / ref.w), std::log(gt.h / ref.h)};
}

inline Box decode_deltas(const Box& ref, const Delta& t) {
  if (!ref.valid()) throw std::invalid_argument("decode_deltas: non-positive extent");
  return Box{ref.x + t.tx * ref.w, ref.y + t.ty * ref.h,
             ref.w * std::exp(t.tw), ref.h * std::exp(t.th)};
}

struct AnchorGridConfig {
  float stride = 8.0f;
  std::vector<float> scales = {16, 32, 64};   // anchor side lengths (pixels)
  std::vector<float> ratios = {0.5f, 1.0f, 2.0f};  // h/w aspect ratios

  int anchors_per_cell() const { return static_cast<int>(scales.size() * ratios.size()); }
};

// Row-major over cells, per-cell anchors in (scale, ratio) order. Centers at
// ((col+0.5)*stride, (row+0.5)*stride).
inline std::vector<Box> generate_anchors(int feat_h, int feat_w, const AnchorGridConfig& cfg) {
  if (feat_h < 1 || feat_w < 1) throw std::invalid_argument("generate_anchors: bad extents");
  std::vector<Box> anchors;
  anchors.reserve(static_cast<size_t>(feat_h) * feat_w * cfg.anchors_per_cell());
  for (int row = 0; row < feat_h; ++row)
    for (int col = 0; col < feat_w; ++col) {
      const float cx = (col + 0.5f) * cfg.stride;
      const float cy = (row + 0.5f) * cfg.stride;
      for (float s : cfg.scales)
        for (float r : cfg.ratios) {
          const float w = s / std::sqrt(r);
          const float h = s * std::sqrt(r);
          anchors.push_back(Box{cx, cy, w, h});
        }
    }
  return anchors;
}

}  // namespace rdad
