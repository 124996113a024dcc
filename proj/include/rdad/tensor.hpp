#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdad {

// Dense rank-4 float tensor, row-major (n, c, h, w). The gradient buffer is
// allocated lazily by the autodiff tape; it is empty for plain value tensors.
struct Tensor {
  int n = 1, c = 1, h = 1, w = 1;
  std::vector<float> data;
  std::vector<float> grad;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ <= 0 || c_ <= 0 || h_ <= 0 || w_ <= 0)
      throw std::invalid_argument("Tensor: non-positive extent");
  }

  size_t numel() const { return static_cast<size_t>(n) * c * h * w; }

  float& at(int in, int ic, int iy, int ix) {
    return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  float at(int in, int ic, int iy, int ix) const {
    return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
  void zero_grad() {
    grad.assign(data.size(), 0.0f);
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(int n, int c, int h, int w, float fill = 0.0f) {
  return std::make_shared<Tensor>(n, c, h, w, fill);
}

// Deterministic RNG. std::mt19937 bit streams are portable; the standard
// distributions are not, so uniform/normal are generated by hand.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(static_cast<uint32_t>(seed ^ (seed >> 32) ^ 0x9e3779b9u)) {}

  uint32_t next_u32() {
    // xorshift-ish scramble of an LCG; portable and fast
    state_ = state_ * 1664525u + 1013904223u;
    uint32_t x = state_;
    x ^= x >> 16;
    x *= 0x7feb352du;
    x ^= x >> 15;
    x *= 0x846ca68bu;
    x ^= x >> 16;
    return x;
  }

  // uniform in [0, 1)
  float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(next_u32() % static_cast<uint32_t>(hi_inclusive - lo + 1));
  }

  // Box-Muller
  float normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    float r = std::sqrt(-2.0f * std::log(u1));
    float a = 6.2831853071795864769f * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }
  float normal(float mean, float stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_u32() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint32_t state_;
  bool have_spare_ = false;
  float spare_ = 0.0f;
};

}  // namespace rdad
