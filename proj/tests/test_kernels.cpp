#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rdad/kernels.hpp"
#include "rdad/tensor.hpp"

using namespace rdad;

namespace {

float max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  float m = 0;
  for (size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

void fill_random(Tensor& t, Rng& rng) {
  for (auto& v : t.data) v = rng.normal();
}

}  // namespace

TEST_CASE("conv_out_extent") {
  CHECK(kernels::conv_out_extent(7, 3, 1, 0) == 5);
  CHECK(kernels::conv_out_extent(5, 3, 1, 0) == 3);
  CHECK(kernels::conv_out_extent(3, 3, 1, 0) == 1);
  CHECK(kernels::conv_out_extent(128, 3, 2, 1) == 64);
  CHECK(kernels::conv_out_extent(7, 3, 1, 0, 2) == 3);  // dilation widens the window
  CHECK(kernels::conv_out_extent(14, 1, 1, 0) == 14);
}

TEST_CASE("conv2d matches the serial reference over random configurations") {
  Rng rng(11);
  struct Cfg {
    int cin, cout, hw, m, stride, pad, dilation;
  };
  std::vector<Cfg> cfgs = {
      {3, 8, 16, 3, 1, 1, 1},  {4, 4, 9, 3, 1, 0, 1},  {8, 16, 12, 3, 2, 1, 1},
      {1, 1, 5, 1, 1, 0, 1},   {6, 5, 7, 3, 1, 0, 1},  {4, 4, 11, 5, 1, 2, 1},
      {2, 3, 13, 3, 1, 2, 2},  {16, 16, 32, 3, 1, 1, 1}, {32, 32, 7, 3, 1, 0, 1},
  };
  for (const auto& c : cfgs) {
    Tensor x(1, c.cin, c.hw, c.hw), w(c.cout, c.cin, c.m, c.m), b(1, c.cout, 1, 1);
    fill_random(x, rng);
    fill_random(w, rng);
    fill_random(b, rng);
    Tensor fast, ref;
    kernels::conv2d_forward(x, w, b, c.stride, c.pad, fast, c.dilation);
    kernels::conv2d_forward_reference(x, w, b, c.stride, c.pad, ref, c.dilation);
    float scale = 1.0f;
    for (float v : ref.data) scale = std::max(scale, std::fabs(v));
    CHECK(max_abs_diff(fast, ref) <= 1e-5f * scale);
  }
}

TEST_CASE("conv2d identity kernel passes the input through") {
  Tensor x(1, 1, 6, 6), w(1, 1, 1, 1), b(1, 1, 1, 1);
  Rng rng(5);
  fill_random(x, rng);
  w.data[0] = 1.0f;
  Tensor out;
  kernels::conv2d_forward(x, w, b, 1, 0, out);
  CHECK(max_abs_diff(out, x) == 0.0f);
}

TEST_CASE("conv2d backward matches finite differences") {
  Rng rng(13);
  Tensor x(1, 3, 8, 8), w(4, 3, 3, 3), b(1, 4, 1, 1);
  fill_random(x, rng);
  fill_random(w, rng);
  fill_random(b, rng);

  // scalar loss: weighted sum of the output
  Tensor wsum;
  auto loss = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
    Tensor out;
    kernels::conv2d_forward(xx, ww, bb, 1, 1, out);
    if (wsum.numel() != out.numel()) {
      wsum = Tensor(out.n, out.c, out.h, out.w);
      Rng r(99);
      fill_random(wsum, r);
    }
    double acc = 0;
    for (size_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(out.data[i]) * wsum.data[i];
    return acc;
  };
  loss(x, w, b);  // fixes wsum

  Tensor out;
  kernels::conv2d_forward(x, w, b, 1, 1, out);
  Tensor gout(out.n, out.c, out.h, out.w);
  gout.data = wsum.data;
  Tensor gx(x.n, x.c, x.h, x.w), gw(w.n, w.c, w.h, w.w), gb(1, b.c, 1, 1);
  kernels::conv2d_backward(x, w, gout, 1, 1, gx, gw, gb);

  const float h = 1e-2f;
  auto probe = [&](Tensor& t, const Tensor& g, int count, Rng& prng) {
    for (int k = 0; k < count; ++k) {
      const size_t i = prng.next_u32() % t.numel();
      const float saved = t.data[i];
      t.data[i] = saved + h;
      const double up = loss(x, w, b);
      t.data[i] = saved - h;
      const double dn = loss(x, w, b);
      t.data[i] = saved;
      const double num = (up - dn) / (2 * h);
      CHECK(std::fabs(num - g.data[i]) / std::max({1.0, std::fabs(num)}) <= 1e-3);
    }
  };
  Rng prng(21);
  probe(x, gx, 60, prng);
  probe(w, gw, 60, prng);
  probe(b, gb, 8, prng);
}

TEST_CASE("conv2d backward accumulates instead of overwriting") {
  Rng rng(17);
  Tensor x(1, 2, 5, 5), w(2, 2, 3, 3), b(1, 2, 1, 1);
  fill_random(x, rng);
  fill_random(w, rng);
  Tensor out;
  kernels::conv2d_forward(x, w, b, 1, 0, out);
  Tensor gout(out.n, out.c, out.h, out.w, 1.0f);
  Tensor gx(x.n, x.c, x.h, x.w), gw(w.n, w.c, w.h, w.w), gb(1, 2, 1, 1);
  kernels::conv2d_backward(x, w, gout, 1, 0, gx, gw, gb);
  Tensor gx2 = gx, gw2 = gw, gb2 = gb;
  kernels::conv2d_backward(x, w, gout, 1, 0, gx2, gw2, gb2);
  for (size_t i = 0; i < gx.numel(); ++i)
    CHECK(gx2.data[i] == doctest::Approx(2 * gx.data[i]));
  CHECK(gb2.data[0] == doctest::Approx(2 * gb.data[0]));
}

TEST_CASE("upsample2x doubles extents and reproduces closed-form samples") {
  // align-corners-false: dst j samples src at (j + 0.5)/2 - 0.5
  Tensor x(1, 1, 2, 2);
  x.data = {0, 1, 2, 3};
  Tensor out;
  kernels::upsample2x_forward(x, out);
  REQUIRE(out.h == 4);
  REQUIRE(out.w == 4);
  // corners clamp to the nearest source texel
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0));
  CHECK(out.at(0, 0, 3, 3) == doctest::Approx(3));
  // dst (1,1) -> src (0.25, 0.25): bilinear of {0,1,2,3}
  const float expect = 0 * 0.75f * 0.75f + 1 * 0.75f * 0.25f + 2 * 0.25f * 0.75f + 3 * 0.25f * 0.25f;
  CHECK(out.at(0, 0, 1, 1) == doctest::Approx(expect));
  // interpolation preserves constants
  Tensor c(2, 3, 5, 4, 2.5f), cout;
  kernels::upsample2x_forward(c, cout);
  for (float v : cout.data) CHECK(v == doctest::Approx(2.5f));
}

TEST_CASE("upsample2x backward is the transpose of forward") {
  // <gout, forward(x)> == <backward(gout), x> for linear maps
  Rng rng(23);
  Tensor x(1, 2, 3, 5);
  fill_random(x, rng);
  Tensor out;
  kernels::upsample2x_forward(x, out);
  Tensor gout(out.n, out.c, out.h, out.w);
  fill_random(gout, rng);
  Tensor gx(x.n, x.c, x.h, x.w);
  kernels::upsample2x_backward(gout, gx);
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < out.numel(); ++i) lhs += static_cast<double>(gout.data[i]) * out.data[i];
  for (size_t i = 0; i < x.numel(); ++i) rhs += static_cast<double>(gx.data[i]) * x.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
}

TEST_CASE("maxpool2x2 picks the block maximum and routes gradient to it") {
  Tensor x(1, 1, 4, 4);
  x.data = {1, 5, 2, 0,
            3, 4, 1, 9,
            0, 0, 7, 6,
            2, 1, 5, 8};
  Tensor out;
  std::vector<int> argmax;
  kernels::maxpool2x2_forward(x, out, argmax);
  REQUIRE(out.h == 2);
  CHECK(out.data == std::vector<float>{5, 9, 2, 8});
  Tensor gout(1, 1, 2, 2);
  gout.data = {1, 2, 3, 4};
  Tensor gx(1, 1, 4, 4);
  kernels::maxpool2x2_backward(gout, argmax, gx);
  CHECK(gx.at(0, 0, 0, 1) == 1);
  CHECK(gx.at(0, 0, 1, 3) == 2);
  CHECK(gx.at(0, 0, 3, 0) == 3);
  CHECK(gx.at(0, 0, 3, 3) == 4);
  float total = 0;
  for (float v : gx.data) total += std::fabs(v);
  CHECK(total == doctest::Approx(10));
}

TEST_CASE("rng is deterministic and reasonably distributed") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());
  Rng r(5);
  double mean = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += r.uniform();
  mean /= n;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
  double nm = 0, nv = 0;
  std::vector<float> xs(n);
  for (auto& v : xs) v = r.normal();
  for (float v : xs) nm += v;
  nm /= n;
  for (float v : xs) nv += (v - nm) * (v - nm);
  nv /= n;
  CHECK(std::fabs(nm) < 0.05);
  CHECK(nv == doctest::Approx(1.0).epsilon(0.05));
  // uniform_int covers the whole range
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) ++seen[r.uniform_int(0, 6)];
  for (int c : seen) CHECK(c > 700);
}
