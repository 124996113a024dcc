// Compares the OpenMP convolution kernel against the serial reference
// implementation on backbone- and RAB-sized workloads.

#include <chrono>
#include <cstdio>
#include <functional>

#include "rdad/kernels.hpp"

using namespace rdad;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_case(const char* name, int cin, int cout, int hw, int m, int reps) {
  Rng rng(123);
  Tensor x(1, cin, hw, hw), w(cout, cin, m, m), b(1, cout, 1, 1);
  for (float& v : x.data) v = rng.normal();
  for (float& v : w.data) v = rng.normal(0.0f, 0.1f);

  Tensor out_ref, out_omp;
  const double ref_ms =
      time_ms(reps, [&] { kernels::conv2d_forward_reference(x, w, b, 1, 0, out_ref); });
  const double omp_ms = time_ms(reps, [&] { kernels::conv2d_forward(x, w, b, 1, 0, out_omp); });

  float max_diff = 0.0f;
  for (size_t i = 0; i < out_ref.numel(); ++i)
    max_diff = std::max(max_diff, std::fabs(out_ref.data[i] - out_omp.data[i]));

  const double macs = static_cast<double>(out_ref.numel()) * cin * m * m;
  std::printf("%-24s  serial %8.3f ms (%6.2f GMAC/s)   omp %8.3f ms (%6.2f GMAC/s)   "
              "speedup %.2fx   max|diff| %.2e\n",
              name, ref_ms, macs / ref_ms / 1e6, omp_ms, macs / omp_ms / 1e6,
              ref_ms / omp_ms, max_diff);
}

}  // namespace

int main() {
  std::printf("conv2d kernel benchmark (serial reference vs OpenMP)\n\n");
  bench_case("backbone 3->16 @128", 3, 16, 128, 3, 5);
  bench_case("backbone 16->32 @64", 16, 32, 64, 3, 5);
  bench_case("backbone 32->32 @32", 32, 32, 32, 3, 5);
  bench_case("rab 32->32 @7", 32, 32, 7, 3, 200);
  bench_case("rab 64->64 @7", 64, 64, 7, 3, 100);
  return 0;
}
