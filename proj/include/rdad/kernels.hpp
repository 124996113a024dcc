#pragma once

#include "rdad/tensor.hpp"

namespace rdad::kernels {

// Output spatial extent of a valid/padded convolution.
inline int conv_out_extent(int in, int m, int stride, int pad, int dilation = 1) {
  const int me = (m - 1) * dilation + 1;
  return (in + 2 * pad - me) / stride + 1;
}

// OpenMP-parallel convolution. w is (k_out, k_in, m, m), b is (1, k_out, 1, 1).
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                    int stride, int pad, Tensor& out, int dilation = 1);

// Serial reference: the naive six-nested-loop formulation. Kept as the test
// oracle and as the baseline arm of the kernel benchmark.
void conv2d_forward_reference(const Tensor& x, const Tensor& w, const Tensor& b,
                              int stride, int pad, Tensor& out, int dilation = 1);

// Accumulates into gx/gw/gb (caller zeroes when accumulation is not wanted).
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                     int stride, int pad, Tensor& gx, Tensor& gw, Tensor& gb,
                     int dilation = 1);

// 2x bilinear upsampling, align-corners-false with edge clamping.
void upsample2x_forward(const Tensor& x, Tensor& out);
void upsample2x_backward(const Tensor& gout, Tensor& gx);

// 2x2 max pooling with stride 2 (even extents). argmax holds flat source
// indices for the backward pass.
void maxpool2x2_forward(const Tensor& x, Tensor& out, std::vector<int>& argmax);
void maxpool2x2_backward(const Tensor& gout, const std::vector<int>& argmax, Tensor& gx);

}  // namespace rdad::kernels
