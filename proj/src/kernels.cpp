#include "rdad/kernels.hpp"

#include <algorithm>
#include <vector>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rdad::kernels {

static void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b,
                            int stride, int pad, int dilation) {
  if (x.c != w.c)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(x.c) +
                                " != kernel channels " + std::to_string(w.c));
  if (w.h != w.w || w.h < 1) throw std::invalid_argument("conv2d: bad kernel extent");
  if (stride < 1) throw std::invalid_argument("conv2d: stride < 1");
  if (b.c != w.n || b.numel() != static_cast<size_t>(w.n))
    throw std::invalid_argument("conv2d: bias/kernel count mismatch");
  if (dilation < 1) throw std::invalid_argument("conv2d: dilation < 1");
  if (conv_out_extent(x.h, w.h, stride, pad, dilation) < 1 ||
      conv_out_extent(x.w, w.w, stride, pad, dilation) < 1)
    throw std::invalid_argument("conv2d: output extent < 1");
}


namespace {

// im2col layout: one K-length contiguous patch per output position,
// K = cin * m * m. Used for small stride-1 maps where row loops are too
// short to vectorize.
void im2col(const Tensor& x, int in, int m, int pad, int dilation, int oh, int ow,
            std::vector<float>& col) {
  const int K = x.c * m * m;
  col.assign(static_cast<size_t>(oh) * ow * K, 0.0f);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      float* patch = &col[(static_cast<size_t>(oy) * ow + ox) * K];
      for (int ci = 0; ci < x.c; ++ci) {
        const float* xplane = &x.data[(static_cast<size_t>(in) * x.c + ci) * x.h * x.w];
        for (int ky = 0; ky < m; ++ky) {
          const int iy = oy + ky * dilation - pad;
          if (iy < 0 || iy >= x.h) continue;
          for (int kx = 0; kx < m; ++kx) {
            const int ix = ox + kx * dilation - pad;
            if (ix < 0 || ix >= x.w) continue;
            patch[(ci * m + ky) * m + kx] = xplane[static_cast<size_t>(iy) * x.w + ix];
          }
        }
      }
    }
}

constexpr int kIm2colMaxOut = 256;  // switch point between the two layouts

}  // namespace

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                    int stride, int pad, Tensor& out, int dilation) {
  check_conv_args(x, w, b, stride, pad, dilation);
  const int m = w.h;
  const int oh = conv_out_extent(x.h, m, stride, pad, dilation);
  const int ow = conv_out_extent(x.w, m, stride, pad, dilation);
  out = Tensor(x.n, w.n, oh, ow);

  if (stride == 1 && oh * ow <= kIm2colMaxOut) {
    const int K = x.c * m * m;
    std::vector<float> col;
    for (int in = 0; in < x.n; ++in) {
      im2col(x, in, m, pad, dilation, oh, ow, col);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int co = 0; co < w.n; ++co) {
        const float* wrow = &w.data[static_cast<size_t>(co) * K];
        float* oplane = &out.data[(static_cast<size_t>(in) * w.n + co) * oh * ow];
        for (int pos = 0; pos < oh * ow; ++pos) {
          const float* patch = &col[static_cast<size_t>(pos) * K];
          float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
          int k = 0;
          for (; k + 8 <= K; k += 8)
            for (int j = 0; j < 8; ++j) lanes[j] += wrow[k + j] * patch[k + j];
          float acc = b.data[co];
          for (; k < K; ++k) acc += wrow[k] * patch[k];
          for (int j = 0; j < 8; ++j) acc += lanes[j];
          oplane[pos] = acc;
        }
      }
    }
    return;
  }

  for (int in = 0; in < x.n; ++in) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < w.n; ++co) {
      float* oplane = &out.data[(static_cast<size_t>(in) * w.n + co) * oh * ow];
      std::fill_n(oplane, static_cast<size_t>(oh) * ow, b.data[co]);
      for (int ci = 0; ci < x.c; ++ci) {
        const float* xplane = &x.data[(static_cast<size_t>(in) * x.c + ci) * x.h * x.w];
        const float* wrow = &w.data[((static_cast<size_t>(co) * w.c + ci) * m) * m];
        for (int ky = 0; ky < m; ++ky)
          for (int kx = 0; kx < m; ++kx) {
            const float wv = wrow[ky * m + kx];
            const int off_y = ky * dilation - pad;
            const int off_x = kx * dilation - pad;
            // ox range with 0 <= ox*stride + off_x < x.w
            int ox0 = off_x < 0 ? (-off_x + stride - 1) / stride : 0;
            int ox1 = std::min(ow, (x.w - off_x + stride - 1) / stride);
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + off_y;
              if (iy < 0 || iy >= x.h) continue;
              const float* xr = xplane + static_cast<size_t>(iy) * x.w + off_x;
              float* orow = oplane + static_cast<size_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xr[ox];
              } else {
                for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xr[ox * stride];
              }
            }
          }
      }
    }
  }
}

void conv2d_forward_reference(const Tensor& x, const Tensor& w, const Tensor& b,
                              int stride, int pad, Tensor& out, int dilation) {
  check_conv_args(x, w, b, stride, pad, dilation);
  const int m = w.h;
  const int oh = conv_out_extent(x.h, m, stride, pad, dilation);
  const int ow = conv_out_extent(x.w, m, stride, pad, dilation);
  out = Tensor(x.n, w.n, oh, ow);
  for (int in = 0; in < x.n; ++in)
    for (int co = 0; co < w.n; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          float acc = b.data[co];
          for (int ci = 0; ci < x.c; ++ci)
            for (int ky = 0; ky < m; ++ky)
              for (int kx = 0; kx < m; ++kx) {
                int iy = oy * stride - pad + ky * dilation;
                int ix = ox * stride - pad + kx * dilation;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += x.at(in, ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          out.at(in, co, oy, ox) = acc;
        }
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                     int stride, int pad, Tensor& gx, Tensor& gw, Tensor& gb,
                     int dilation) {
  const int m = w.h;
  const int oh = gout.h, ow = gout.w;

  if (stride == 1 && oh * ow <= kIm2colMaxOut) {
    const int K = x.c * m * m;
    const int npos = oh * ow;
    std::vector<float> col, gcol;
    for (int in = 0; in < x.n; ++in) {
      im2col(x, in, m, pad, dilation, oh, ow, col);
      gcol.assign(static_cast<size_t>(npos) * K, 0.0f);
      for (int co = 0; co < w.n; ++co) {
        const float* gplane = &gout.data[(static_cast<size_t>(in) * w.n + co) * oh * ow];
        const float* wrow = &w.data[static_cast<size_t>(co) * K];
        float* gwrow = &gw.data[static_cast<size_t>(co) * K];
        double bacc = 0.0;
        for (int pos = 0; pos < npos; ++pos) {
          const float g = gplane[pos];
          bacc += g;
          if (g == 0.0f) continue;
          const float* patch = &col[static_cast<size_t>(pos) * K];
          float* gpatch = &gcol[static_cast<size_t>(pos) * K];
          for (int k = 0; k < K; ++k) {
            gwrow[k] += g * patch[k];
            gpatch[k] += g * wrow[k];
          }
        }
        gb.data[co] += static_cast<float>(bacc);
      }
      // col2im scatter-add
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const float* gpatch = &gcol[(static_cast<size_t>(oy) * ow + ox) * K];
          for (int ci = 0; ci < x.c; ++ci) {
            float* gxplane = &gx.data[(static_cast<size_t>(in) * x.c + ci) * x.h * x.w];
            for (int ky = 0; ky < m; ++ky) {
              const int iy = oy + ky * dilation - pad;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < m; ++kx) {
                const int ix = ox + kx * dilation - pad;
                if (ix < 0 || ix >= x.w) continue;
                gxplane[static_cast<size_t>(iy) * x.w + ix] += gpatch[(ci * m + ky) * m + kx];
              }
            }
          }
        }
    }
    return;
  }

  for (int in = 0; in < x.n; ++in) {
    // d/dw, d/db: output-channel slices are disjoint
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < w.n; ++co) {
      const float* gplane = &gout.data[(static_cast<size_t>(in) * w.n + co) * oh * ow];
      double bacc = 0.0;
      for (size_t i = 0; i < static_cast<size_t>(oh) * ow; ++i) bacc += gplane[i];
      gb.data[co] += static_cast<float>(bacc);
      for (int ci = 0; ci < x.c; ++ci) {
        const float* xplane = &x.data[(static_cast<size_t>(in) * x.c + ci) * x.h * x.w];
        float* gwrow = &gw.data[((static_cast<size_t>(co) * w.c + ci) * m) * m];
        for (int ky = 0; ky < m; ++ky)
          for (int kx = 0; kx < m; ++kx) {
            const int off_y = ky * dilation - pad;
            const int off_x = kx * dilation - pad;
            int ox0 = off_x < 0 ? (-off_x + stride - 1) / stride : 0;
            int ox1 = std::min(ow, (x.w - off_x + stride - 1) / stride);
            float acc = 0.0f;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + off_y;
              if (iy < 0 || iy >= x.h) continue;
              const float* xr = xplane + static_cast<size_t>(iy) * x.w + off_x;
              const float* gr = gplane + static_cast<size_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = ox0; ox < ox1; ++ox) acc += gr[ox] * xr[ox];
              } else {
                for (int ox = ox0; ox < ox1; ++ox) acc += gr[ox] * xr[ox * stride];
              }
            }
            gwrow[ky * m + kx] += acc;
          }
      }
    }

    // d/dx: parallel over input channels so writes stay disjoint
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int ci = 0; ci < x.c; ++ci) {
      float* gxplane = &gx.data[(static_cast<size_t>(in) * x.c + ci) * x.h * x.w];
      for (int co = 0; co < w.n; ++co) {
        const float* gplane = &gout.data[(static_cast<size_t>(in) * w.n + co) * oh * ow];
        const float* wrow = &w.data[((static_cast<size_t>(co) * w.c + ci) * m) * m];
        for (int ky = 0; ky < m; ++ky)
          for (int kx = 0; kx < m; ++kx) {
            const float wv = wrow[ky * m + kx];
            if (wv == 0.0f) continue;
            const int off_y = ky * dilation - pad;
            const int off_x = kx * dilation - pad;
            int ox0 = off_x < 0 ? (-off_x + stride - 1) / stride : 0;
            int ox1 = std::min(ow, (x.w - off_x + stride - 1) / stride);
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + off_y;
              if (iy < 0 || iy >= x.h) continue;
              float* gxr = gxplane + static_cast<size_t>(iy) * x.w + off_x;
              const float* gr = gplane + static_cast<size_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = ox0; ox < ox1; ++ox) gxr[ox] += wv * gr[ox];
              } else {
                for (int ox = ox0; ox < ox1; ++ox) gxr[ox * stride] += wv * gr[ox];
              }
            }
          }
      }
    }
  }
}

void upsample2x_forward(const Tensor& x, Tensor& out) {
  out = Tensor(x.n, x.c, 2 * x.h, 2 * x.w);
  for (int in = 0; in < x.n; ++in)
    for (int ci = 0; ci < x.c; ++ci)
      for (int oy = 0; oy < 2 * x.h; ++oy) {
        float sy = (oy + 0.5f) / 2.0f - 0.5f;
        sy = std::clamp(sy, 0.0f, static_cast<float>(x.h - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, x.h - 1);
        const float fy = sy - y0;
        for (int ox = 0; ox < 2 * x.w; ++ox) {
          float sx = (ox + 0.5f) / 2.0f - 0.5f;
          sx = std::clamp(sx, 0.0f, static_cast<float>(x.w - 1));
          const int x0 = static_cast<int>(sx);
          const int x1 = std::min(x0 + 1, x.w - 1);
          const float fx = sx - x0;
          out.at(in, ci, oy, ox) =
              (1 - fy) * ((1 - fx) * x.at(in, ci, y0, x0) + fx * x.at(in, ci, y0, x1)) +
              fy * ((1 - fx) * x.at(in, ci, y1, x0) + fx * x.at(in, ci, y1, x1));
        }
      }
}

void upsample2x_backward(const Tensor& gout, Tensor& gx) {
  const int h = gx.h, w = gx.w;
  for (int in = 0; in < gx.n; ++in)
    for (int ci = 0; ci < gx.c; ++ci)
      for (int oy = 0; oy < gout.h; ++oy) {
        float sy = std::clamp((oy + 0.5f) / 2.0f - 0.5f, 0.0f, static_cast<float>(h - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, h - 1);
        const float fy = sy - y0;
        for (int ox = 0; ox < gout.w; ++ox) {
          float sx = std::clamp((ox + 0.5f) / 2.0f - 0.5f, 0.0f, static_cast<float>(w - 1));
          const int x0 = static_cast<int>(sx);
          const int x1 = std::min(x0 + 1, w - 1);
          const float fx = sx - x0;
          const float g = gout.at(in, ci, oy, ox);
          gx.at(in, ci, y0, x0) += g * (1 - fy) * (1 - fx);
          gx.at(in, ci, y0, x1) += g * (1 - fy) * fx;
          gx.at(in, ci, y1, x0) += g * fy * (1 - fx);
          gx.at(in, ci, y1, x1) += g * fy * fx;
        }
      }
}

void maxpool2x2_forward(const Tensor& x, Tensor& out, std::vector<int>& argmax) {
  if (x.h % 2 || x.w % 2) throw std::invalid_argument("maxpool2x2: odd extent");
  out = Tensor(x.n, x.c, x.h / 2, x.w / 2);
  argmax.assign(out.numel(), -1);
  size_t oi = 0;
  for (int in = 0; in < x.n; ++in)
    for (int ci = 0; ci < x.c; ++ci)
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox, ++oi) {
          float best = -1e30f;
          int besti = -1;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int iy = 2 * oy + dy, ix = 2 * ox + dx;
              const int flat = static_cast<int>(((static_cast<size_t>(in) * x.c + ci) * x.h + iy) * x.w + ix);
              if (x.data[flat] > best) {
                best = x.data[flat];
                besti = flat;
              }
            }
          out.data[oi] = best;
          argmax[oi] = besti;
        }
}

void maxpool2x2_backward(const Tensor& gout, const std::vector<int>& argmax, Tensor& gx) {
  for (size_t i = 0; i < gout.numel(); ++i)
    if (argmax[i] >= 0) gx.data[argmax[i]] += gout.data[i];
}

}  // namespace rdad::kernels
