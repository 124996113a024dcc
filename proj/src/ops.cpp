#include "rdad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rdad/kernels.hpp"

namespace rdad::ops {

TensorPtr conv2d(Tape& t, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride, int pad, int dilation) {
  auto out = std::make_shared<Tensor>();
  kernels::conv2d_forward(*x, *w, *b, stride, pad, *out, dilation);
  x->ensure_grad();
  w->ensure_grad();
  b->ensure_grad();
  out->ensure_grad();
  t.record([x, w, b, out, stride, pad, dilation]() {
    Tensor gx(x->n, x->c, x->h, x->w);
    Tensor gw(w->n, w->c, w->h, w->w);
    Tensor gb(1, b->c, 1, 1);
    Tensor gout(out->n, out->c, out->h, out->w);
    gout.data = out->grad;
    kernels::conv2d_backward(*x, *w, gout, stride, pad, gx, gw, gb, dilation);
    for (size_t i = 0; i < gx.data.size(); ++i) x->grad[i] += gx.data[i];
    for (size_t i = 0; i < gw.data.size(); ++i) w->grad[i] += gw.data[i];
    for (size_t i = 0; i < gb.data.size(); ++i) b->grad[i] += gb.data[i];
  });
  return out;
}

TensorPtr relu(Tape& t, const TensorPtr& x) {
  auto out = make_tensor(x->n, x->c, x->h, x->w);
  for (size_t i = 0; i < x->numel(); ++i) out->data[i] = std::max(0.0f, x->data[i]);
  x->ensure_grad();
  out->ensure_grad();
  t.record([x, out]() {
    for (size_t i = 0; i < x->numel(); ++i)
      if (x->data[i] > 0.0f) x->grad[i] += out->grad[i];
  });
  return out;
}

TensorPtr linear(Tape& t, const TensorPtr& x, const TensorPtr& W, const TensorPtr& b) {
  const int in_dim = W->c;
  const int out_dim = W->n;
  if (static_cast<int>(x->numel()) != x->n * in_dim)
    throw std::invalid_argument("linear: input length " + std::to_string(x->numel()) +
                                " != " + std::to_string(in_dim));
  auto out = make_tensor(x->n, out_dim, 1, 1);
  for (int in = 0; in < x->n; ++in)
    for (int o = 0; o < out_dim; ++o) {
      const float* wrow = &W->data[static_cast<size_t>(o) * in_dim];
      const float* xrow = &x->data[static_cast<size_t>(in) * in_dim];
      double acc = b->data[o];
      for (int i = 0; i < in_dim; ++i) acc += wrow[i] * xrow[i];
      out->data[static_cast<size_t>(in) * out_dim + o] = static_cast<float>(acc);
    }
  x->ensure_grad();
  W->ensure_grad();
  b->ensure_grad();
  out->ensure_grad();
  t.record([x, W, b, out, in_dim, out_dim]() {
    for (int in = 0; in < x->n; ++in)
      for (int o = 0; o < out_dim; ++o) {
        const float g = out->grad[static_cast<size_t>(in) * out_dim + o];
        if (g == 0.0f) continue;
        const float* wrow = &W->data[static_cast<size_t>(o) * in_dim];
        const float* xrow = &x->data[static_cast<size_t>(in) * in_dim];
        float* gwrow = &W->grad[static_cast<size_t>(o) * in_dim];
        float* gxrow = &x->grad[static_cast<size_t>(in) * in_dim];
        for (int i = 0; i < in_dim; ++i) {
          gwrow[i] += g * xrow[i];
          gxrow[i] += g * wrow[i];
        }
        b->grad[o] += g;
      }
  });
  return out;
}

TensorPtr softmax(Tape& t, const TensorPtr& logits) {
  const int k = static_cast<int>(logits->numel()) / logits->n;
  auto out = make_tensor(logits->n, logits->c, logits->h, logits->w);
  for (int in = 0; in < logits->n; ++in) {
    const float* z = &logits->data[static_cast<size_t>(in) * k];
    float* p = &out->data[static_cast<size_t>(in) * k];
    float mx = z[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, z[i]);
    double denom = 0.0;
    for (int i = 0; i < k; ++i) denom += std::exp(static_cast<double>(z[i] - mx));
    for (int i = 0; i < k; ++i)
      p[i] = static_cast<float>(std::exp(static_cast<double>(z[i] - mx)) / denom);
  }
  logits->ensure_grad();
  out->ensure_grad();
  t.record([logits, out, k]() {
    for (int in = 0; in < logits->n; ++in) {
      const float* p = &out->data[static_cast<size_t>(in) * k];
      const float* gp = &out->grad[static_cast<size_t>(in) * k];
      double dot = 0.0;
      for (int i = 0; i < k; ++i) dot += static_cast<double>(gp[i]) * p[i];
      float* gz = &logits->grad[static_cast<size_t>(in) * k];
      for (int i = 0; i < k; ++i)
        gz[i] += p[i] * (gp[i] - static_cast<float>(dot));
    }
  });
  return out;
}

TensorPtr sigmoid(Tape& t, const TensorPtr& x) {
  auto out = make_tensor(x->n, x->c, x->h, x->w);
  for (size_t i = 0; i < x->numel(); ++i)
    out->data[i] = 1.0f / (1.0f + std::exp(-x->data[i]));
  x->ensure_grad();
  out->ensure_grad();
  t.record([x, out]() {
    for (size_t i = 0; i < x->numel(); ++i) {
      const float s = out->data[i];
      x->grad[i] += out->grad[i] * s * (1.0f - s);
    }
  });
  return out;
}

TensorPtr max_merge(Tape& t, const TensorPtr& p, const TensorPtr& q) {
  if (!p->same_shape(*q))
    throw std::invalid_argument("max_merge: shape mismatch " + p->shape_str() + " vs " + q->shape_str());
  auto out = make_tensor(p->n, p->c, p->h, p->w);
  for (size_t i = 0; i < p->numel(); ++i)
    out->data[i] = p->data[i] >= q->data[i] ? p->data[i] : q->data[i];
  p->ensure_grad();
  q->ensure_grad();
  out->ensure_grad();
  t.record([p, q, out]() {
    for (size_t i = 0; i < p->numel(); ++i) {
      if (p->data[i] >= q->data[i])
        p->grad[i] += out->grad[i];
      else
        q->grad[i] += out->grad[i];
    }
  });
  return out;
}

TensorPtr add(Tape& t, const TensorPtr& a, const TensorPtr& b) {
  if (!a->same_shape(*b)) throw std::invalid_argument("add: shape mismatch");
  auto out = make_tensor(a->n, a->c, a->h, a->w);
  for (size_t i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] + b->data[i];
  a->ensure_grad();
  b->ensure_grad();
  out->ensure_grad();
  t.record([a, b, out]() {
    for (size_t i = 0; i < a->numel(); ++i) {
      a->grad[i] += out->grad[i];
      b->grad[i] += out->grad[i];
    }
  });
  return out;
}

TensorPtr concat_channels(Tape& t, const TensorPtr& a, const TensorPtr& b) {
  if (a->n != b->n || a->h != b->h || a->w != b->w)
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  auto out = make_tensor(a->n, a->c + b->c, a->h, a->w);
  const size_t plane = static_cast<size_t>(a->h) * a->w;
  for (int in = 0; in < a->n; ++in) {
    std::copy_n(&a->data[in * a->c * plane], a->c * plane, &out->data[in * out->c * plane]);
    std::copy_n(&b->data[in * b->c * plane], b->c * plane,
                &out->data[in * out->c * plane + a->c * plane]);
  }
  a->ensure_grad();
  b->ensure_grad();
  out->ensure_grad();
  t.record([a, b, out, plane]() {
    for (int in = 0; in < a->n; ++in) {
      for (size_t i = 0; i < a->c * plane; ++i)
        a->grad[in * a->c * plane + i] += out->grad[in * out->c * plane + i];
      for (size_t i = 0; i < b->c * plane; ++i)
        b->grad[in * b->c * plane + i] += out->grad[in * out->c * plane + a->c * plane + i];
    }
  });
  return out;
}

TensorPtr upsample2x(Tape& t, const TensorPtr& x) {
  auto out = std::make_shared<Tensor>();
  kernels::upsample2x_forward(*x, *out);
  x->ensure_grad();
  out->ensure_grad();
  t.record([x, out]() {
    Tensor gx(x->n, x->c, x->h, x->w);
    Tensor gout(out->n, out->c, out->h, out->w);
    gout.data = out->grad;
    kernels::upsample2x_backward(gout, gx);
    for (size_t i = 0; i < gx.data.size(); ++i) x->grad[i] += gx.data[i];
  });
  return out;
}

TensorPtr maxpool2x2(Tape& t, const TensorPtr& x) {
  auto out = std::make_shared<Tensor>();
  auto argmax = std::make_shared<std::vector<int>>();
  kernels::maxpool2x2_forward(*x, *out, *argmax);
  x->ensure_grad();
  out->ensure_grad();
  t.record([x, out, argmax]() {
    Tensor gout(out->n, out->c, out->h, out->w);
    gout.data = out->grad;
    Tensor gx(x->n, x->c, x->h, x->w);
    kernels::maxpool2x2_backward(gout, *argmax, gx);
    for (size_t i = 0; i < gx.data.size(); ++i) x->grad[i] += gx.data[i];
  });
  return out;
}

TensorPtr roi_pool(Tape& t, const TensorPtr& feat, const Box& roi, int out_h, int out_w,
                   float spatial_stride, bool* degenerate) {
  if (!roi.valid()) throw std::invalid_argument("roi_pool: degenerate roi");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("roi_pool: bad output extents");
  const int H = feat->h, W = feat->w;

  const int rx1 = static_cast<int>(std::lround(roi.x1() / spatial_stride));
  const int ry1 = static_cast<int>(std::lround(roi.y1() / spatial_stride));
  const int rx2 = static_cast<int>(std::lround(roi.x2() / spatial_stride));
  const int ry2 = static_cast<int>(std::lround(roi.y2() / spatial_stride));
  const int rw = std::max(rx2 - rx1, 1);
  const int rh = std::max(ry2 - ry1, 1);

  auto out = make_tensor(feat->n, feat->c, out_h, out_w);
  auto argmax = std::make_shared<std::vector<int>>(out->numel(), -1);
  bool any_cell = false;
  size_t oi = 0;
  for (int in = 0; in < feat->n; ++in)
    for (int ci = 0; ci < feat->c; ++ci)
      for (int py = 0; py < out_h; ++py)
        for (int px = 0; px < out_w; ++px, ++oi) {
          int hstart = ry1 + (py * rh) / out_h;
          int hend = ry1 + ((py + 1) * rh + out_h - 1) / out_h;
          int wstart = rx1 + (px * rw) / out_w;
          int wend = rx1 + ((px + 1) * rw + out_w - 1) / out_w;
          hstart = std::clamp(hstart, 0, H);
          hend = std::clamp(hend, 0, H);
          wstart = std::clamp(wstart, 0, W);
          wend = std::clamp(wend, 0, W);
          float best = 0.0f;
          int besti = -1;
          for (int iy = hstart; iy < hend; ++iy)
            for (int ix = wstart; ix < wend; ++ix) {
              const int flat = static_cast<int>(
                  ((static_cast<size_t>(in) * feat->c + ci) * H + iy) * W + ix);
              if (besti < 0 || feat->data[flat] > best) {
                best = feat->data[flat];
                besti = flat;
              }
            }
          out->data[oi] = besti >= 0 ? best : 0.0f;
          (*argmax)[oi] = besti;
          any_cell |= besti >= 0;
        }
  if (degenerate) *degenerate = !any_cell;

  feat->ensure_grad();
  out->ensure_grad();
  t.record([feat, out, argmax]() {
    for (size_t i = 0; i < out->numel(); ++i)
      if ((*argmax)[i] >= 0) feat->grad[(*argmax)[i]] += out->grad[i];
  });
  return out;
}

TensorPtr gather(Tape& t, const TensorPtr& x, const std::vector<int>& indices) {
  auto out = make_tensor(1, static_cast<int>(indices.size()), 1, 1);
  for (size_t i = 0; i < indices.size(); ++i) out->data[i] = x->data[indices[i]];
  x->ensure_grad();
  out->ensure_grad();
  auto idx = std::make_shared<std::vector<int>>(indices);
  t.record([x, out, idx]() {
    for (size_t i = 0; i < idx->size(); ++i) x->grad[(*idx)[i]] += out->grad[i];
  });
  return out;
}

TensorPtr sum(Tape& t, const TensorPtr& x) {
  auto out = make_tensor(1, 1, 1, 1);
  double acc = 0.0;
  for (float v : x->data) acc += v;
  out->data[0] = static_cast<float>(acc);
  x->ensure_grad();
  out->ensure_grad();
  t.record([x, out]() {
    for (size_t i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[0];
  });
  return out;
}

TensorPtr scale(Tape& t, const TensorPtr& x, float k) {
  auto out = make_tensor(x->n, x->c, x->h, x->w);
  for (size_t i = 0; i < x->numel(); ++i) out->data[i] = k * x->data[i];
  x->ensure_grad();
  out->ensure_grad();
  t.record([x, out, k]() {
    for (size_t i = 0; i < x->numel(); ++i) x->grad[i] += k * out->grad[i];
  });
  return out;
}

TensorPtr softmax_cross_entropy(Tape& t, const TensorPtr& logits, int label) {
  const int k = static_cast<int>(logits->numel());
  if (label < 0 || label >= k) throw std::invalid_argument("softmax_cross_entropy: bad label");
  std::vector<float> p(k);
  float mx = logits->data[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits->data[i]);
  double denom = 0.0;
  for (int i = 0; i < k; ++i) denom += std::exp(static_cast<double>(logits->data[i] - mx));
  for (int i = 0; i < k; ++i)
    p[i] = static_cast<float>(std::exp(static_cast<double>(logits->data[i] - mx)) / denom);
  auto out = make_tensor(1, 1, 1, 1);
  out->data[0] = -std::log(std::max(p[label], 1e-9f));
  logits->ensure_grad();
  out->ensure_grad();
  auto probs = std::make_shared<std::vector<float>>(std::move(p));
  t.record([logits, out, probs, label, k]() {
    const float g = out->grad[0];
    for (int i = 0; i < k; ++i)
      logits->grad[i] += g * ((*probs)[i] - (i == label ? 1.0f : 0.0f));
  });
  return out;
}

TensorPtr bce_with_logits_mean(Tape& t, const TensorPtr& logits, const std::vector<float>& targets) {
  const size_t k = logits->numel();
  if (k != targets.size()) throw std::invalid_argument("bce: length mismatch");
  double acc = 0.0;
  std::vector<float> s(k);
  for (size_t i = 0; i < k; ++i) {
    const float z = logits->data[i];
    s[i] = 1.0f / (1.0f + std::exp(-z));
    // numerically stable log-sum form
    acc += std::max(z, 0.0f) - z * targets[i] + std::log1p(std::exp(-std::fabs(z)));
  }
  auto out = make_tensor(1, 1, 1, 1);
  out->data[0] = static_cast<float>(acc / static_cast<double>(k));
  logits->ensure_grad();
  out->ensure_grad();
  auto sig = std::make_shared<std::vector<float>>(std::move(s));
  auto tgt = std::make_shared<std::vector<float>>(targets);
  t.record([logits, out, sig, tgt, k]() {
    const float g = out->grad[0] / static_cast<float>(k);
    for (size_t i = 0; i < k; ++i) logits->grad[i] += g * ((*sig)[i] - (*tgt)[i]);
  });
  return out;
}

TensorPtr smooth_l1_sum(Tape& t, const TensorPtr& pred, const std::vector<float>& target) {
  const size_t k = pred->numel();
  if (k != target.size()) throw std::invalid_argument("smooth_l1_sum: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < k; ++i) acc += smooth_l1(pred->data[i] - target[i]);
  auto out = make_tensor(1, 1, 1, 1);
  out->data[0] = static_cast<float>(acc);
  pred->ensure_grad();
  out->ensure_grad();
  auto tgt = std::make_shared<std::vector<float>>(target);
  t.record([pred, out, tgt, k]() {
    const float g = out->grad[0];
    for (size_t i = 0; i < k; ++i)
      pred->grad[i] += g * smooth_l1_grad(pred->data[i] - (*tgt)[i]);
  });
  return out;
}

}  // namespace rdad::ops
