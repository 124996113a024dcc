#include "rdad/model.hpp"

#include <cmath>
#include <stdexcept>

#include "rdad/kernels.hpp"

namespace rdad {

int pad_for(int extent, int m, int dilation) {
  const int me = (m - 1) * dilation + 1;
  if (extent >= me) return 0;
  return (me - extent + 1) / 2;
}

static int ext_after(int extent, int m, int dilation) {
  const int pad = pad_for(extent, m, dilation);
  return kernels::conv_out_extent(extent, m, 1, pad, dilation);
}

TensorPtr rab_forward(Tape& t, const TensorPtr& p, const TensorPtr& q, const RabParams& params) {
  // channel counts may differ (the branch convs reconcile them); the merge
  // needs matching spatial extents only
  if (p->n != q->n || p->h != q->h || p->w != q->w)
    throw std::invalid_argument("rab_forward: branch extent mismatch");
  const int pad = pad_for(p->h, params.m, params.dilation);
  auto bp = ops::relu(t, ops::conv2d(t, p, params.wp, params.bp, 1, pad, params.dilation));
  auto bq = ops::relu(t, ops::conv2d(t, q, params.wq, params.bq, 1, pad, params.dilation));
  if (params.merge == "max") return ops::max_merge(t, bp, bq);
  if (params.merge == "sum") return ops::add(t, bp, bq);
  if (params.merge == "concat") return ops::concat_channels(t, bp, bq);
  throw std::invalid_argument("rab_forward: unknown merge \"" + params.merge + "\"");
}

MultiRegionFeatures extract_multiregion_features(Tape& t, const TensorPtr& feat,
                                                 const TensorPtr& upsampled_feat,
                                                 const Box& roi, int h_roi, int w_roi,
                                                 float stride) {
  if (!roi.valid()) throw std::invalid_argument("extract_multiregion_features: degenerate roi");
  MultiRegionFeatures out;
  bool deg = false;
  out.whole = ops::roi_pool(t, feat, roi, h_roi, w_roi, stride, &deg);
  out.degenerate = deg;

  const int ph = (h_roi + 1) / 2, pw = (w_roi + 1) / 2;
  const TensorPtr& part_src = upsampled_feat ? upsampled_feat : feat;
  const float part_stride = upsampled_feat ? stride / 2.0f : stride;
  const BoxParts parts = decompose_region(roi);
  out.left = ops::roi_pool(t, part_src, parts.left, ph, pw, part_stride);
  out.right = ops::roi_pool(t, part_src, parts.right, ph, pw, part_stride);
  out.upper = ops::roi_pool(t, part_src, parts.upper, ph, pw, part_stride);
  out.bottom = ops::roi_pool(t, part_src, parts.bottom, ph, pw, part_stride);
  return out;
}

DetectionModel::DetectionModel(const RunConfig& cfg) : cfg_(cfg) {
  const auto& bb = cfg_.backbone;
  const auto& rda = cfg_.rda;
  if (rda.h_roi % 2 || rda.w_roi % 2)
    throw std::invalid_argument("DetectionModel: h_roi/w_roi must be even");

  Rng rng(bb.seed);
  int cin = 3;
  for (size_t i = 0; i < bb.channels.size(); ++i) {
    const int cout = bb.channels[i];
    const float std = std::sqrt(2.0f / (cin * 9.0f));
    param("backbone.conv" + std::to_string(i + 1) + ".w", cout, cin, 3, 3, rng, std);
    param("backbone.conv" + std::to_string(i + 1) + ".b", 1, cout, 1, 1, rng, 0.0f);
    cin = cout;
  }
  const int cf = bb.feat_channels();

  Rng hrng(bb.seed + 1000);
  const int A = cfg_.mrp.anchors.anchors_per_cell();
  param("rpn.trunk.w", cf, cf, 3, 3, hrng, std::sqrt(2.0f / (cf * 9.0f)));
  param("rpn.trunk.b", 1, cf, 1, 1, hrng, 0.0f);
  param("rpn.score.w", A, cf, 1, 1, hrng, 0.01f);
  param("rpn.score.b", 1, A, 1, 1, hrng, 0.0f);
  param("rpn.delta.w", 4 * A, cf, 1, 1, hrng, 0.01f);
  param("rpn.delta.b", 1, 4 * A, 1, 1, hrng, 0.0f);

  const int m = rda.m, d = rda.dilation, k = rda.k;
  part_ext_ = (rda.h_roi + 1) / 2;
  e1_ = ext_after(part_ext_, m, d);
  e2_ = ext_after(e1_, m, d);
  e3_ = ext_after(e2_, m, d);
  const bool cat = rda.merge == "concat";
  const int km = cat ? 2 * k : k;  // channel count after a merge

  auto rab_params = [&](const std::string& prefix, int in_ch) {
    const float std = std::sqrt(2.0f / (in_ch * m * m));
    param(prefix + ".p.w", k, in_ch, m, m, hrng, std);
    param(prefix + ".p.b", 1, k, 1, 1, hrng, 0.0f);
    param(prefix + ".q.w", k, in_ch, m, m, hrng, std);
    param(prefix + ".q.b", 1, k, 1, 1, hrng, 0.0f);
  };
  if (rda.use_decomposition) {
    rab_params("rda.s1_lr", cf);
    rab_params("rda.s1_bu", cf);
    rab_params("rda.s2_comb", km);
  }

  // whole branch: pooled to half extent, then 3x3 valid convs down to e2
  const int whole_start = rda.h_roi / 2;
  if ((whole_start - e2_) % 2 || whole_start < e2_)
    throw std::invalid_argument("DetectionModel: whole branch cannot reach comb extent");
  n_whole_convs_ = (whole_start - e2_) / 2;
  int win = cf;
  for (int i = 0; i < n_whole_convs_; ++i) {
    param("rda.whole" + std::to_string(i + 1) + ".w", k, win, 3, 3, hrng,
          std::sqrt(2.0f / (win * 9.0f)));
    param("rda.whole" + std::to_string(i + 1) + ".b", 1, k, 1, 1, hrng, 0.0f);
    win = k;
  }
  if (n_whole_convs_ == 0) win = cf;  // unreachable with even h_roi >= 2

  if (rda.use_decomposition) {
    // stage 3: p = whole branch (k channels), q = comb (k or 2k)
    const float stdp = std::sqrt(2.0f / (win * m * m));
    const float stdq = std::sqrt(2.0f / (km * m * m));
    param("rda.s3.p.w", k, win, m, m, hrng, stdp);
    param("rda.s3.p.b", 1, k, 1, 1, hrng, 0.0f);
    param("rda.s3.q.w", k, km, m, m, hrng, stdq);
    param("rda.s3.q.b", 1, k, 1, 1, hrng, 0.0f);
    head_dim_ = (cat ? 2 * k : k) * e3_ * e3_;
  } else {
    // whole-only baseline: a single final conv stands in for stage 3
    param("rda.s3.p.w", k, win, m, m, hrng, std::sqrt(2.0f / (win * m * m)));
    param("rda.s3.p.b", 1, k, 1, 1, hrng, 0.0f);
    head_dim_ = k * e3_ * e3_;
  }

  const int ncls = cfg_.num_classes + 1;
  param("rda.cls.w", ncls, head_dim_, 1, 1, hrng, 0.01f);
  param("rda.cls.b", 1, ncls, 1, 1, hrng, 0.0f);
  param("rda.reg.w", 4 * ncls, head_dim_, 1, 1, hrng, 0.01f);
  param("rda.reg.b", 1, 4 * ncls, 1, 1, hrng, 0.0f);
}

TensorPtr DetectionModel::param(const std::string& name, int n, int c, int h, int w, Rng& rng,
                                float stddev) {
  auto t = make_tensor(n, c, h, w);
  if (stddev > 0)
    for (float& v : t->data) v = rng.normal(0.0f, stddev);
  params_[name] = t;
  return t;
}

RabParams DetectionModel::rab(const std::string& prefix) const {
  RabParams r;
  r.wp = params_.at(prefix + ".p.w");
  r.bp = params_.at(prefix + ".p.b");
  r.wq = params_.at(prefix + ".q.w");
  r.bq = params_.at(prefix + ".q.b");
  r.m = cfg_.rda.m;
  r.dilation = cfg_.rda.dilation;
  r.merge = cfg_.rda.merge;
  return r;
}

TensorPtr DetectionModel::backbone_forward(Tape& t, const TensorPtr& image) const {
  const auto& bb = cfg_.backbone;
  if (image->h % bb.stride || image->w % bb.stride)
    throw std::invalid_argument("backbone_forward: extents not divisible by stride " +
                                std::to_string(bb.stride));
  TensorPtr x = image;
  for (size_t i = 0; i < bb.channels.size(); ++i) {
    const std::string p = "backbone.conv" + std::to_string(i + 1);
    x = ops::relu(t, ops::conv2d(t, x, params_.at(p + ".w"), params_.at(p + ".b"), 2, 1));
  }
  return x;
}

DetectionModel::RpnOut DetectionModel::rpn_forward(Tape& t, const TensorPtr& feat) const {
  auto trunk = ops::relu(
      t, ops::conv2d(t, feat, params_.at("rpn.trunk.w"), params_.at("rpn.trunk.b"), 1, 1));
  RpnOut out;
  out.logits = ops::conv2d(t, trunk, params_.at("rpn.score.w"), params_.at("rpn.score.b"), 1, 0);
  out.deltas = ops::conv2d(t, trunk, params_.at("rpn.delta.w"), params_.at("rpn.delta.b"), 1, 0);
  return out;
}

TensorPtr DetectionModel::whole_branch(Tape& t, const TensorPtr& whole) const {
  TensorPtr x = ops::maxpool2x2(t, whole);
  for (int i = 0; i < n_whole_convs_; ++i) {
    const std::string p = "rda.whole" + std::to_string(i + 1);
    x = ops::relu(t, ops::conv2d(t, x, params_.at(p + ".w"), params_.at(p + ".b"), 1, 0));
  }
  return x;
}

DetectionModel::RdaOut DetectionModel::rda_forward(Tape& t, const TensorPtr& feat,
                                                   const TensorPtr& upsampled_feat,
                                                   const Box& roi) const {
  const auto& rda = cfg_.rda;
  const float stride = static_cast<float>(cfg_.backbone.stride);

  RdaOut out;
  TensorPtr assembled;
  if (rda.use_decomposition) {
    auto mrf = extract_multiregion_features(t, feat, rda.use_upsample ? upsampled_feat : nullptr,
                                            roi, rda.h_roi, rda.w_roi, stride);
    out.degenerate = mrf.degenerate;
    auto lr = rab_forward(t, mrf.left, mrf.right, rab("rda.s1_lr"));
    auto bu = rab_forward(t, mrf.bottom, mrf.upper, rab("rda.s1_bu"));
    auto comb = rab_forward(t, lr, bu, rab("rda.s2_comb"));
    auto whole = whole_branch(t, mrf.whole);
    assembled = rab_forward(t, whole, comb, rab("rda.s3"));
  } else {
    bool deg = false;
    auto whole = ops::roi_pool(t, feat, roi, rda.h_roi, rda.w_roi, stride, &deg);
    out.degenerate = deg;
    auto x = whole_branch(t, whole);
    const int pad = pad_for(x->h, rda.m, rda.dilation);
    assembled = ops::relu(t, ops::conv2d(t, x, params_.at("rda.s3.p.w"),
                                         params_.at("rda.s3.p.b"), 1, pad, rda.dilation));
  }

  out.cls_logits = ops::linear(t, assembled, params_.at("rda.cls.w"), params_.at("rda.cls.b"));
  out.box_deltas = ops::linear(t, assembled, params_.at("rda.reg.w"), params_.at("rda.reg.b"));
  return out;
}

void DetectionModel::zero_grads() {
  for (auto& [name, p] : params_) p->zero_grad();
}

bool DetectionModel::all_finite() const {
  for (auto& [name, p] : params_)
    if (!p->all_finite()) return false;
  return true;
}

}  // namespace rdad
