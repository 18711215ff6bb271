#include "mbd/losses.hpp"

#include <cmath>
#include <limits>

namespace mbd {

namespace {
constexpr float kSsimC1 = 0.01f * 0.01f;
constexpr float kSsimC2 = 0.03f * 0.03f;
}  // namespace

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kMulti: return "multi";
    case TrainMode::kSmallOnly: return "small_only";
    case TrainMode::kWideOnly: return "wide_only";
  }
  return "unknown";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "multi") return TrainMode::kMulti;
  if (name == "small_only") return TrainMode::kSmallOnly;
  if (name == "wide_only") return TrainMode::kWideOnly;
  throw Error("unknown train mode '" + name + "' (expected multi, small_only or wide_only)");
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0f && alpha <= 1.0f)) throw Error("loss weights: alpha must be in [0,1]");
  if (!(beta >= 0.0f && beta <= 1.0f)) throw Error("loss weights: beta must be in [0,1]");
  if (!(lambda >= 0.0f)) throw Error("loss weights: lambda must be >= 0");
  if (!(r > 0.0f)) throw Error("loss weights: baseline ratio r must be > 0");
  if (!(occl_threshold > 0.0f)) throw Error("loss weights: occl_threshold must be > 0");
}

Value ssim_map(Tape& t, Value a, Value b) {
  Value mu_a = t.box3_mean(a);
  Value mu_b = t.box3_mean(b);
  Value mu_a2 = t.mul(mu_a, mu_a);
  Value mu_b2 = t.mul(mu_b, mu_b);
  Value mu_ab = t.mul(mu_a, mu_b);
  Value sig_a = t.sub(t.box3_mean(t.mul(a, a)), mu_a2);
  Value sig_b = t.sub(t.box3_mean(t.mul(b, b)), mu_b2);
  Value sig_ab = t.sub(t.box3_mean(t.mul(a, b)), mu_ab);
  Value num = t.mul(t.affine(mu_ab, 2.0f, kSsimC1), t.affine(sig_ab, 2.0f, kSsimC2));
  Value den = t.mul(t.affine(t.add(mu_a2, mu_b2), 1.0f, kSsimC1), t.affine(t.add(sig_a, sig_b), 1.0f, kSsimC2));
  return t.clip(t.div(num, den), -1.0f, 1.0f);
}

Value photometric_loss(Tape& t, Value img, Value recon, float alpha, std::optional<Value> pixel_weight) {
  Value l1 = t.channel_mean(t.abs(t.sub(img, recon)));
  Value per_pixel;
  if (alpha > 0.0f) {
    Value dssim = t.channel_mean(ssim_map(t, img, recon));
    // alpha * (1 - ssim) / 2  ==  -alpha/2 * ssim + alpha/2
    Value ssim_term = t.affine(dssim, -0.5f * alpha, 0.5f * alpha);
    per_pixel = t.add(ssim_term, t.affine(l1, 1.0f - alpha, 0.0f));
  } else {
    per_pixel = l1;
  }
  if (pixel_weight) per_pixel = t.mul(per_pixel, *pixel_weight);
  return t.mean(per_pixel);
}

Value smoothness_loss(Tape& t, Value disp, Value img) {
  Value ex = t.exp_neg(t.channel_mean(t.abs(t.diff_x(img))));
  Value ey = t.exp_neg(t.channel_mean(t.abs(t.diff_y(img))));
  Value term_x = t.mean(t.mul(t.abs(t.diff_x(disp)), ex));
  Value term_y = t.mean(t.mul(t.abs(t.diff_y(disp)), ey));
  return t.add(term_x, term_y);
}

Value disparity_assignment_loss(Tape& t, Value d_m, Value d_s, Value occl_mask, float r, float beta, float d_max,
                                LdaNorm norm) {
  if (!(d_max > 0.0f)) throw Error("disparity_assignment_loss: d_max must be > 0");
  Value dm_n = t.affine(d_m, 1.0f / d_max, 0.0f);
  Value ds_n = t.affine(d_s, r / d_max, 0.0f);
  Value l1 = t.abs(t.sub(dm_n, ds_n));
  Value per_pixel;
  if (beta > 0.0f) {
    Value ssim_term = t.affine(ssim_map(t, dm_n, ds_n), -0.5f * beta, 0.5f * beta);
    per_pixel = t.add(ssim_term, t.affine(l1, 1.0f - beta, 0.0f));
  } else {
    per_pixel = l1;
  }
  Value masked = t.mul(per_pixel, occl_mask);
  if (norm == LdaNorm::kN) return t.mean(masked);
  // kMaskSum: sum / max(#masked, 1)
  Value mask_count = t.clip(t.sum(occl_mask), 1.0f, std::numeric_limits<float>::max());
  return t.div(t.sum(masked), mask_count);
}

double LossBreakdown::photo_small_sum() const {
  double v = 0;
  for (const auto& s : scales) v += s.photo_small;
  return v;
}
double LossBreakdown::smooth_small_sum() const {
  double v = 0;
  for (const auto& s : scales) v += s.smooth_small;
  return v;
}
double LossBreakdown::photo_wide_sum() const {
  double v = 0;
  for (const auto& s : scales) v += s.photo_wide_l + s.photo_wide_r;
  return v;
}
double LossBreakdown::smooth_wide_sum() const {
  double v = 0;
  for (const auto& s : scales) v += s.smooth_wide;
  return v;
}
double LossBreakdown::dec3_photo_sum() const {
  double v = 0;
  for (const auto& s : scales) v += s.dec3_photo;
  return v;
}
double LossBreakdown::dec3_assign_sum() const {
  double v = 0;
  for (const auto& s : scales) v += s.dec3_assign;
  return v;
}
double LossBreakdown::dec3_smooth_sum() const {
  double v = 0;
  for (const auto& s : scales) v += s.dec3_smooth;
  return v;
}

bool LossBreakdown::all_finite() const { return first_non_finite().empty(); }

std::string LossBreakdown::first_non_finite() const {
  auto bad = [](double v) { return !std::isfinite(v); };
  for (size_t s = 0; s < scales.size(); ++s) {
    const ScaleTerms& st = scales[s];
    const std::string suffix = "@s" + std::to_string(s);
    if (bad(st.photo_small)) return "photo_small" + suffix;
    if (bad(st.smooth_small)) return "smooth_small" + suffix;
    if (bad(st.photo_wide_l)) return "photo_wide_l" + suffix;
    if (bad(st.photo_wide_r)) return "photo_wide_r" + suffix;
    if (bad(st.smooth_wide)) return "smooth_wide" + suffix;
    if (bad(st.dec3_photo)) return "dec3_photo" + suffix;
    if (bad(st.dec3_assign)) return "dec3_assign" + suffix;
    if (bad(st.dec3_smooth)) return "dec3_smooth" + suffix;
  }
  if (bad(total)) return "total";
  return "";
}

TotalLossResult total_loss(Tape& t, const std::array<ScaleInputs, 4>& scales, const LossWeights& w, TrainMode mode) {
  w.validate();
  Value total;
  auto emit = [&](Value term, float weight, double* slot) {
    Value weighted = (weight == 1.0f) ? term : t.affine(term, weight, 0.0f);
    *slot += static_cast<double>(t.val(weighted)[0]);
    total = total.valid() ? t.add(total, weighted) : weighted;
  };

  LossBreakdown bd;
  const bool use_small = (mode == TrainMode::kMulti || mode == TrainMode::kSmallOnly);
  const bool use_wide = (mode == TrainMode::kMulti || mode == TrainMode::kWideOnly);

  for (int s = 0; s < 4; ++s) {
    const ScaleInputs& in = scales[static_cast<size_t>(s)];
    auto& terms = bd.scales[static_cast<size_t>(s)];
    const float lambda_s = w.lambda / static_cast<float>(1 << s);

    if (use_small) {
      if (!in.d_s.valid()) throw Error("total_loss: d_s missing at scale " + std::to_string(s));
      Value recon = t.warp_horizontal(in.ir1, in.d_s, WarpDir::kSampleLeftOf);
      emit(photometric_loss(t, in.il, recon, w.alpha), 1.0f, &terms.photo_small);
      emit(smoothness_loss(t, in.d_s, in.il), lambda_s, &terms.smooth_small);
    }
    if (use_wide) {
      if (!in.d_l.valid() || !in.d_r.valid()) throw Error("total_loss: d_l/d_r missing at scale " + std::to_string(s));
      Value recon_l = t.warp_horizontal(in.ir2, in.d_l, WarpDir::kSampleLeftOf);
      Value recon_r = t.warp_horizontal(in.il, in.d_r, WarpDir::kSampleRightOf);
      emit(photometric_loss(t, in.il, recon_l, w.alpha), 1.0f, &terms.photo_wide_l);
      emit(photometric_loss(t, in.ir2, recon_r, w.alpha), 1.0f, &terms.photo_wide_r);
      Value smooth = t.add(smoothness_loss(t, in.d_l, in.il), smoothness_loss(t, in.d_r, in.ir2));
      emit(smooth, lambda_s, &terms.smooth_wide);
    }
    if (mode == TrainMode::kMulti) {
      if (!in.d_m.valid()) throw Error("total_loss: d_m missing at scale " + std::to_string(s));
      // The mask is derived from the decoder-2 outputs of this very step and
      // enters the graph as data, not as a differentiable function.
      OcclusionMask mask = consistency_mask(t.val(in.d_l), t.val(in.d_r), w.occl_threshold, s);
      Value mask_v = t.constant(std::move(mask.map));
      Value visible = t.affine(mask_v, -1.0f, 1.0f);  // 1 - M
      Value recon3 = t.warp_horizontal(in.ir2, in.d_m, WarpDir::kSampleLeftOf);
      emit(photometric_loss(t, in.il, recon3, w.alpha, visible), 1.0f, &terms.dec3_photo);
      emit(disparity_assignment_loss(t, in.d_m, t.stop_gradient(in.d_s), mask_v, w.r, w.beta, in.d_max, w.lda_norm),
           1.0f, &terms.dec3_assign);
      emit(smoothness_loss(t, in.d_m, in.il), lambda_s, &terms.dec3_smooth);
    }
  }
  bd.total = static_cast<double>(t.val(total)[0]);
  return TotalLossResult{total, bd};
}

}  // namespace mbd
