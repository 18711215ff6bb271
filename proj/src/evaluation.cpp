#include "mbd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mbd {

std::string DepthBucket::label() const {
  char buf[48];
  auto trim = [](float v, char* s, std::size_t n) {
    // %g keeps "0.1" and "10" tidy without trailing zeros
    std::snprintf(s, n, "%g", static_cast<double>(v));
  };
  char a[16], b[16];
  trim(lo, a, sizeof(a));
  trim(hi, b, sizeof(b));
  std::snprintf(buf, sizeof(buf), "%s-%s", a, b);
  return buf;
}

std::vector<DepthBucket> standard_buckets() {
  return {{0.1f, 10.0f, false}, {10.0f, 80.0f, false}, {0.1f, 80.0f, true}};
}

Tensor disparity_to_depth(const Tensor& disp, float focal_px, float baseline_m, float depth_cap,
                          float eps) {
  if (!(focal_px > 0) || !(baseline_m > 0) || !(depth_cap > 0) || !(eps > 0)) {
    throw Error("disparity_to_depth needs positive focal, baseline, cap, eps");
  }
  Tensor out(disp.shape());
  const float fb = focal_px * baseline_m;
  for (std::int64_t i = 0; i < disp.numel(); ++i) {
    out[i] = std::min(depth_cap, fb / std::max(disp[i], eps));
  }
  return out;
}

MetricsRow eigen_metrics(const Tensor& pred_depth, const Tensor& gt_depth,
                         const DepthBucket& bucket) {
  pred_depth.require_shape(gt_depth.shape(), "predicted depth");
  MetricsRow r;
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
  std::int64_t d1 = 0, d2 = 0, d3 = 0, n = 0;
  constexpr double kT1 = 1.25, kT2 = 1.25 * 1.25, kT3 = 1.25 * 1.25 * 1.25;
  for (std::int64_t i = 0; i < gt_depth.numel(); ++i) {
    const double g = gt_depth[i];
    if (!bucket.contains(static_cast<float>(g))) continue;
    const double p = pred_depth[i];
    ++n;
    const double diff = p - g;
    abs_rel += std::abs(diff) / g;
    sq_rel += diff * diff / g;
    sq += diff * diff;
    const double lg = std::log(p) - std::log(g);
    sq_log += lg * lg;
    const double ratio = std::max(p / g, g / p);
    if (ratio < kT1) ++d1;
    if (ratio < kT2) ++d2;
    if (ratio < kT3) ++d3;
  }
  if (n == 0) return r;
  const double dn = static_cast<double>(n);
  r.abs_rel = abs_rel / dn;
  r.sq_rel = sq_rel / dn;
  r.rmse = std::sqrt(sq / dn);
  r.rmse_log = std::sqrt(sq_log / dn);
  r.delta1 = static_cast<double>(d1) / dn;
  r.delta2 = static_cast<double>(d2) / dn;
  r.delta3 = static_cast<double>(d3) / dn;
  r.n_pixels = n;
  r.n_images = 1;
  r.empty = false;
  return r;
}

MetricsReport bucket_report(const std::vector<Tensor>& pred_depths,
                            const std::vector<Tensor>& gt_depths,
                            const std::vector<DepthBucket>& buckets) {
  if (pred_depths.size() != gt_depths.size()) {
    throw Error("bucket_report: " + std::to_string(pred_depths.size()) + " predictions vs " +
                std::to_string(gt_depths.size()) + " ground truths");
  }
  MetricsReport rep;
  rep.buckets = buckets;
  rep.rows.resize(buckets.size());
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    MetricsRow& acc = rep.rows[b];
    for (std::size_t i = 0; i < pred_depths.size(); ++i) {
      const MetricsRow r = eigen_metrics(pred_depths[i], gt_depths[i], buckets[b]);
      if (r.empty) continue;
      acc.abs_rel += r.abs_rel;
      acc.sq_rel += r.sq_rel;
      acc.rmse += r.rmse;
      acc.rmse_log += r.rmse_log;
      acc.delta1 += r.delta1;
      acc.delta2 += r.delta2;
      acc.delta3 += r.delta3;
      acc.n_pixels += r.n_pixels;
      acc.n_images += 1;
    }
    if (acc.n_images > 0) {
      const double m = static_cast<double>(acc.n_images);
      acc.abs_rel /= m;
      acc.sq_rel /= m;
      acc.rmse /= m;
      acc.rmse_log /= m;
      acc.delta1 /= m;
      acc.delta2 /= m;
      acc.delta3 /= m;
      acc.empty = false;
    }
  }
  return rep;
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& reports) {
  std::string out = "method,bucket,abs_rel,sq_rel,rmse,rmse_log,d1,d2,d3,n_pixels,n_images\n";
  char line[256];
  for (const auto& [method, rep] : reports) {
    for (std::size_t b = 0; b < rep.rows.size(); ++b) {
      const MetricsRow& r = rep.rows[b];
      std::snprintf(line, sizeof(line), "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%lld,%lld\n",
                    method.c_str(), rep.buckets[b].label().c_str(), r.abs_rel, r.sq_rel, r.rmse,
                    r.rmse_log, r.delta1, r.delta2, r.delta3, static_cast<long long>(r.n_pixels),
                    static_cast<long long>(r.n_images));
      out += line;
    }
  }
  return out;
}

Tensor hflip(const Tensor& t) {
  if (t.rank() < 1) throw Error("hflip needs at least one axis");
  const int w = t.dim(t.rank() - 1);
  const std::int64_t rows = t.numel() / w;
  Tensor out(t.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* src = t.data() + r * w;
    float* dst = out.data() + r * w;
    for (int x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
  }
  return out;
}

Tensor post_process(const std::function<Tensor(const Tensor&)>& infer, const Tensor& image) {
  const Tensor d1 = infer(image);
  const Tensor d2 = hflip(infer(hflip(image)));
  d2.require_shape(d1.shape(), "flipped prediction");
  const int w = d1.dim(d1.rank() - 1);
  const std::int64_t rows = d1.numel() / w;
  const float ramp_w = 0.05f * static_cast<float>(w);
  Tensor out(d1.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* p1 = d1.data() + r * w;
    const float* p2 = d2.data() + r * w;
    float* po = out.data() + r * w;
    for (int x = 0; x < w; ++x) {
      const float wl = std::max(0.0f, 1.0f - static_cast<float>(x) / ramp_w);
      const float wr = std::max(0.0f, 1.0f - static_cast<float>(w - 1 - x) / ramp_w);
      const float mean = 0.5f * (p1[x] + p2[x]);
      po[x] = mean + wl * (p2[x] - mean) + wr * (p1[x] - mean);
    }
  }
  return out;
}

}  // namespace mbd
