#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mbd/tensor.hpp"

namespace mbd {

// Depth range selected on ground truth: lo <= g < hi, or lo <= g <= hi for
// the closed full-range bucket.
struct DepthBucket {
  float lo = 0.1f;
  float hi = 80.0f;
  bool closed_hi = false;

  std::string label() const;  // "0.1-10"
  bool contains(float g) const {
    return g >= lo && (closed_hi ? g <= hi : g < hi);
  }
};

// Near, far, and full range as reported in depth-estimation tables.
std::vector<DepthBucket> standard_buckets();

// depth = focal·baseline / max(d, eps) clamped to depth_cap. eps keeps
// zero-disparity pixels finite; they saturate at the cap anyway.
Tensor disparity_to_depth(const Tensor& disp, float focal_px, float baseline_m,
                          float depth_cap = 80.0f, float eps = 1e-3f);

// One bucket's worth of the Eigen metric suite.
struct MetricsRow {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  std::int64_t n_pixels = 0;
  std::int64_t n_images = 0;
  bool empty = true;
};

// Metrics over the bucket's pixels of a single image pair. Accumulates in
// double; an empty bucket yields a row flagged empty rather than NaNs.
MetricsRow eigen_metrics(const Tensor& pred_depth, const Tensor& gt_depth,
                         const DepthBucket& bucket);

// Per-image metrics averaged with equal image weight (images whose bucket is
// empty don't contribute). One row per bucket.
struct MetricsReport {
  std::vector<DepthBucket> buckets;
  std::vector<MetricsRow> rows;
};
MetricsReport bucket_report(const std::vector<Tensor>& pred_depths,
                            const std::vector<Tensor>& gt_depths,
                            const std::vector<DepthBucket>& buckets);

// CSV with one line per (method, bucket):
// method,bucket,abs_rel,sq_rel,rmse,rmse_log,d1,d2,d3,n_pixels,n_images
std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& reports);

// Flip the last (width) axis.
Tensor hflip(const Tensor& t);

// Border-aware fusion of a prediction with the flipped prediction of the
// flipped input: output = mean(d1,d2) + w_l·(d2 − mean) + w_r·(d1 − mean),
// where w_l ramps 1→0 over the leftmost 5% of columns (favoring the flipped
// map, whose left border is the easier right border of the mirrored view)
// and w_r mirrors it. Written so that d1 == d2 reproduces d1 bit-exactly.
Tensor post_process(const std::function<Tensor(const Tensor&)>& infer, const Tensor& image);

}  // namespace mbd
