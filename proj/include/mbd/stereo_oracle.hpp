#pragma once

#include <vector>

#include "mbd/synthetic.hpp"
#include "mbd/tensor.hpp"

namespace mbd {

enum class CostAxis {
  kDisparity,     // axis values are pixel disparities
  kInverseDepth,  // axis values are 1/Z in 1/m
};

// Per-pixel matching cost over a discrete hypothesis axis. cost is {D,H,W}
// aligned with the left view; axis is strictly increasing with D entries.
struct CostVolume {
  CostAxis kind = CostAxis::kDisparity;
  std::vector<float> axis;
  Tensor cost;

  void validate() const;  // axis monotone, costs finite and >= 0
};

// Windowed-SSD volume for integer disparities 0..d_range (right view sampled
// at x−d, edge-clamped). Costs are summed over channels and over a
// `window`×`window` box clamped to the image.
CostVolume ssd_cost_volume(const Tensor& left, const Tensor& right, int d_range, int window);

// Uniform inverse-depth axis with the matcher's search margins applied:
// steps values from 0.8/z_far to 1.2/z_near.
std::vector<float> inv_depth_axis(int steps, float z_near, float z_far);

// One baseline's SSD volume on an inverse-depth axis: hypothesis ζ warps the
// right view by focal_px·baseline_m·ζ pixels (linear interpolation).
CostVolume ssd_cost_volume_inv_depth(const Tensor& left, const Tensor& right, float focal_px,
                                     float baseline_m, const std::vector<float>& zeta,
                                     int window);

// Elementwise sum of the two baselines' inverse-depth volumes on a shared
// axis — the multi-baseline aggregate.
CostVolume sssd_cost_volume(const Tensor& left, const Tensor& right1, const Tensor& right2,
                            const CameraRig& rig, int inv_depth_steps, int window,
                            float z_near = 2.0f, float z_far = 40.0f);

// Winner-take-all argmin per pixel in axis units. Ties go to the smallest
// index; a sub-pixel parabola fit refines interior minima. Pixels whose cost
// curve is flat (no texture to match) get sentinel -1.
Tensor wta(const CostVolume& vol);

// Single-baseline block matching: WTA on the disparity volume plus a
// left-right consistency check; pixels whose left and right disparities
// disagree by more than 1 px get sentinel -1.
Tensor ssd_block_match(const Tensor& left, const Tensor& right, int d_range, int window);

// Okutomi–Kanade style matching: argmin of the summed inverse-depth volume,
// converted to wide-baseline disparity focal·b_wide·ζ*. Dense except for
// flat-cost pixels (-1).
Tensor sssd_multibaseline(const Tensor& left, const Tensor& right1, const Tensor& right2,
                          const CameraRig& rig, int inv_depth_steps, int window,
                          float z_near = 2.0f, float z_far = 40.0f);

// Per-scene accuracy of an oracle disparity map against ground truth,
// counting only valid (>= 0) predictions on non-occluded pixels.
struct OracleStats {
  std::int64_t n_valid = 0;
  std::int64_t n_total = 0;
  double mae = 0.0;            // over valid pixels
  double frac_within_1px = 0.0;
};
OracleStats oracle_stats(const Tensor& pred, const Tensor& gt, const Tensor& occl);

}  // namespace mbd
