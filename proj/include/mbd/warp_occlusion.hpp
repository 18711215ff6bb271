#pragma once

#include <string>

#include "mbd/kernels.hpp"
#include "mbd/tensor.hpp"

namespace mbd {

enum class BaselineTag { kSmall, kWide, kMulti };

const char* baseline_tag_name(BaselineTag tag);
BaselineTag baseline_tag_from_name(const std::string& name);

// Non-negative horizontal disparity map [N,1,H,W], in pixels at its own
// resolution, tagged with the baseline it is expressed against. kMulti means
// "wide-baseline geometry, produced by the multi-baseline decoder".
struct Disparity {
  Tensor map;
  BaselineTag tag = BaselineTag::kWide;
};

// Binary map [N,1,H,W]: 1 = occluded / inconsistent, 0 = visible.
struct OcclusionMask {
  Tensor map;
};

// Left-right consistency occlusion estimate. Resamples the right-view
// disparity into the left view using the left-view disparity, then flags
// pixels where the two disagree. Maps at pyramid scale s store disparities
// in their own (downscaled) pixel units, so the comparison is brought back
// to full-resolution units first:
//
//   occluded(x) := |d_right(x - d_left(x)) - d_left(x)| * 2^s > threshold   (strict)
//
// This runs outside any tape: masks act as constants during training.
OcclusionMask consistency_mask(const Tensor& d_left, const Tensor& d_right, float threshold, int scale);

}  // namespace mbd
