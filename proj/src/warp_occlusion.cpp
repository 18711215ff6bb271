#include "mbd/warp_occlusion.hpp"

#include <cmath>

namespace mbd {

const char* baseline_tag_name(BaselineTag tag) {
  switch (tag) {
    case BaselineTag::kSmall: return "small";
    case BaselineTag::kWide: return "wide";
    case BaselineTag::kMulti: return "multi";
  }
  return "unknown";
}

BaselineTag baseline_tag_from_name(const std::string& name) {
  if (name == "small") return BaselineTag::kSmall;
  if (name == "wide") return BaselineTag::kWide;
  if (name == "multi") return BaselineTag::kMulti;
  throw Error("unknown baseline tag '" + name + "' (expected small, wide or multi)");
}

OcclusionMask consistency_mask(const Tensor& d_left, const Tensor& d_right, float threshold, int scale) {
  d_right.require_shape(d_left.shape(), "consistency_mask d_right");
  if (scale < 0) throw Error("consistency_mask: negative scale");
  Tensor warped = kernels::warp_horizontal(d_right, d_left, WarpDir::kSampleLeftOf);
  const float to_full_res = static_cast<float>(1 << scale);
  OcclusionMask m{Tensor(d_left.shape())};
  for (std::int64_t i = 0; i < d_left.numel(); ++i) {
    const float diff = std::fabs(warped[i] - d_left[i]) * to_full_res;
    m.map[i] = diff > threshold ? 1.0f : 0.0f;
  }
  return m;
}

}  // namespace mbd
