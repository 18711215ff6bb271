#include "mbd/stereo_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "mbd/parallel.hpp"

namespace mbd {

namespace {

void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw Error(std::string(what) + " must be {C,H,W}, got " + shape_str(t.shape()));
}

// Sum over channels of (a(x) − b(x − s))², written into out ({H,W}). b is
// sampled with clamped linear interpolation so fractional hypotheses work.
void squared_diff_shift(const Tensor& a, const Tensor& b, float s, float* out) {
  const int c_n = a.dim(0), h = a.dim(1), w = a.dim(2);
  std::fill(out, out + static_cast<std::int64_t>(h) * w, 0.0f);
  for (int c = 0; c < c_n; ++c) {
    const float* pa = a.data() + static_cast<std::int64_t>(c) * h * w;
    const float* pb = b.data() + static_cast<std::int64_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      const float* ra = pa + static_cast<std::int64_t>(y) * w;
      const float* rb = pb + static_cast<std::int64_t>(y) * w;
      float* ro = out + static_cast<std::int64_t>(y) * w;
      for (int x = 0; x < w; ++x) {
        const float xs = std::clamp(static_cast<float>(x) - s, 0.0f, static_cast<float>(w - 1));
        const int x0 = static_cast<int>(xs);
        const int x1 = std::min(x0 + 1, w - 1);
        const float f = xs - static_cast<float>(x0);
        const float v = rb[x0] + f * (rb[x1] - rb[x0]);
        const float d = ra[x] - v;
        ro[x] += d * d;
      }
    }
  }
}

// Separable box sum with the window clamped to the image (border windows
// cover fewer pixels). In place; tmp must hold H*W floats.
void box_sum(float* buf, int h, int w, int window, float* tmp) {
  const int r = window / 2;
  for (int y = 0; y < h; ++y) {
    const float* row = buf + static_cast<std::int64_t>(y) * w;
    float* dst = tmp + static_cast<std::int64_t>(y) * w;
    double run = 0.0;
    for (int x = 0; x < std::min(r, w); ++x) run += row[x];
    for (int x = 0; x < w; ++x) {
      if (x + r < w) run += row[x + r];
      dst[x] = static_cast<float>(run);
      if (x - r >= 0) run -= row[x - r];
    }
  }
  for (int x = 0; x < w; ++x) {
    double run = 0.0;
    for (int y = 0; y < std::min(r, h); ++y) run += tmp[static_cast<std::int64_t>(y) * w + x];
    for (int y = 0; y < h; ++y) {
      if (y + r < h) run += tmp[static_cast<std::int64_t>(y + r) * w + x];
      buf[static_cast<std::int64_t>(y) * w + x] = static_cast<float>(run);
      if (y - r >= 0) run -= tmp[static_cast<std::int64_t>(y - r) * w + x];
    }
  }
}

// Volume of windowed SSD costs for arbitrary per-hypothesis shifts, aligned
// to `ref`. axis carries the hypothesis values reported by wta.
CostVolume build_volume(const Tensor& ref, const Tensor& other, const std::vector<float>& shifts,
                        const std::vector<float>& axis, CostAxis kind, int window) {
  require_image(ref, "left image");
  require_image(other, "right image");
  if (!ref.same_shape(other)) {
    throw Error("stereo pair shapes differ: " + shape_str(ref.shape()) + " vs " +
                shape_str(other.shape()));
  }
  if (window < 1 || window % 2 == 0) throw Error("window must be odd and positive");
  if (shifts.empty() || shifts.size() != axis.size()) throw Error("empty hypothesis axis");

  const int h = ref.dim(1), w = ref.dim(2);
  const int d_n = static_cast<int>(shifts.size());
  CostVolume vol;
  vol.kind = kind;
  vol.axis = axis;
  vol.cost = Tensor({d_n, h, w});
  parallel_for(d_n, [&](int k) {
    float* slice = vol.cost.data() + static_cast<std::int64_t>(k) * h * w;
    std::vector<float> tmp(static_cast<std::size_t>(h) * w);
    squared_diff_shift(ref, other, shifts[k], slice);
    box_sum(slice, h, w, window, tmp.data());
  });
  return vol;
}

}  // namespace

void CostVolume::validate() const {
  if (cost.rank() != 3) throw Error("cost volume must be {D,H,W}");
  if (static_cast<int>(axis.size()) != cost.dim(0)) throw Error("axis length != cost planes");
  for (std::size_t i = 1; i < axis.size(); ++i) {
    if (!(axis[i] > axis[i - 1])) throw Error("cost axis must be strictly increasing");
  }
  if (!cost.all_finite() || cost.min() < 0.0f) throw Error("costs must be finite and >= 0");
}

CostVolume ssd_cost_volume(const Tensor& left, const Tensor& right, int d_range, int window) {
  if (d_range < 1 || d_range >= left.dim(left.rank() - 1)) {
    throw Error("d_range must be in [1, W)");
  }
  std::vector<float> shifts(static_cast<std::size_t>(d_range) + 1);
  for (int k = 0; k <= d_range; ++k) shifts[static_cast<std::size_t>(k)] = static_cast<float>(k);
  return build_volume(left, right, shifts, shifts, CostAxis::kDisparity, window);
}

std::vector<float> inv_depth_axis(int steps, float z_near, float z_far) {
  if (steps < 2) throw Error("inv_depth_steps must be >= 2");
  if (!(z_near > 0.0f) || !(z_far > z_near)) throw Error("need 0 < z_near < z_far");
  const float lo = 0.8f / z_far;
  const float hi = 1.2f / z_near;
  std::vector<float> zeta(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    zeta[static_cast<std::size_t>(k)] =
        lo + (hi - lo) * static_cast<float>(k) / static_cast<float>(steps - 1);
  }
  return zeta;
}

CostVolume ssd_cost_volume_inv_depth(const Tensor& left, const Tensor& right, float focal_px,
                                     float baseline_m, const std::vector<float>& zeta,
                                     int window) {
  std::vector<float> shifts(zeta.size());
  for (std::size_t k = 0; k < zeta.size(); ++k) shifts[k] = focal_px * baseline_m * zeta[k];
  return build_volume(left, right, shifts, zeta, CostAxis::kInverseDepth, window);
}

CostVolume sssd_cost_volume(const Tensor& left, const Tensor& right1, const Tensor& right2,
                            const CameraRig& rig, int inv_depth_steps, int window, float z_near,
                            float z_far) {
  rig.validate();
  const std::vector<float> zeta = inv_depth_axis(inv_depth_steps, z_near, z_far);
  CostVolume v1 = ssd_cost_volume_inv_depth(left, right1, rig.focal_px, rig.baseline_small_m,
                                            zeta, window);
  const CostVolume v2 = ssd_cost_volume_inv_depth(left, right2, rig.focal_px, rig.baseline_wide_m,
                                                  zeta, window);
  for (std::int64_t i = 0; i < v1.cost.numel(); ++i) v1.cost[i] += v2.cost[i];
  return v1;
}

Tensor wta(const CostVolume& vol) {
  vol.validate();
  const int d_n = vol.cost.dim(0), h = vol.cost.dim(1), w = vol.cost.dim(2);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  Tensor out({1, h, w});
  const float* cost = vol.cost.data();
  parallel_for(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t p = static_cast<std::int64_t>(y) * w + x;
      int best = 0;
      float c_min = cost[p], c_max = cost[p];
      for (int k = 1; k < d_n; ++k) {
        const float c = cost[k * plane + p];
        if (c < c_min) {
          c_min = c;
          best = k;
        }
        c_max = std::max(c_max, c);
      }
      // A flat curve means there was nothing to match (constant window);
      // the argmin would be the tie rule's artifact, so mark it invalid.
      if (c_max - c_min <= 1e-12f + 1e-9f * c_max) {
        out[p] = -1.0f;
        continue;
      }
      float value = vol.axis[static_cast<std::size_t>(best)];
      if (best > 0 && best < d_n - 1) {
        const float cm = cost[(best - 1) * plane + p];
        const float c0 = cost[best * plane + p];
        const float cp = cost[(best + 1) * plane + p];
        const float denom = cm - 2.0f * c0 + cp;
        if (denom > 0.0f) {
          const float delta = std::clamp((cm - cp) / (2.0f * denom), -0.5f, 0.5f);
          const float step = delta >= 0.0f
                                 ? vol.axis[static_cast<std::size_t>(best) + 1] - vol.axis[static_cast<std::size_t>(best)]
                                 : vol.axis[static_cast<std::size_t>(best)] - vol.axis[static_cast<std::size_t>(best) - 1];
          value += delta * step;
        }
      }
      out[p] = value;
    }
  });
  return out;
}

Tensor ssd_block_match(const Tensor& left, const Tensor& right, int d_range, int window) {
  const Tensor dl = wta(ssd_cost_volume(left, right, d_range, window));

  // Right-reference volume: hypothesis d matches right pixel x to left x+d,
  // which is a shift of −d in the shared helper's convention.
  std::vector<float> shifts(static_cast<std::size_t>(d_range) + 1);
  std::vector<float> axis(static_cast<std::size_t>(d_range) + 1);
  for (int k = 0; k <= d_range; ++k) {
    shifts[static_cast<std::size_t>(k)] = static_cast<float>(-k);
    axis[static_cast<std::size_t>(k)] = static_cast<float>(k);
  }
  const Tensor dr = wta(build_volume(right, left, shifts, axis, CostAxis::kDisparity, window));

  const int h = left.dim(1), w = left.dim(2);
  Tensor out({1, h, w});
  for (std::int64_t p = 0; p < out.numel(); ++p) {
    const int x = static_cast<int>(p % w);
    const float d = dl[p];
    out[p] = -1.0f;
    if (d < 0.0f) continue;
    const int xr = static_cast<int>(std::lround(static_cast<float>(x) - d));
    if (xr < 0 || xr >= w) continue;
    const float d_other = dr[p - x + xr];
    if (d_other < 0.0f || std::abs(d - d_other) > 1.0f) continue;
    out[p] = d;
  }
  return out;
}

Tensor sssd_multibaseline(const Tensor& left, const Tensor& right1, const Tensor& right2,
                          const CameraRig& rig, int inv_depth_steps, int window, float z_near,
                          float z_far) {
  const CostVolume vol =
      sssd_cost_volume(left, right1, right2, rig, inv_depth_steps, window, z_near, z_far);
  Tensor zeta = wta(vol);
  for (std::int64_t i = 0; i < zeta.numel(); ++i) {
    if (zeta[i] >= 0.0f) zeta[i] *= rig.focal_px * rig.baseline_wide_m;
  }
  return zeta;
}

OracleStats oracle_stats(const Tensor& pred, const Tensor& gt, const Tensor& occl) {
  pred.require_shape(gt.shape(), "oracle prediction");
  occl.require_shape(gt.shape(), "occlusion mask");
  OracleStats s;
  double abs_sum = 0.0;
  std::int64_t within = 0;
  for (std::int64_t i = 0; i < gt.numel(); ++i) {
    if (occl[i] > 0.5f) continue;
    ++s.n_total;
    if (pred[i] < 0.0f) continue;
    ++s.n_valid;
    const double err = std::abs(static_cast<double>(pred[i]) - gt[i]);
    abs_sum += err;
    if (err <= 1.0) ++within;
  }
  if (s.n_valid > 0) {
    s.mae = abs_sum / static_cast<double>(s.n_valid);
    // Misses and invalid pixels both count against coverage.
    s.frac_within_1px = static_cast<double>(within) / static_cast<double>(s.n_total);
  }
  return s;
}

}  // namespace mbd
