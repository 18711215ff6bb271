#include "mbd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace mbd {

namespace {

constexpr float kTau = 6.28318530717958647692f;

float smoothstep(float t) { return t * t * (3.0f - 2.0f * t); }

// Smoothly interpolated lattice noise in [-1,1]; continuous in (x,y) so the
// right views can sample it at sub-pixel positions exactly.
float value_noise(std::uint64_t seed, float x, float y, float cell) {
  const float u = x / cell, v = y / cell;
  const float fu = std::floor(u), fv = std::floor(v);
  const auto i = static_cast<std::int64_t>(fu), j = static_cast<std::int64_t>(fv);
  const float tu = smoothstep(u - fu), tv = smoothstep(v - fv);
  auto corner = [&](std::int64_t a, std::int64_t b) {
    return hash_unit(hash_mix(seed, static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b))) * 2.0f - 1.0f;
  };
  const float c00 = corner(i, j), c10 = corner(i + 1, j);
  const float c01 = corner(i, j + 1), c11 = corner(i + 1, j + 1);
  const float top = c00 + (c10 - c00) * tu;
  const float bot = c01 + (c11 - c01) * tu;
  return top + (bot - top) * tv;
}

// Procedural surface color, defined on left-view coordinates. The wave terms
// keep every 9x9 window's RMS contrast above the matching floor; the noise
// octaves break periodicity so block matching has unambiguous minima.
float texture_value(TextureKind kind, std::uint64_t seed, float period, float x, float y, int c) {
  const auto cc = static_cast<std::uint64_t>(c);
  if (kind == TextureKind::kPeriodicX) {
    const float phase = hash_unit(hash_mix(seed, cc, 11)) * kTau;
    const float yphase = hash_unit(hash_mix(seed, cc, 13)) * kTau;
    // Reduce x modulo the period before the sin so the texture is *exactly*
    // periodic in float arithmetic (fmod is exact); coordinates one period
    // apart must yield bit-identical values or rounding crumbs would break
    // the matching ties this texture exists to create.
    const float xm = std::fmod(x, period);
    return 0.5f + 0.22f * std::sin(kTau * xm / period + phase) + 0.06f * std::sin(kTau * y / 12.0f + yphase);
  }
  const float phase = hash_unit(hash_mix(seed, cc, 17)) * kTau;
  const float phase3 = hash_unit(hash_mix(seed, cc, 23)) * kTau;
  const float phase4 = hash_unit(hash_mix(seed, cc, 29)) * kTau;
  float v = 0.5f;
  // Slow shading + two fast carriers + noise octaves. The carriers enforce
  // the local-contrast floor: their wave vectors are near-orthogonal, so the
  // difference phase sweeps >1.5 cycles across any 9x9 window, the cross term
  // self-averages, and in-window variance stays near (a_x^2 + a_y^2)/2 no
  // matter how the phases align. (Two carriers with nearby frequencies would
  // instead beat, and windows on a beat node line go nearly flat.) The
  // y-oriented carrier is almost invariant under horizontal warps, keeping
  // resampling blur small.
  v += 0.13f * std::sin(kTau * (x / 23.0f + 0.07f * y) + phase);
  v += 0.10f * std::sin(kTau * (x / 4.6f + 0.055f * y) + phase3);
  v += 0.16f * std::sin(kTau * (0.05f * x + y / 4.3f) + phase4);
  const float cells[3] = {24.0f, 9.0f, 3.5f};
  const float amps[3] = {0.09f, 0.07f, 0.05f};
  for (int o = 0; o < 3; ++o) {
    v += amps[o] * value_noise(hash_mix(seed, cc, static_cast<std::uint64_t>(o)), x, y, cells[o]);
  }
  return std::min(0.99f, std::max(0.01f, v));
}

// A renderable surface: the background plane or one layer, with its exact
// per-baseline disparities precomputed.
struct Surface {
  float z;
  float d_small;
  float d_wide;  // constructed as ratio * d_small so GT is r-consistent bit-exactly
  float x0, x1, y0, y1;
  bool bounded;
  std::uint64_t tex_seed;

  // Does the ray through left-view coordinate (xl, y) hit this surface?
  bool covers_left(float xl, float yl) const {
    return !bounded || (x0 <= xl && xl < x1 && y0 <= yl && yl < y1);
  }
};

}  // namespace

void CameraRig::validate() const {
  if (!(focal_px > 0)) throw Error("focal_px must be positive");
  if (!(baseline_small_m > 0) || !(baseline_wide_m > baseline_small_m)) {
    throw Error("baselines must satisfy 0 < small < wide");
  }
  if (height < 16 || width < 16) throw Error("rig image dims too small");
}

void SceneSpec::validate(const CameraRig& rig) const {
  rig.validate();
  if (!(z_background_m > 0)) throw Error("background depth must be positive");
  for (const SceneLayer& l : layers) {
    if (!(l.z_m > 0) || l.z_m >= z_background_m) {
      throw Error("layer depth must satisfy 0 < z < background (" + std::to_string(l.z_m) + " vs " +
                  std::to_string(z_background_m) + ")");
    }
    if (!(l.x0 < l.x1) || !(l.y0 < l.y1)) throw Error("layer rectangle is empty");
  }
  if (noise_sigma < 0) throw Error("noise_sigma must be >= 0");
  if (texture == TextureKind::kPeriodicX && period_px < 4) throw Error("period_px must be >= 4");
  if (!(max_disparity_px > 0)) throw Error("max_disparity_px must be positive");
}

ImageTriplet generate_scene(const CameraRig& rig, const SceneSpec& spec, std::uint64_t seed) {
  spec.validate(rig);
  const int h = rig.height, w = rig.width;
  const float r = rig.ratio();

  std::vector<Surface> surfs;
  surfs.reserve(spec.layers.size() + 1);
  auto add_surface = [&](float z, float x0, float x1, float y0, float y1, bool bounded, std::uint64_t tex_seed) {
    Surface s;
    s.z = z;
    s.d_small = rig.focal_px * rig.baseline_small_m / z;
    s.d_wide = r * s.d_small;
    if (s.d_wide > spec.max_disparity_px) {
      throw Error("wide disparity " + std::to_string(s.d_wide) + " exceeds the cap " +
                  std::to_string(spec.max_disparity_px) + "; move surfaces deeper (z=" + std::to_string(z) + ")");
    }
    s.x0 = x0;
    s.x1 = x1;
    s.y0 = y0;
    s.y1 = y1;
    s.bounded = bounded;
    s.tex_seed = tex_seed;
    surfs.push_back(s);
  };
  add_surface(spec.z_background_m, 0, 0, 0, 0, false, spec.background_seed);
  for (const SceneLayer& l : spec.layers) add_surface(l.z_m, l.x0, l.x1, l.y0, l.y1, true, l.texture_seed);

  // Nearest surface hit by the left-view ray through (xl, y).
  auto top_left = [&](float xl, float yl) -> const Surface& {
    const Surface* best = &surfs[0];
    for (const Surface& s : surfs) {
      if (s.covers_left(xl, yl) && s.z < best->z) best = &s;
    }
    return *best;
  };
  // Nearest surface hit from a right camera; xr is in that view's
  // coordinates and `wide` picks which baseline's disparity applies.
  auto top_right = [&](float xr, float yl, bool wide) -> const Surface& {
    const Surface* best = nullptr;
    for (const Surface& s : surfs) {
      if (s.covers_left(xr + (wide ? s.d_wide : s.d_small), yl) && (best == nullptr || s.z < best->z)) best = &s;
    }
    return *best;
  };

  ImageTriplet out{Tensor({3, h, w}), Tensor({3, h, w}), Tensor({3, h, w}),
                   Tensor({1, h, w}), Tensor({1, h, w}), Tensor({1, h, w}),
                   Tensor({1, h, w}), Tensor({1, h, w})};

  for (int y = 0; y < h; ++y) {
    const auto yf = static_cast<float>(y);
    for (int x = 0; x < w; ++x) {
      const auto xf = static_cast<float>(x);
      const std::int64_t px = static_cast<std::int64_t>(y) * w + x;

      const Surface& sl = top_left(xf, yf);
      out.gt_disp_small[px] = sl.d_small;
      out.gt_disp_wide[px] = sl.d_wide;
      // Recomputed from the stored disparity so depth * disparity closes
      // exactly in f32.
      out.gt_depth[px] = rig.focal_px * rig.baseline_wide_m / sl.d_wide;

      // The surface point sits at xr = x - d in the wide right view; it is
      // occluded when a nearer surface intercepts that ray. (Pixels whose
      // match merely falls off the left frame edge are not occlusions — a
      // background-only scene has none.)
      const float xr = xf - sl.d_wide;
      bool hidden = false;
      for (const Surface& s : surfs) {
        if (s.z < sl.z && s.covers_left(xr + s.d_wide, yf)) {
          hidden = true;
          break;
        }
      }
      out.gt_occl_wide[px] = hidden ? 1.0f : 0.0f;

      const Surface& sr1 = top_right(xf, yf, false);
      const Surface& sr2 = top_right(xf, yf, true);
      (*out.gt_disp_wide_right)[px] = sr2.d_wide;

      for (int c = 0; c < 3; ++c) {
        const std::int64_t pc = (static_cast<std::int64_t>(c) * h + y) * w + x;
        out.img_l[pc] = texture_value(spec.texture, sl.tex_seed, spec.period_px, xf, yf, c);
        out.img_r1[pc] = texture_value(spec.texture, sr1.tex_seed, spec.period_px, xf + sr1.d_small, yf, c);
        out.img_r2[pc] = texture_value(spec.texture, sr2.tex_seed, spec.period_px, xf + sr2.d_wide, yf, c);
      }
    }
  }

  if (spec.noise_sigma > 0) {
    Tensor* views[3] = {&out.img_l, &out.img_r1, &out.img_r2};
    for (int v = 0; v < 3; ++v) {
      Rng rng(seed, kStreamNoise, static_cast<std::uint64_t>(v));
      Tensor& img = *views[v];
      for (std::int64_t i = 0; i < img.numel(); ++i) {
        img[i] = std::min(1.0f, std::max(0.0f, img[i] + spec.noise_sigma * rng.normal()));
      }
    }
  }
  return out;
}

SceneSpec random_scene(const CameraRig& rig, std::uint64_t seed, int max_layers, TextureKind kind) {
  rig.validate();
  if (max_layers < 1) throw Error("max_layers must be >= 1");
  Rng rng(seed, kStreamScene);
  SceneSpec spec;
  spec.texture = kind;
  spec.z_background_m = rng.uniform(24.0f, 38.0f);
  spec.background_seed = rng.next_u64();

  const auto wf = static_cast<float>(rig.width);
  const auto hf = static_cast<float>(rig.height);
  // Worst-case occlusion band is the near plane's wide disparity; keep left
  // edges at least that far in so the bands stay inside the frame.
  const float z_near = 2.2f;
  const float margin = rig.focal_px * rig.baseline_wide_m / z_near + 2.0f;

  const int n = 1 + rng.next_int(max_layers);
  for (int i = 0; i < n; ++i) {
    SceneLayer l;
    // Layer depths sit on the near-integer-disparity grid. Two effects drive
    // this: the disparity gap to the background must dwarf the ~1px slivers
    // bilinear warping paints along layer edges (near range), and an integer
    // wide disparity makes the consistency warp sample exact columns on the
    // layer itself, so only the sub-pixel background side can blur. The
    // background depth stays continuous, keeping sub-pixel sampling in play.
    const float d_wide_px = std::round(rng.uniform(11.0f, 24.0f));
    l.z_m = rig.focal_px * rig.baseline_wide_m / d_wide_px;
    const float lw = std::min(rng.uniform(0.18f, 0.42f) * wf, wf - 8.0f - margin);
    const float lh = rng.uniform(0.35f, 0.75f) * hf;
    l.x0 = std::floor(rng.uniform(margin, wf - 6.0f - lw));
    l.x1 = l.x0 + std::floor(lw);
    l.y0 = std::floor(rng.uniform(0.0f, hf - lh));
    l.y1 = l.y0 + std::floor(lh);
    l.texture_seed = rng.next_u64();
    spec.layers.push_back(l);
  }
  return spec;
}

}  // namespace mbd
