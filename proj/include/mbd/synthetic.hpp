#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mbd/rng.hpp"
#include "mbd/tensor.hpp"

namespace mbd {

// Horizontally aligned trinocular rig: left camera plus two right cameras at
// a small and a wide baseline along +x. Disparity of a plane at depth Z is
// focal_px * baseline / Z.
struct CameraRig {
  float focal_px = 100.0f;
  float baseline_small_m = 0.1f;
  float baseline_wide_m = 0.54f;
  int height = 64;
  int width = 192;

  float ratio() const { return baseline_wide_m / baseline_small_m; }
  void validate() const;  // throws Error
};

enum class TextureKind {
  kNoise,      // band-limited value noise + a near-horizontal wave
  kPeriodicX,  // strictly periodic along x; deliberately alias-prone
};

// One fronto-parallel textured rectangle. Extents are pixel-center
// coordinates in the left view; a pixel (x,y) lies on the layer when
// x0 <= x < x1 and y0 <= y < y1.
struct SceneLayer {
  float z_m = 10.0f;
  float x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  std::uint64_t texture_seed = 0;
};

struct SceneSpec {
  float z_background_m = 30.0f;
  std::uint64_t background_seed = 1;
  std::vector<SceneLayer> layers;
  // Additive Gaussian pixel noise applied independently per view (0 = clean).
  float noise_sigma = 0.0f;
  // Generation fails if any wide disparity would exceed this; matches the
  // network head's output cap so training targets stay representable.
  float max_disparity_px = 57.6f;
  TextureKind texture = TextureKind::kNoise;
  float period_px = 8.0f;

  void validate(const CameraRig& rig) const;  // throws Error
};

// Left view plus the two right views and exact ground truth. Disparity maps
// are {1,H,W} in left-view pixels; gt_disp_wide is constructed as
// ratio * gt_disp_small so the r-consistency holds bit-exactly.
// gt_disp_wide_right is the wide disparity seen from the wide right camera
// (needed by the occlusion-consistency oracle); it is not part of the on-disk
// dataset, so loaded samples leave it empty.
struct ImageTriplet {
  Tensor img_l, img_r1, img_r2;                 // {3,H,W} in [0,1]
  Tensor gt_disp_small, gt_disp_wide;           // {1,H,W}
  std::optional<Tensor> gt_disp_wide_right;     // {1,H,W}
  Tensor gt_occl_wide;                          // {1,H,W}, 1 = not visible in I_R2
  Tensor gt_depth;                              // {1,H,W}, meters
};

// Renders the triplet. Layers are composited back-to-front; right views are
// rendered by evaluating each layer's procedural texture at the shifted
// coordinate, so sub-pixel disparities introduce no resampling error. The
// seed only drives the additive noise; textures come from per-layer seeds.
ImageTriplet generate_scene(const CameraRig& rig, const SceneSpec& spec, std::uint64_t seed);

// Random desk-scale scene: 1..max_layers rectangles at depths spread between
// near and far, sized and placed to keep occlusion bands inside the frame.
SceneSpec random_scene(const CameraRig& rig, std::uint64_t seed, int max_layers = 4,
                       TextureKind kind = TextureKind::kNoise);

}  // namespace mbd
