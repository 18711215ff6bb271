#pragma once

#include <array>
#include <optional>
#include <string>

#include "mbd/tape.hpp"
#include "mbd/warp_occlusion.hpp"

namespace mbd {

// Which decoders train. multi runs all three heads; the ablations each run
// a single baseline's decoder.
enum class TrainMode { kMulti, kSmallOnly, kWideOnly };

const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

// Normaliser for the disparity assignment term: divide the masked sum by the
// full pixel count (kN) or by the number of masked pixels (kMaskSum).
enum class LdaNorm { kN, kMaskSum };

struct LossWeights {
  float alpha = 0.85f;          // SSIM/L1 mix in the photometric term
  float beta = 0.85f;           // SSIM/L1 mix in the disparity assignment term
  float lambda = 0.1f;          // smoothness weight at full resolution; scale s uses lambda / 2^s
  float r = 5.4f;               // wide / small baseline ratio
  float occl_threshold = 1.0f;  // LR consistency threshold in full-res pixels
  LdaNorm lda_norm = LdaNorm::kN;
  void validate() const;  // throws Error on out-of-range values
};

// Per-channel SSIM over a 3x3 box window, clipped to [-1, 1].
// C1 = 0.01^2, C2 = 0.03^2 (images in [0,1]).
Value ssim_map(Tape& t, Value a, Value b);

// mean over pixels of  alpha * (1 - SSIM)/2 + (1 - alpha) * |img - recon|,
// both distances averaged over channels first. `pixel_weight` [N,1,H,W], if
// given, scales each pixel's contribution inside the sum; the normaliser
// stays the full pixel count.
Value photometric_loss(Tape& t, Value img, Value recon, float alpha, std::optional<Value> pixel_weight = {});

// Edge-aware smoothness with forward differences (last column / row of the
// difference grid excluded by construction):
//   mean(|dx d| * exp(-|dx I|)) + mean(|dy d| * exp(-|dy I|))
// Image gradients are channel-averaged before the exponential.
Value smoothness_loss(Tape& t, Value disp, Value img);

// Occlusion-driven supervision of the multi decoder by the small-baseline
// decoder: a photometric-shaped distance (beta-weighted SSIM + L1) between
// d_m and r * d_s, restricted to masked pixels, with both maps divided by
// d_max so the SSIM constants keep their meaning. Pass d_s through
// stop_gradient() for one-way supervision; this function does not stop it.
Value disparity_assignment_loss(Tape& t, Value d_m, Value d_s, Value occl_mask, float r, float beta, float d_max,
                                LdaNorm norm);

// Inputs for one pyramid scale. Invalid Values mark decoders that are not
// running under the current mode. Images are expected as constants.
struct ScaleInputs {
  Value il, ir1, ir2;  // scene views at this scale
  Value d_s;           // decoder 1: small baseline, left view
  Value d_l, d_r;      // decoder 2: wide baseline, left / right view
  Value d_m;           // decoder 3: multi, left view
  float d_max = 0.0f;  // disparity head range at this scale (0.3 * W_s by default)
};

// Weighted per-term contributions, as added into the total. Indexed by
// pyramid scale (0 = full resolution).
struct LossBreakdown {
  struct ScaleTerms {
    double photo_small = 0, smooth_small = 0;
    double photo_wide_l = 0, photo_wide_r = 0, smooth_wide = 0;
    double dec3_photo = 0, dec3_assign = 0, dec3_smooth = 0;
  };
  std::array<ScaleTerms, 4> scales{};
  double total = 0;

  double photo_small_sum() const;
  double smooth_small_sum() const;
  double photo_wide_sum() const;
  double smooth_wide_sum() const;
  double dec3_photo_sum() const;
  double dec3_assign_sum() const;
  double dec3_smooth_sum() const;
  bool all_finite() const;
  // Name of the first non-finite term, e.g. "dec3_assign@s2"; empty if none.
  std::string first_non_finite() const;
};

struct TotalLossResult {
  Value total;
  LossBreakdown breakdown;
};

// Assembles the training objective over all four scales for the given mode.
// For multi mode the per-scale occlusion masks are derived from the current
// d_l / d_r values via consistency_mask() and enter the graph as constants;
// d_s is gradient-stopped inside the assignment term.
TotalLossResult total_loss(Tape& t, const std::array<ScaleInputs, 4>& scales, const LossWeights& w, TrainMode mode);

}  // namespace mbd
