#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbd/tape.hpp"
#include "mbd/tensor.hpp"

namespace mbd {

// Architecture of the shared-encoder / three-decoder disparity network.
//
// The encoder is four 3x3 stride-2 conv+ELU stages; each decoder walks back
// up with bilinear upsampling, concatenated encoder skips where one exists,
// and a 3x3 conv+ELU per level. A sigmoid head at each of the four finest
// levels emits disparity bounded to [0, d_max_frac * W_s], so the bound is
// architectural rather than a training outcome.
struct NetConfig {
  int height = 64;
  int width = 192;
  std::vector<int> enc_channels{16, 32, 64, 128};
  float d_max_frac = 0.3f;
  // When true, decoder 3 sees gradient-stopped encoder features, so losses on
  // its outputs move only decoder-3 weights.
  bool detach_encoder_for_decoder3 = true;

  // Throws Error on invalid settings (dims not divisible by 16, channel list
  // not of length 4, d_max_frac outside (0,1), ...).
  void validate() const;

  // Disparity cap at pyramid scale s (0 = full resolution).
  float d_max_at(int scale) const { return d_max_frac * static_cast<float>(width >> scale); }
};

// Named parameter tensors; std::map keeps enumeration order lexicographic and
// therefore deterministic.
using Params = std::map<std::string, Tensor>;
// Same names lifted onto a tape as differentiable leaves.
using ParamValues = std::map<std::string, Value>;

// Expected shape of every parameter under cfg. Checkpoint loading and
// init_params both derive from this single table.
std::map<std::string, std::vector<int>> param_shapes(const NetConfig& cfg);

// He-uniform fan-in init for conv weights (variance 2/fan_in), zero biases.
// Deterministic for a given seed.
Params init_params(const NetConfig& cfg, std::uint64_t seed);

std::int64_t param_count(const Params& params);

ParamValues lift_params(Tape& t, const Params& params);

// Four-scale disparity pyramid; level[s] has spatial dims H/2^s x W/2^s.
struct DisparityPyramid {
  std::array<Value, 4> level{};
};

// Decoder selection for forward(). Bit s set = run decoder s+1.
enum : unsigned {
  kRunDec1 = 1u,
  kRunDec2 = 2u,
  kRunDec3 = 4u,
  kRunAllDecoders = 7u,
};

struct NetworkOutput {
  std::optional<DisparityPyramid> pyr_s;          // decoder 1, small baseline
  std::optional<DisparityPyramid> pyr_l, pyr_r;   // decoder 2, wide pair
  std::optional<DisparityPyramid> pyr_m;          // decoder 3, multi-baseline
};

// Encoder features for img, coarsest last: stage i has dims H/2^(i+1).
std::vector<Value> encoder_forward(Tape& t, const ParamValues& params, Value img, const NetConfig& cfg);

// Runs the selected decoders on shared encoder features. Decoders that are
// not selected cost nothing. img must be NCHW with C=3 and cfg's dims.
NetworkOutput forward(Tape& t, const ParamValues& params, Value img, const NetConfig& cfg,
                      unsigned decoder_mask = kRunAllDecoders);

// Inference path: encoder + decoder 3 only. Bit-identical to the pyr_m a full
// forward produces, without paying for decoders 1-2.
DisparityPyramid infer(Tape& t, const ParamValues& params, Value img, const NetConfig& cfg);

}  // namespace mbd
