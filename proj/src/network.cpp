#include "mbd/network.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mbd/rng.hpp"

namespace mbd {

namespace {

// Stable name hash so each tensor gets its own init stream regardless of
// std::hash implementation details.
std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Value param_at(const ParamValues& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw Error("missing parameter: " + name);
  return it->second;
}

Value conv_elu(Tape& t, const ParamValues& p, const std::string& layer, Value x, int stride) {
  return t.elu(t.conv2d(x, param_at(p, layer + ".w"), param_at(p, layer + ".b"), stride, 1));
}

// Per-level decoder conv output channels, indexed by scale s (0 = full res).
std::array<int, 4> decoder_channels(const NetConfig& cfg) {
  return {cfg.enc_channels[0], cfg.enc_channels[0], cfg.enc_channels[1], cfg.enc_channels[2]};
}

DisparityPyramid run_decoder(Tape& t, const ParamValues& p, const std::vector<Value>& feats, int dec_index,
                             bool detach, const NetConfig& cfg) {
  std::vector<Value> f = feats;
  if (detach) {
    for (Value& v : f) v = t.stop_gradient(v);
  }
  const std::string base = "dec" + std::to_string(dec_index);
  DisparityPyramid pyr;
  Value x = f[3];
  for (int s = 3; s >= 0; --s) {
    x = t.upsample2x(x);
    if (s >= 1) x = t.concat_channels({x, f[s - 1]});
    x = conv_elu(t, p, base + ".lvl" + std::to_string(s), x, 1);
    const std::string head = base + ".head" + std::to_string(s);
    Value raw = t.conv2d(x, param_at(p, head + ".w"), param_at(p, head + ".b"), 1, 1);
    pyr.level[s] = t.affine(t.sigmoid(raw), cfg.d_max_at(s), 0.0f);
  }
  return pyr;
}

void check_input(const Tensor& img, const NetConfig& cfg) {
  if (img.rank() != 4 || img.dim(1) != 3 || img.dim(2) != cfg.height || img.dim(3) != cfg.width) {
    throw ShapeError("network input must be Nx3x" + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                     ", got " + shape_str(img.shape()));
  }
}

}  // namespace

void NetConfig::validate() const {
  if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0) {
    throw Error("input dims must be positive multiples of 16 (four stride-2 stages), got " + std::to_string(height) +
                "x" + std::to_string(width));
  }
  if (enc_channels.size() != 4) {
    throw Error("enc_channels must list exactly 4 stages, got " + std::to_string(enc_channels.size()));
  }
  for (int c : enc_channels) {
    if (c <= 0) throw Error("enc_channels must be positive");
  }
  if (!(d_max_frac > 0.0f && d_max_frac < 1.0f)) {
    throw Error("d_max_frac must lie in (0, 1), got " + std::to_string(d_max_frac));
  }
}

std::map<std::string, std::vector<int>> param_shapes(const NetConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::vector<int>> shapes;
  const auto& ec = cfg.enc_channels;
  int in_c = 3;
  for (int i = 0; i < 4; ++i) {
    const std::string base = "enc" + std::to_string(i + 1);
    shapes[base + ".w"] = {ec[i], in_c, 3, 3};
    shapes[base + ".b"] = {ec[i]};
    in_c = ec[i];
  }
  const std::array<int, 4> dc = decoder_channels(cfg);
  for (int d = 1; d <= 3; ++d) {
    const std::string base = "dec" + std::to_string(d);
    const int n_out = d == 2 ? 2 : 1;
    for (int s = 3; s >= 0; --s) {
      // Upsampled channels from the level above, plus the encoder skip where
      // one exists (full resolution has none).
      const int up_c = s == 3 ? ec[3] : dc[s + 1];
      const int in_ch = s >= 1 ? up_c + ec[s - 1] : up_c;
      shapes[base + ".lvl" + std::to_string(s) + ".w"] = {dc[s], in_ch, 3, 3};
      shapes[base + ".lvl" + std::to_string(s) + ".b"] = {dc[s]};
      shapes[base + ".head" + std::to_string(s) + ".w"] = {n_out, dc[s], 3, 3};
      shapes[base + ".head" + std::to_string(s) + ".b"] = {n_out};
    }
  }
  return shapes;
}

Params init_params(const NetConfig& cfg, std::uint64_t seed) {
  Params params;
  for (const auto& [name, shape] : param_shapes(cfg)) {
    Tensor t(shape);
    if (shape.size() == 1) {
      // Biases start at zero.
      params.emplace(name, std::move(t));
      continue;
    }
    const std::int64_t fan_in = static_cast<std::int64_t>(shape[1]) * shape[2] * shape[3];
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    Rng rng(seed, kStreamInit, name_hash(name));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    params.emplace(name, std::move(t));
  }
  return params;
}

std::int64_t param_count(const Params& params) {
  std::int64_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

ParamValues lift_params(Tape& t, const Params& params) {
  ParamValues out;
  for (const auto& [name, tensor] : params) out.emplace(name, t.leaf(tensor));
  return out;
}

std::vector<Value> encoder_forward(Tape& t, const ParamValues& params, Value img, const NetConfig& cfg) {
  cfg.validate();
  check_input(t.val(img), cfg);
  std::vector<Value> stages;
  Value x = img;
  for (int i = 0; i < 4; ++i) {
    x = conv_elu(t, params, "enc" + std::to_string(i + 1), x, 2);
    stages.push_back(x);
  }
  return stages;
}

NetworkOutput forward(Tape& t, const ParamValues& params, Value img, const NetConfig& cfg, unsigned decoder_mask) {
  if ((decoder_mask & kRunAllDecoders) == 0) throw Error("forward: no decoder selected");
  std::vector<Value> feats = encoder_forward(t, params, img, cfg);
  NetworkOutput out;
  if (decoder_mask & kRunDec1) {
    out.pyr_s = run_decoder(t, params, feats, 1, false, cfg);
  }
  if (decoder_mask & kRunDec2) {
    DisparityPyramid both = run_decoder(t, params, feats, 2, false, cfg);
    DisparityPyramid l, r;
    for (int s = 0; s < 4; ++s) {
      l.level[s] = t.slice_channels(both.level[s], 0, 1);
      r.level[s] = t.slice_channels(both.level[s], 1, 2);
    }
    out.pyr_l = l;
    out.pyr_r = r;
  }
  if (decoder_mask & kRunDec3) {
    out.pyr_m = run_decoder(t, params, feats, 3, cfg.detach_encoder_for_decoder3, cfg);
  }
  return out;
}

DisparityPyramid infer(Tape& t, const ParamValues& params, Value img, const NetConfig& cfg) {
  return *forward(t, params, img, cfg, kRunDec3).pyr_m;
}

}  // namespace mbd
