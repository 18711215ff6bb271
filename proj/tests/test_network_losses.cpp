#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mbd/checkpoint.hpp"
#include "mbd/losses.hpp"
#include "mbd/network.hpp"
#include "mbd/rng.hpp"
#include "mbd/warp_occlusion.hpp"

using namespace mbd;

namespace {

bool bits_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.numel())) == 0;
}

Tensor constant_image(std::vector<int> shape, float v) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = v;
  return t;
}

Tensor random_image(std::vector<int> shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed, kStreamNoise, 0);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(0.05f, 0.95f);
  return t;
}

NetConfig toy_net() {
  NetConfig cfg;
  cfg.height = 16;
  cfg.width = 32;
  cfg.enc_channels = {4, 6, 8, 10};
  return cfg;
}

}  // namespace

TEST_CASE("ssim of two flat constants matches the closed form") {
  Tape t;
  const Value a = t.constant(constant_image({1, 1, 6, 6}, 0.2f));
  const Value b = t.constant(constant_image({1, 1, 6, 6}, 0.8f));
  const Tensor s = t.val(ssim_map(t, a, b));
  // zero variances: ((2*0.16 + C1) * C2) / ((0.04 + 0.64 + C1) * C2)
  const double c1 = 1e-4;
  const double expect = (2 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  for (std::int64_t i = 0; i < s.numel(); ++i) CHECK(s[i] == doctest::Approx(expect).epsilon(1e-3));
  CHECK(expect == doctest::Approx(0.4711).epsilon(1e-3));
}

TEST_CASE("identical images give identical ssim and zero photometric loss") {
  Tape t;
  const Tensor img = random_image({1, 3, 8, 10}, 3);
  const Value a = t.constant(img);
  const Tensor s = t.val(ssim_map(t, a, a));
  for (std::int64_t i = 0; i < s.numel(); ++i) CHECK(s[i] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(t.val(photometric_loss(t, a, a, 0.85f)).item() == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("photometric loss with an all-zero pixel weight is zero with zero gradient") {
  Tape t;
  const Value a = t.constant(random_image({1, 3, 8, 10}, 4));
  const Value b = t.leaf(random_image({1, 3, 8, 10}, 5));
  const Value w = t.constant(Tensor({1, 1, 8, 10}));
  const Value loss = photometric_loss(t, a, b, 0.85f, w);
  CHECK(t.val(loss).item() == 0.0f);
  t.backward(loss);
  const Tensor g = t.grad(b);
  for (std::int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0f);
}

TEST_CASE("smoothness loss hand case: unit column ramp on a constant image") {
  Tape t;
  // d(x, y) = x on a 4x4 grid; constant image keeps all edge weights at e^0.
  Tensor d({1, 1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) d[static_cast<std::int64_t>(y) * 4 + x] = static_cast<float>(x);
  const Value loss = smoothness_loss(t, t.constant(d), t.constant(constant_image({1, 3, 4, 4}, 0.5f)));
  // |dx d| = 1 on all 12 x-pairs, |dy d| = 0 on all 12 y-pairs; means over
  // the difference grids: 1 + 0.
  CHECK(t.val(loss).item() == doctest::Approx(1.0).epsilon(1e-6));

  Tape t2;
  const Value flat = smoothness_loss(t2, t2.constant(constant_image({1, 1, 4, 4}, 2.5f)),
                                     t2.constant(random_image({1, 3, 4, 4}, 6)));
  CHECK(t2.val(flat).item() == 0.0f);
}

TEST_CASE("disparity assignment loss vanishes on perfect assignment and empty mask") {
  const float r = 5.4f, d_max = 9.6f;
  Tape t;
  Tensor ds({1, 1, 6, 8});
  Rng rng(11, kStreamNoise, 1);
  for (std::int64_t i = 0; i < ds.numel(); ++i) ds[i] = rng.uniform(0.1f, 1.5f);
  Tensor dm(ds.shape());
  for (std::int64_t i = 0; i < ds.numel(); ++i) dm[i] = r * ds[i];
  const Value ones = t.constant(constant_image({1, 1, 6, 8}, 1.0f));
  const Value perfect =
      disparity_assignment_loss(t, t.constant(dm), t.constant(ds), ones, r, 0.85f, d_max, LdaNorm::kN);
  CHECK(t.val(perfect).item() == doctest::Approx(0.0).epsilon(1e-6));

  Tape t2;
  const Value dm2 = t2.leaf(random_image({1, 1, 6, 8}, 7));
  const Value zeros = t2.constant(Tensor({1, 1, 6, 8}));
  const Value none = disparity_assignment_loss(t2, dm2, t2.constant(ds), zeros, r, 0.85f, d_max, LdaNorm::kN);
  CHECK(t2.val(none).item() == 0.0f);
  t2.backward(none);
  const Tensor g = t2.grad(dm2);
  for (std::int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0f);
}

TEST_CASE("consistency mask hand cases") {
  const Tensor c = constant_image({1, 1, 4, 6}, 2.0f);
  const Tensor zero = consistency_mask(c, c, 1.0f, 0);
  for (std::int64_t i = 0; i < zero.numel(); ++i) CHECK(zero[i] == 0.0f);

  const Tensor dl = constant_image({1, 1, 4, 6}, 3.0f);
  const Tensor dr = constant_image({1, 1, 4, 6}, 0.0f);
  const Tensor one = consistency_mask(dl, dr, 1.0f, 0);
  for (std::int64_t i = 0; i < one.numel(); ++i) CHECK(one[i] == 1.0f);

  // at scale s the threshold shrinks by 2^s: |1.8 - 2.4| = 0.6 against
  // full-res threshold 1.0 -> consistent at scale 0, occluded at scale 2.
  const Tensor a = constant_image({1, 1, 4, 6}, 1.8f);
  const Tensor b = constant_image({1, 1, 4, 6}, 2.4f);
  CHECK(consistency_mask(a, b, 1.0f, 0)[0] == 0.0f);
  CHECK(consistency_mask(a, b, 1.0f, 2)[0] == 1.0f);
}

TEST_CASE("network output shapes, ranges, and channel split") {
  const NetConfig cfg = toy_net();
  const Params params = init_params(cfg, 3);
  Tape t;
  const ParamValues pv = lift_params(t, params);
  const NetworkOutput out =
      forward(t, pv, t.constant(random_image({2, 3, cfg.height, cfg.width}, 8)), cfg, kRunAllDecoders);
  REQUIRE(out.pyr_s);
  REQUIRE(out.pyr_l);
  REQUIRE(out.pyr_r);
  REQUIRE(out.pyr_m);
  for (int s = 0; s < 4; ++s) {
    const Tensor& ds = t.val(out.pyr_s->level[static_cast<std::size_t>(s)]);
    CHECK(ds.shape() == std::vector<int>{2, 1, cfg.height >> s, cfg.width >> s});
    const float cap = cfg.d_max_at(s);
    CHECK(ds.min() >= 0.0f);
    CHECK(ds.max() <= cap);
    CHECK(t.val(out.pyr_m->level[static_cast<std::size_t>(s)]).max() <= cap);
  }
}

TEST_CASE("encoder feature shapes at the documented default size") {
  NetConfig cfg;  // 64x192, enc 16/32/64/128
  const Params params = init_params(cfg, 1);
  Tape t;
  const ParamValues pv = lift_params(t, params);
  const std::vector<Value> feats =
      encoder_forward(t, pv, t.constant(random_image({1, 3, 64, 192}, 2)), cfg);
  REQUIRE(feats.size() == 4);
  CHECK(t.val(feats[0]).shape() == std::vector<int>{1, 16, 32, 96});
  CHECK(t.val(feats[1]).shape() == std::vector<int>{1, 32, 16, 48});
  CHECK(t.val(feats[2]).shape() == std::vector<int>{1, 64, 8, 24});
  CHECK(t.val(feats[3]).shape() == std::vector<int>{1, 128, 4, 12});
}

TEST_CASE("init_params is seed-deterministic with zero biases and He-like spread") {
  const NetConfig cfg = toy_net();
  const Params a = init_params(cfg, 42);
  const Params b = init_params(cfg, 42);
  REQUIRE(a.size() == b.size());
  for (const auto& [name, t] : a) CHECK(bits_equal(t, b.at(name)));

  const Params c = init_params(cfg, 43);
  bool any_diff = false;
  for (const auto& [name, t] : a) any_diff = any_diff || !bits_equal(t, c.at(name));
  CHECK(any_diff);

  // biases all zero; conv weight variance tracks 2/fan_in
  double worst_ratio = 1.0;
  for (const auto& [name, t] : a) {
    if (name.size() >= 2 && name.substr(name.size() - 2) == ".b") {
      for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0f);
    } else if (t.numel() >= 10000) {
      const auto& s = t.shape();
      const double fan_in = static_cast<double>(s[1]) * s[2] * s[3];
      double sum = 0, sum2 = 0;
      for (std::int64_t i = 0; i < t.numel(); ++i) {
        sum += t[i];
        sum2 += static_cast<double>(t[i]) * t[i];
      }
      const double var = sum2 / static_cast<double>(t.numel());
      const double ratio = var / (2.0 / fan_in);
      worst_ratio = std::max(worst_ratio, std::max(ratio, 1.0 / ratio));
      (void)sum;
    }
  }
  CHECK(worst_ratio < 1.2);
}

TEST_CASE("infer equals the multi decoder of a full forward bit-exactly") {
  const NetConfig cfg = toy_net();
  const Params params = init_params(cfg, 9);
  const Tensor img = random_image({1, 3, cfg.height, cfg.width}, 10);

  Tape t1;
  const NetworkOutput full = forward(t1, lift_params(t1, params), t1.constant(img), cfg, kRunAllDecoders);
  Tape t2;
  const DisparityPyramid lone = infer(t2, lift_params(t2, params), t2.constant(img), cfg);
  for (int s = 0; s < 4; ++s) {
    CHECK(bits_equal(t1.val(full.pyr_m->level[static_cast<std::size_t>(s)]),
                     t2.val(lone.level[static_cast<std::size_t>(s)])));
  }
  CHECK(t2.size() < t1.size());  // decoder 1/2 nodes are absent
}

TEST_CASE("total_loss runs only the active mode's terms") {
  const NetConfig cfg = toy_net();
  const Params params = init_params(cfg, 4);
  const Tensor il = random_image({1, 3, cfg.height, cfg.width}, 21);
  const Tensor ir1 = random_image({1, 3, cfg.height, cfg.width}, 22);
  const Tensor ir2 = random_image({1, 3, cfg.height, cfg.width}, 23);

  const auto breakdown_for = [&](TrainMode mode) {
    Tape t;
    const ParamValues pv = lift_params(t, params);
    unsigned mask = mode == TrainMode::kMulti
                        ? kRunAllDecoders
                        : (mode == TrainMode::kSmallOnly ? kRunDec1 : kRunDec2);
    const NetworkOutput out = forward(t, pv, t.constant(il), cfg, mask);
    std::array<ScaleInputs, 4> scales;
    Tensor l = il, r1 = ir1, r2 = ir2;
    for (int s = 0; s < 4; ++s) {
      if (s > 0) {
        l = kernels::downsample2x_area(l);
        r1 = kernels::downsample2x_area(r1);
        r2 = kernels::downsample2x_area(r2);
      }
      auto& in = scales[static_cast<std::size_t>(s)];
      in.il = t.constant(l);
      in.ir1 = t.constant(r1);
      in.ir2 = t.constant(r2);
      if (out.pyr_s) in.d_s = out.pyr_s->level[static_cast<std::size_t>(s)];
      if (out.pyr_l) in.d_l = out.pyr_l->level[static_cast<std::size_t>(s)];
      if (out.pyr_r) in.d_r = out.pyr_r->level[static_cast<std::size_t>(s)];
      if (out.pyr_m) in.d_m = out.pyr_m->level[static_cast<std::size_t>(s)];
      in.d_max = cfg.d_max_at(s);
    }
    LossWeights w;
    return total_loss(t, scales, w, mode).breakdown;
  };

  const LossBreakdown small = breakdown_for(TrainMode::kSmallOnly);
  CHECK(small.photo_small_sum() > 0.0);
  CHECK(small.photo_wide_sum() == 0.0);
  CHECK(small.dec3_photo_sum() == 0.0);

  const LossBreakdown wide = breakdown_for(TrainMode::kWideOnly);
  CHECK(wide.photo_small_sum() == 0.0);
  CHECK(wide.photo_wide_sum() > 0.0);
  CHECK(wide.dec3_assign_sum() == 0.0);

  const LossBreakdown multi = breakdown_for(TrainMode::kMulti);
  CHECK(multi.photo_small_sum() > 0.0);
  CHECK(multi.photo_wide_sum() > 0.0);
  CHECK(multi.dec3_photo_sum() + multi.dec3_assign_sum() + multi.dec3_smooth_sum() > 0.0);
  CHECK(multi.total == doctest::Approx(multi.photo_small_sum() + multi.smooth_small_sum() +
                                       multi.photo_wide_sum() + multi.smooth_wide_sum() +
                                       multi.dec3_photo_sum() + multi.dec3_assign_sum() +
                                       multi.dec3_smooth_sum())
                           .epsilon(1e-9));
}

TEST_CASE("checkpoint round trip is byte-identical and validates shapes") {
  const NetConfig cfg = toy_net();
  const Params params = init_params(cfg, 17);
  Checkpoint ck;
  ck.config_text = "net.height=16\nnet.width=32\n";
  for (const auto& [name, t] : params) ck.tensors.emplace(name, t);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mbd_ckpt_test";
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.mbd").string();
  const std::string p2 = (dir / "b.mbd").string();
  save_checkpoint(ck, p1);
  const Checkpoint back = load_checkpoint(p1);
  CHECK(back.config_text == ck.config_text);
  save_checkpoint(back, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(!b1.empty());

  const Params restored = extract_params(back, cfg);
  for (const auto& [name, t] : params) CHECK(bits_equal(t, restored.at(name)));

  // corrupt magic
  std::string corrupt = b1;
  corrupt[0] = 'X';
  const std::string p3 = (dir / "c.mbd").string();
  std::ofstream(p3, std::ios::binary) << corrupt;
  CHECK_THROWS_WITH_AS(load_checkpoint(p3), doctest::Contains("bad magic"), Error);

  // loading into a mismatched config names the offending tensor
  NetConfig other = cfg;
  other.enc_channels = {6, 6, 8, 10};
  CHECK_THROWS_AS(extract_params(back, other), Error);
}
