#include "mbd/trainer.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mbd/kernels.hpp"
#include "mbd/rng.hpp"

namespace mbd {

void TrainConfig::validate() const {
  if (epochs < 0) throw Error("epochs must be >= 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(lr > 0)) throw Error("lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw Error("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw Error("adam_eps must be positive");
  if (max_samples < 0) throw Error("max_samples must be >= 0");
  weights.validate();
}

OptState init_opt_state(const Params& params) {
  OptState opt;
  for (const auto& [name, p] : params) {
    opt.m.emplace(name, Tensor(p.shape()));
    opt.v.emplace(name, Tensor(p.shape()));
  }
  return opt;
}

void adam_step(Params& params, const std::map<std::string, Tensor>& grads, OptState& opt,
               const TrainConfig& cfg) {
  opt.step += 1;
  // Bias corrections depend only on the step index; precompute once.
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(opt.step)));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(opt.step)));
  for (auto& [name, p] : params) {
    const auto git = grads.find(name);
    if (git == grads.end()) throw Error("adam_step: no gradient entry for " + name);
    const Tensor& g = git->second;
    g.require_shape(p.shape(), name.c_str());
    if (!g.all_finite()) throw Error("non-finite gradient for " + name);
    Tensor& m = opt.m.at(name);
    Tensor& v = opt.v.at(name);
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const float gi = g[i];
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * gi * gi;
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

namespace {

unsigned decoder_mask_for(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSmallOnly: return kRunDec1;
    case TrainMode::kWideOnly: return kRunDec2;
    case TrainMode::kMulti: return kRunAllDecoders;
  }
  throw Error("unknown train mode");
}

Tensor stack_views(const std::vector<const ImageTriplet*>& batch, const Tensor ImageTriplet::*view,
                   int h, int w) {
  const int n = static_cast<int>(batch.size());
  Tensor out({n, 3, h, w});
  const std::int64_t sz = static_cast<std::int64_t>(3) * h * w;
  for (int i = 0; i < n; ++i) {
    const Tensor& src = batch[static_cast<std::size_t>(i)]->*view;
    src.require_shape({3, h, w}, "batch image");
    std::memcpy(out.data() + i * sz, src.data(), sizeof(float) * static_cast<std::size_t>(sz));
  }
  return out;
}

}  // namespace

LossBreakdown train_step(const std::vector<const ImageTriplet*>& batch, Params& params,
                         OptState& opt, const NetConfig& net, const TrainConfig& cfg) {
  net.validate();
  cfg.validate();
  if (batch.empty()) throw Error("train_step: empty batch");

  Tensor il = stack_views(batch, &ImageTriplet::img_l, net.height, net.width);
  Tensor ir1 = stack_views(batch, &ImageTriplet::img_r1, net.height, net.width);
  Tensor ir2 = stack_views(batch, &ImageTriplet::img_r2, net.height, net.width);

  Tape t;
  ParamValues pv = lift_params(t, params);
  const NetworkOutput out = forward(t, pv, t.constant(il), net, decoder_mask_for(cfg.mode));

  // The loss compares each scale against an area-downsampled image pyramid;
  // the pyramid is plain data, not part of the differentiated graph.
  std::array<ScaleInputs, 4> scales;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) {
      il = kernels::downsample2x_area(il);
      ir1 = kernels::downsample2x_area(ir1);
      ir2 = kernels::downsample2x_area(ir2);
    }
    ScaleInputs& in = scales[static_cast<std::size_t>(s)];
    in.il = t.constant(il);
    in.ir1 = t.constant(ir1);
    in.ir2 = t.constant(ir2);
    if (out.pyr_s) in.d_s = out.pyr_s->level[static_cast<std::size_t>(s)];
    if (out.pyr_l) in.d_l = out.pyr_l->level[static_cast<std::size_t>(s)];
    if (out.pyr_r) in.d_r = out.pyr_r->level[static_cast<std::size_t>(s)];
    if (out.pyr_m) in.d_m = out.pyr_m->level[static_cast<std::size_t>(s)];
    in.d_max = net.d_max_at(s);
  }

  const TotalLossResult res = total_loss(t, scales, cfg.weights, cfg.mode);
  if (!res.breakdown.all_finite()) {
    throw Error("non-finite loss term " + res.breakdown.first_non_finite() + " at optimizer step " +
                std::to_string(opt.step + 1));
  }
  t.backward(res.total);

  std::map<std::string, Tensor> grads;
  for (const auto& [name, v] : pv) grads.emplace(name, t.grad(v));
  adam_step(params, grads, opt, cfg);
  return res.breakdown;
}

namespace {

// Checkpoint blob: the net.*/train.* subset of the flat config-key registry,
// enough to rebuild the network and continue training.
std::string training_config_text(const NetConfig& net, const TrainConfig& cfg) {
  char buf[1024];
  std::string enc;
  for (std::size_t i = 0; i < net.enc_channels.size(); ++i) {
    enc += (i ? "," : "") + std::to_string(net.enc_channels[i]);
  }
  std::snprintf(
      buf, sizeof(buf),
      "net.height=%d\nnet.width=%d\nnet.enc_channels=%s\nnet.d_max_frac=%.9g\n"
      "net.detach_dec3=%s\n"
      "train.epochs=%d\ntrain.batch_size=%d\ntrain.lr=%.9g\ntrain.beta1=%.9g\n"
      "train.beta2=%.9g\ntrain.adam_eps=%.9g\ntrain.seed=%" PRIu64 "\ntrain.mode=%s\n"
      "train.max_samples=%d\ntrain.alpha=%.9g\ntrain.beta=%.9g\ntrain.lambda=%.9g\n"
      "train.r=%.9g\ntrain.occl_threshold=%.9g\ntrain.lda_norm=%s\n",
      net.height, net.width, enc.c_str(), static_cast<double>(net.d_max_frac),
      net.detach_encoder_for_decoder3 ? "true" : "false", cfg.epochs, cfg.batch_size,
      static_cast<double>(cfg.lr), static_cast<double>(cfg.beta1), static_cast<double>(cfg.beta2),
      static_cast<double>(cfg.adam_eps), cfg.seed, train_mode_name(cfg.mode), cfg.max_samples,
      static_cast<double>(cfg.weights.alpha), static_cast<double>(cfg.weights.beta),
      static_cast<double>(cfg.weights.lambda), static_cast<double>(cfg.weights.r),
      static_cast<double>(cfg.weights.occl_threshold),
      cfg.weights.lda_norm == LdaNorm::kN ? "n" : "mask_sum");
  return buf;
}

}  // namespace

Checkpoint make_training_checkpoint(const Params& params, const OptState& opt, int epochs_done,
                                    const std::string& config_text) {
  Checkpoint ck;
  ck.config_text = config_text;
  for (const auto& [name, p] : params) {
    ck.tensors.emplace(name, p);
    ck.tensors.emplace("adam.m." + name, opt.m.at(name));
    ck.tensors.emplace("adam.v." + name, opt.v.at(name));
  }
  ck.tensors.emplace("adam.step", Tensor({1}, {static_cast<float>(opt.step)}));
  ck.tensors.emplace("adam.epochs_done", Tensor({1}, {static_cast<float>(epochs_done)}));
  return ck;
}

void restore_training_state(const Checkpoint& ck, const NetConfig& net, Params& params,
                            OptState& opt, int& epochs_done) {
  params = extract_params(ck, net);
  opt = init_opt_state(params);
  for (auto& [name, m] : opt.m) {
    const auto it = ck.tensors.find("adam.m." + name);
    if (it == ck.tensors.end()) throw Error("checkpoint lacks optimizer state adam.m." + name);
    it->second.require_shape(m.shape(), name.c_str());
    m = it->second;
  }
  for (auto& [name, v] : opt.v) {
    const auto it = ck.tensors.find("adam.v." + name);
    if (it == ck.tensors.end()) throw Error("checkpoint lacks optimizer state adam.v." + name);
    it->second.require_shape(v.shape(), name.c_str());
    v = it->second;
  }
  const auto step_it = ck.tensors.find("adam.step");
  const auto ep_it = ck.tensors.find("adam.epochs_done");
  if (step_it == ck.tensors.end() || ep_it == ck.tensors.end()) {
    throw Error("checkpoint lacks adam.step / adam.epochs_done");
  }
  opt.step = static_cast<std::int64_t>(std::llround(step_it->second[0]));
  epochs_done = static_cast<int>(std::lround(ep_it->second[0]));
}

FitResult fit(const Dataset& data, const NetConfig& net, const TrainConfig& cfg,
              const std::string& out_dir, const std::string& resume_from) {
  net.validate();
  cfg.validate();
  int n = static_cast<int>(data.samples.size());
  if (cfg.max_samples > 0) n = std::min(n, cfg.max_samples);
  if (cfg.epochs > 0 && n < cfg.batch_size) {
    throw Error("dataset has " + std::to_string(n) + " samples, need at least one batch of " +
                std::to_string(cfg.batch_size));
  }

  FitResult res;
  int done = 0;
  if (resume_from.empty()) {
    res.params = init_params(net, cfg.seed);
    res.opt = init_opt_state(res.params);
  } else {
    const Checkpoint ck = load_checkpoint(resume_from);
    restore_training_state(ck, net, res.params, res.opt, done);
  }

  const std::string config_text = training_config_text(net, cfg);
  res.log_csv =
      "step,epoch,photo_small,smooth_small,photo_wide,smooth_wide,"
      "dec3_photo,dec3_assign,dec3_smooth,total,wall_ms\n";

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create " + out_dir + ": " + ec.message());
  }

  const int steps_per_epoch = n / cfg.batch_size;
  for (int epoch = done + 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(cfg.seed, kStreamShuffle, static_cast<std::uint64_t>(epoch));
    const std::vector<int> order = shuffled_indices(n, rng);
    for (int b = 0; b < steps_per_epoch; ++b) {
      std::vector<const ImageTriplet*> batch;
      batch.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int k = 0; k < cfg.batch_size; ++k) {
        const int idx = order[static_cast<std::size_t>(b * cfg.batch_size + k)];
        batch.push_back(&data.samples[static_cast<std::size_t>(idx)].data);
      }
      const auto t0 = std::chrono::steady_clock::now();
      const LossBreakdown bd = train_step(batch, res.params, res.opt, net, cfg);
      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      char line[512];
      std::snprintf(line, sizeof(line),
                    "%lld,%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.1f\n",
                    static_cast<long long>(res.opt.step), epoch, bd.photo_small_sum(),
                    bd.smooth_small_sum(), bd.photo_wide_sum(), bd.smooth_wide_sum(),
                    bd.dec3_photo_sum(), bd.dec3_assign_sum(), bd.dec3_smooth_sum(), bd.total,
                    wall_ms);
      res.log_csv += line;
    }
    if (!out_dir.empty()) {
      const std::string path =
          (std::filesystem::path(out_dir) / ("ckpt_epoch_" + std::to_string(epoch) + ".mbd"))
              .string();
      save_checkpoint(make_training_checkpoint(res.params, res.opt, epoch, config_text), path);
      res.checkpoint_paths.push_back(path);
    }
    res.epochs_done = epoch;
  }

  if (!out_dir.empty()) {
    const std::string log_path =
        (std::filesystem::path(out_dir) / "training_log.csv").string();
    std::ofstream log(log_path, std::ios::binary);
    log << res.log_csv;
    if (!log) throw Error("failed writing " + log_path);
  }
  return res;
}

}  // namespace mbd
