#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mbd/checkpoint.hpp"
#include "mbd/dataset.hpp"
#include "mbd/losses.hpp"
#include "mbd/network.hpp"

namespace mbd {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 4;
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kMulti;
  LossWeights weights;
  // 0 = use the whole dataset; otherwise truncate to the first N samples.
  int max_samples = 0;

  void validate() const;  // throws Error
};

// Adam moments, keyed like Params. step counts optimizer updates and drives
// bias correction, so it must survive checkpointing.
struct OptState {
  std::map<std::string, Tensor> m, v;
  std::int64_t step = 0;
};

OptState init_opt_state(const Params& params);

// Standard bias-corrected Adam, f32 arithmetic, parameters updated in
// lexicographic name order. Throws on a non-finite gradient, naming the
// parameter. Zero gradients leave parameters bit-unchanged.
void adam_step(Params& params, const std::map<std::string, Tensor>& grads, OptState& opt,
               const TrainConfig& cfg);

// One optimizer step on a batch: single taped forward + loss over all four
// scales, backward, Adam update. Throws on a non-finite loss naming the term.
LossBreakdown train_step(const std::vector<const ImageTriplet*>& batch, Params& params,
                         OptState& opt, const NetConfig& net, const TrainConfig& cfg);

struct FitResult {
  Params params;
  OptState opt;
  int epochs_done = 0;
  std::string log_csv;                  // step,epoch,<per-term>,total,wall_ms
  std::vector<std::string> checkpoint_paths;
};

// Full training loop. Deterministic for a (seed, config) pair: per-epoch
// shuffles come from Rng(seed, kStreamShuffle, epoch), the last partial
// batch is dropped, and a checkpoint lands in out_dir after every epoch as
// ckpt_epoch_{E}.mbd (E counts from 1). Empty out_dir skips all file IO.
// resume_from restarts bit-exactly from a checkpoint written by this loop.
FitResult fit(const Dataset& data, const NetConfig& net, const TrainConfig& cfg,
              const std::string& out_dir, const std::string& resume_from = "");

// Checkpoint payload helpers: parameters plus optimizer state under the
// "adam." prefix ("adam.m.<name>", "adam.v.<name>", "adam.step",
// "adam.epochs_done").
Checkpoint make_training_checkpoint(const Params& params, const OptState& opt, int epochs_done,
                                    const std::string& config_text);
void restore_training_state(const Checkpoint& ck, const NetConfig& net, Params& params,
                            OptState& opt, int& epochs_done);

}  // namespace mbd
