#pragma once

#include <map>
#include <string>

#include "msan/policy.hpp"
#include "msan/scoring.hpp"

namespace msan {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int episodes_per_video = 8;  // K
  int batch_size = 8;
  int epochs = 10;
  double lr = 2e-4;
  double beta = 0.5;
  double baseline_decay = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  double target_duration_s = 10.0;
  bool zero_reward_below_tmin = false;  // optional shaping; off by default
  double grad_clip_norm = 0.0;          // 0 disables clipping
};

struct EpochStats {
  int epoch = 0;
  double mean_reward = 0.0;
  double mean_imp = 0.0;
  double mean_coh = 0.0;
  double mean_len = 0.0;
  double mean_tau = 0.0;
  double grad_norm = 0.0;  // mean over batches
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  void write_csv(const std::string& path) const;
};

// Per-block Adam moments.
class AdamState {
 public:
  explicit AdamState(const PolicyParams& params);
  void apply(PolicyParams& params, const std::map<std::string, std::vector<double>>& grads,
             const TrainConfig& cfg);

 private:
  std::map<std::string, std::vector<double>> m_, v_;
  long step_ = 0;
};

struct BatchStats {
  double mean_reward = 0.0;
  double mean_imp = 0.0;
  double mean_coh = 0.0;
  double mean_len = 0.0;
  double mean_tau = 0.0;
  double grad_norm = 0.0;
};

// One REINFORCE step over a batch of videos: K rollouts each, EMA baseline
// per video, surrogate loss -(1/K) sum_k adv_k * sum_t logprob_t, gradients
// averaged over the batch, Adam update.
BatchStats reinforce_step(const std::vector<const Instance*>& batch, PolicyParams& params,
                          AdamState& adam, std::map<std::string, double>& baselines,
                          const TrainConfig& cfg, uint64_t step_key);

struct TrainResult {
  PolicyParams params;
  TrainLog log;
};

// Full training loop; writes per-epoch checkpoints into checkpoint_dir when
// it is non-empty ("" disables writes).
TrainResult train(const std::vector<Instance>& dataset, const PolicyConfig& policy_cfg,
                  const TrainConfig& cfg, const std::string& checkpoint_dir = "");

}  // namespace msan
