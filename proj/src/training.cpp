#include "msan/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

namespace msan {

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write train log '" + path + "'");
  out << "epoch,mean_reward,mean_imp,mean_coh,mean_len,mean_tau,grad_norm\n";
  char buf[256];
  for (const EpochStats& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", e.epoch,
                  e.mean_reward, e.mean_imp, e.mean_coh, e.mean_len, e.mean_tau, e.grad_norm);
    out << buf;
  }
}

AdamState::AdamState(const PolicyParams& params) {
  for (const ParamBlock& b : params.blocks) {
    m_[b.name].assign(b.values.size(), 0.0);
    v_[b.name].assign(b.values.size(), 0.0);
  }
}

void AdamState::apply(PolicyParams& params, const std::map<std::string, std::vector<double>>& grads,
                      const TrainConfig& cfg) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step_));
  for (ParamBlock& b : params.blocks) {
    const std::vector<double>& g = grads.at(b.name);
    std::vector<double>& m = m_[b.name];
    std::vector<double>& v = v_[b.name];
    for (size_t i = 0; i < b.values.size(); ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      if (mhat != 0.0 || vhat != 0.0) {
        b.values[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
      }
    }
  }
}

namespace {

struct EpisodeTask {
  const Instance* inst = nullptr;
  int episode = 0;
  std::unique_ptr<ad::Tape> tape;
  std::unique_ptr<PolicyNet> net;
  Rollout rollout;
  double reward = 0.0;
  double advantage = 0.0;
};

}  // namespace

BatchStats reinforce_step(const std::vector<const Instance*>& batch, PolicyParams& params,
                          AdamState& adam, std::map<std::string, double>& baselines,
                          const TrainConfig& cfg, uint64_t step_key) {
  const int k = cfg.episodes_per_video;
  const DurationWindow window = DurationWindow::from_target(cfg.target_duration_s);
  RewardConfig reward_cfg;
  reward_cfg.beta = cfg.beta;

  std::vector<EpisodeTask> tasks(batch.size() * k);
  for (size_t v = 0; v < batch.size(); ++v) {
    for (int e = 0; e < k; ++e) {
      EpisodeTask& task = tasks[v * k + e];
      task.inst = batch[v];
      task.episode = e;
    }
  }

  // Phase 1: forward rollouts + rewards. Each episode has its own tape and a
  // per-rollout rng keyed by (seed, instance id, step, episode), so the
  // parallel schedule cannot change any result.
  const int ntasks = static_cast<int>(tasks.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < ntasks; ++i) {
    try {
      EpisodeTask& task = tasks[i];
      task.tape = std::make_unique<ad::Tape>();
      task.net = std::make_unique<PolicyNet>(*task.tape, params);
      Rng rng = Rng::derive(cfg.seed, task.inst->id, step_key * 4096 + task.episode);
      task.rollout = task.net->rollout(*task.inst, window, SampleMode::kSample, rng);
      task.reward = composite_reward(*task.inst, task.rollout.selection, reward_cfg);
      if (cfg.zero_reward_below_tmin && task.rollout.selection.total_duration_s < window.t_min_s) {
        task.reward = 0.0;
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  // Phase 2: EMA baseline per video (initialized to the first observed mean),
  // advantages against the pre-update baseline.
  for (size_t v = 0; v < batch.size(); ++v) {
    double mean = 0.0;
    for (int e = 0; e < k; ++e) mean += tasks[v * k + e].reward;
    mean /= k;
    if (!std::isfinite(mean)) {
      throw TrainingError("non-finite episode reward on '" + batch[v]->id + "'");
    }
    auto it = baselines.find(batch[v]->id);
    const double b = it == baselines.end() ? mean : it->second;
    for (int e = 0; e < k; ++e) tasks[v * k + e].advantage = tasks[v * k + e].reward - b;
    baselines[batch[v]->id] = cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * mean;
  }

  // Phase 3: backward per episode; loss = -(adv / (K * B)) * sum_t logprob_t.
  const double scale = 1.0 / (static_cast<double>(k) * static_cast<double>(batch.size()));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < ntasks; ++i) {
    try {
      EpisodeTask& task = tasks[i];
      ad::Tensor loss = task.tape->scale(task.rollout.logprob_sum, -task.advantage * scale);
      if (!std::isfinite(task.tape->values(loss)[0])) {
        throw TrainingError("non-finite surrogate loss on '" + task.inst->id + "' episode " +
                            std::to_string(task.episode));
      }
      task.tape->backward(loss);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  // Phase 4: reduce gradients in fixed task order, then update.
  std::map<std::string, std::vector<double>> grads;
  for (const ParamBlock& b : params.blocks) grads[b.name].assign(b.values.size(), 0.0);
  for (EpisodeTask& task : tasks) {
    for (const ParamBlock& b : params.blocks) {
      const std::vector<double>& g = task.tape->grad(task.net->var(b.name));
      if (g.empty()) continue;  // parameter not touched by this episode
      std::vector<double>& acc = grads[b.name];
      for (size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
    task.tape.reset();
    task.net.reset();
  }

  double norm_sq = 0.0;
  for (auto& [name, g] : grads) {
    for (double x : g) {
      if (!std::isfinite(x)) throw TrainingError("non-finite gradient in block '" + name + "'");
      norm_sq += x * x;
    }
  }
  const double norm = std::sqrt(norm_sq);
  if (cfg.grad_clip_norm > 0.0 && norm > cfg.grad_clip_norm) {
    const double shrink = cfg.grad_clip_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& x : g) x *= shrink;
    }
  }
  adam.apply(params, grads, cfg);

  BatchStats stats;
  stats.grad_norm = norm;
  RewardConfig unit_cfg;
  unit_cfg.beta = cfg.beta;
  for (const EpisodeTask& task : tasks) {
    stats.mean_reward += task.reward;
    stats.mean_imp += importance_reward(*task.inst, task.rollout.selection, unit_cfg);
    stats.mean_coh += coherence_reward(*task.inst, task.rollout.selection, unit_cfg);
    stats.mean_len += task.rollout.selection.count();
    stats.mean_tau += task.rollout.selection.total_duration_s;
  }
  stats.mean_reward /= ntasks;
  stats.mean_imp /= ntasks;
  stats.mean_coh /= ntasks;
  stats.mean_len /= ntasks;
  stats.mean_tau /= ntasks;
  return stats;
}

TrainResult train(const std::vector<Instance>& dataset, const PolicyConfig& policy_cfg,
                  const TrainConfig& cfg, const std::string& checkpoint_dir) {
  if (dataset.empty()) throw TrainingError("training dataset is empty");

  Rng init_rng = Rng::derive(cfg.seed, "init", 0);
  TrainResult result;
  result.params = PolicyParams::init(policy_cfg, init_rng);
  AdamState adam(result.params);
  std::map<std::string, double> baselines;

  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  uint64_t step_key = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
    }

    EpochStats es;
    es.epoch = epoch;
    int episodes = 0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      std::vector<const Instance*> batch;
      for (int i = start; i < std::min(n, start + cfg.batch_size); ++i) {
        batch.push_back(&dataset[order[i]]);
      }
      BatchStats bs = reinforce_step(batch, result.params, adam, baselines, cfg, ++step_key);
      const int ne = static_cast<int>(batch.size()) * cfg.episodes_per_video;
      es.mean_reward += bs.mean_reward * ne;
      es.mean_imp += bs.mean_imp * ne;
      es.mean_coh += bs.mean_coh * ne;
      es.mean_len += bs.mean_len * ne;
      es.mean_tau += bs.mean_tau * ne;
      es.grad_norm += bs.grad_norm;
      episodes += ne;
      ++batches;
    }
    es.mean_reward /= episodes;
    es.mean_imp /= episodes;
    es.mean_coh /= episodes;
    es.mean_len /= episodes;
    es.mean_tau /= episodes;
    es.grad_norm /= batches;
    result.log.epochs.push_back(es);

    if (!checkpoint_dir.empty()) {
      std::filesystem::create_directories(checkpoint_dir);
      save_checkpoint(result.params, checkpoint_dir + "/epoch_" + std::to_string(epoch) + ".ckpt");
    }
  }
  if (!checkpoint_dir.empty()) {
    save_checkpoint(result.params, checkpoint_dir + "/final.ckpt");
  }
  return result;
}

}  // namespace msan
