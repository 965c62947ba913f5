#include "msan/solvers.hpp"

#include <bit>

#include <cmath>

#include "msan/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msan {

namespace {

// value desc, then fewer segments, then lexicographically smallest index list
struct Candidate {
  double value = 0.0;
  std::vector<int> temporal;
  bool valid = false;

  bool better_than(const Candidate& other) const {
    if (!valid) return false;
    if (!other.valid) return true;
    if (value != other.value) return value > other.value;
    if (temporal.size() != other.temporal.size()) return temporal.size() < other.temporal.size();
    return temporal < other.temporal;
  }
};

std::vector<int> decode_mask(uint64_t mask, int m) {
  std::vector<int> out;
  for (int i = 0; i < m; ++i) {
    if (mask & (uint64_t{1} << i)) out.push_back(i);
  }
  return out;
}

Candidate oracle_scan(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg,
                      uint64_t mask_begin, uint64_t mask_end) {
  const int m = inst.size();
  std::vector<double> dur(m);
  for (int i = 0; i < m; ++i) dur[i] = inst.duration(i);
  const uint64_t end_bit = uint64_t{1} << (m - 1);

  Candidate best;
  for (uint64_t mask = mask_begin; mask < mask_end; ++mask) {
    if (cfg.force_end_segment && !(mask & end_bit)) continue;
    double tau = 0.0;
    for (uint64_t bits = mask; bits;) {
      int i = std::countr_zero(bits);
      tau += dur[i];
      bits &= bits - 1;
    }
    if (!window.contains(tau)) continue;
    Candidate cand;
    cand.temporal = decode_mask(mask, m);
    cand.value = evaluate_objective(inst, cand.temporal, cfg);
    cand.valid = true;
    if (cand.better_than(best)) best = std::move(cand);
  }
  return best;
}

}  // namespace

double pair_coherence(const Instance& inst, int i, int j, CohSource source) {
  switch (source) {
    case CohSource::kExpNegPpl: return exp_neg_ppl(inst, i, j);
    case CohSource::kAnnotation: return annotation_score(inst, i, j);
  }
  return 0.0;
}

double evaluate_objective(const Instance& inst, const std::vector<int>& temporal,
                          const SolverConfig& cfg) {
  if (cfg.objective_mode == ObjectiveMode::kEq1Sum) {
    double value = 0.0;
    for (int idx : temporal) value += segment_importance(inst.segments.at(idx), cfg.reward);
    for (size_t k = 0; k + 1 < temporal.size(); ++k) {
      value += pair_coherence(inst, temporal[k], temporal[k + 1], cfg.coh_source);
    }
    return value;
  }
  // kRewardMean: composite reward of the selection
  Selection sel = Selection::make(inst, temporal, "eval");
  return composite_reward(inst, sel, cfg.reward);
}

Selection solve_random(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg) {
  (void)window;  // deliberately ignored
  const int m = inst.size();
  Rng rng = Rng::derive(cfg.seed, "random", std::hash<std::string>{}(inst.id));
  const int r = rng.uniform_int(1, m);
  std::vector<int> pool(m);
  for (int i = 0; i < m; ++i) pool[i] = i;
  std::vector<int> picked;
  picked.reserve(r);
  for (int k = 0; k < r; ++k) {
    int j = rng.uniform_int(k, m - 1);
    std::swap(pool[k], pool[j]);
    picked.push_back(pool[k]);
  }
  return Selection::make(inst, picked, "random");
}

Selection solve_random_cut(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg) {
  const int m = inst.size();
  Rng rng = Rng::derive(cfg.seed, "random-cut", std::hash<std::string>{}(inst.id));
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    std::vector<int> pool(m);
    for (int i = 0; i < m; ++i) pool[i] = i;
    std::vector<int> picked;
    double tau = 0.0;
    int remaining = m;
    while (tau < window.t_min_s && remaining > 0) {
      int j = rng.uniform_int(0, remaining - 1);
      int idx = pool[j];
      pool[j] = pool[remaining - 1];
      --remaining;
      picked.push_back(idx);
      tau += inst.duration(idx);
    }
    if (window.contains(tau)) return Selection::make(inst, picked, "random-cut");
    // overshoot or ran out of segments: restart
  }
  throw InfeasibleInstanceError("random-cut: no feasible subset found on '" + inst.id + "' after " +
                                std::to_string(cfg.max_retries) + " attempts");
}

namespace {

void sam_dfs(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg, bool prune,
             std::vector<int>& path, double tau, Candidate& best) {
  const int m = inst.size();
  if (!path.empty() && window.contains(tau) &&
      (!cfg.force_end_segment || path.back() == m - 1)) {
    Candidate cand;
    cand.temporal = path;
    cand.value = evaluate_objective(inst, path, cfg);
    cand.valid = true;
    if (cand.better_than(best)) best = std::move(cand);
  }
  const int next_from = path.empty() ? 0 : path.back() + 1;
  for (int j = next_from; j < m; ++j) {
    double tau2 = tau + inst.duration(j);
    if (prune && tau2 > window.t_max_s) continue;  // durations positive: extensions only grow
    path.push_back(j);
    sam_dfs(inst, window, cfg, prune, path, tau2, best);
    path.pop_back();
  }
}

}  // namespace

Selection solve_sam(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg,
                    bool prune) {
  Candidate best;
  std::vector<int> path;
  sam_dfs(inst, window, cfg, prune, path, 0.0, best);
  if (!best.valid) {
    throw InfeasibleInstanceError("sam: no feasible path on '" + inst.id + "'");
  }
  return Selection::make(inst, best.temporal, "sam");
}

Selection solve_oracle_serial(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg) {
  const int m = inst.size();
  if (m > cfg.oracle_size_cap) {
    throw InvalidSelectionError("oracle: instance '" + inst.id + "' has " + std::to_string(m) +
                                " segments, above the cap of " + std::to_string(cfg.oracle_size_cap) +
                                "; use solve_sam or raise oracle_size_cap if you can wait");
  }
  Candidate best = oracle_scan(inst, window, cfg, 1, uint64_t{1} << m);
  if (!best.valid) {
    throw InfeasibleInstanceError("oracle: no feasible subset on '" + inst.id + "'");
  }
  return Selection::make(inst, best.temporal, "oracle");
}

Selection solve_oracle(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg) {
  const int m = inst.size();
  if (m > cfg.oracle_size_cap) {
    throw InvalidSelectionError("oracle: instance '" + inst.id + "' has " + std::to_string(m) +
                                " segments, above the cap of " + std::to_string(cfg.oracle_size_cap) +
                                "; use solve_sam or raise oracle_size_cap if you can wait");
  }
  const uint64_t total = uint64_t{1} << m;
  const int chunks = 64;
  std::vector<Candidate> chunk_best(chunks);

#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < chunks; ++c) {
    uint64_t begin = 1 + (total - 1) * c / chunks;
    uint64_t end = 1 + (total - 1) * (c + 1) / chunks;
    chunk_best[c] = oracle_scan(inst, window, cfg, begin, end);
  }

  // merge in fixed chunk order so the result is partition-independent
  Candidate best;
  for (Candidate& cand : chunk_best) {
    if (cand.better_than(best)) best = std::move(cand);
  }
  if (!best.valid) {
    throw InfeasibleInstanceError("oracle: no feasible subset on '" + inst.id + "'");
  }
  return Selection::make(inst, best.temporal, "oracle");
}

}  // namespace msan
