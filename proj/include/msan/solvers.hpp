#pragma once

#include <cstdint>

#include "msan/core.hpp"
#include "msan/scoring.hpp"

namespace msan {

enum class ObjectiveMode { kEq1Sum, kRewardMean };
enum class CohSource { kExpNegPpl, kAnnotation };

struct SolverConfig {
  uint64_t seed = 0;
  int max_retries = 1000;
  bool force_end_segment = true;
  ObjectiveMode objective_mode = ObjectiveMode::kEq1Sum;
  CohSource coh_source = CohSource::kExpNegPpl;
  RewardConfig reward;       // used by kRewardMean and for node importances
  int oracle_size_cap = 22;  // subsets blow up as 2^M
};

// Pairwise coherence under the configured source.
double pair_coherence(const Instance& inst, int i, int j, CohSource source);

// Shared scorer: members in ascending order. kEq1Sum is the sum-form
// objective; kRewardMean the composite reward. Every solver's reported value
// goes through here so cross-solver comparisons are exact.
double evaluate_objective(const Instance& inst, const std::vector<int>& temporal,
                          const SolverConfig& cfg);

// Uniform r in [1, M], then r distinct segments; ignores the window.
Selection solve_random(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg);

// Adds random unselected segments until the duration lands in the window;
// restarts on overshoot. Throws InfeasibleInstanceError after max_retries.
Selection solve_random_cut(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg);

// Exact DFS over increasing-index paths with duration pruning; node weights
// are segment importances, edge weights pairwise coherence.
Selection solve_sam(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg,
                    bool prune = true);

// Exhaustive subset enumeration, OpenMP-parallel over subset ranges. Result
// is independent of the partitioning.
Selection solve_oracle(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg);

// Single-threaded reference kept for testing the parallel scan against.
Selection solve_oracle_serial(const Instance& inst, const DurationWindow& window, const SolverConfig& cfg);

}  // namespace msan
