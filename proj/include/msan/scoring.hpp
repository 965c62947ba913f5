#pragma once

#include "msan/core.hpp"

namespace msan {

struct RewardConfig {
  double beta = 0.5;        // composite weight on the importance term
  double w_default = 0.25;  // group weight applied when a label carries none
  enum class EmptyCohPolicy { kZero, kOne };
  EmptyCohPolicy empty_coherence_policy = EmptyCohPolicy::kZero;
};

// All values reported on the x100 scale; zeroed when infeasible.
struct MetricReport {
  double imp = 0.0;
  double coh = 0.0;
  double overall = 0.0;
  bool feasible = false;
};

// Weighted mean of a segment's label levels. Unlabeled segments score 0.
double segment_importance(const Segment& seg, const RewardConfig& cfg);

// Mean segment importance over the selection; 0 for an empty selection.
double importance_reward(const Instance& inst, const Selection& sel, const RewardConfig& cfg);

// exp(-mean PPL over adjacent temporal pairs); degenerate |A| <= 1 follows
// cfg.empty_coherence_policy. Throws MissingDataError on an absent pair.
double coherence_reward(const Instance& inst, const Selection& sel, const RewardConfig& cfg);

// beta * R_imp + (1 - beta) * R_coh
double composite_reward(const Instance& inst, const Selection& sel, const RewardConfig& cfg);

// Metric suite (unit scale; impcoh_at_t packages them x100).
double imp_at_t(const Instance& inst, const Selection& sel, const DurationWindow& window,
                const RewardConfig& cfg = {});
double coh_at_t(const Instance& inst, const Selection& sel, const DurationWindow& window);
MetricReport impcoh_at_t(const Instance& inst, const Selection& sel, const DurationWindow& window,
                         const RewardConfig& cfg = {});

// Dataset-level report: arithmetic mean of per-instance reports.
MetricReport mean_report(const std::vector<MetricReport>& reports);

// Coherence of one order-preserving pair as exp(-PPL); the coh_fn used by
// Eq.-style objectives when no annotations are in play.
double exp_neg_ppl(const Instance& inst, int i, int j);

// Annotation score: coherent 1, uncertain 0.5, incoherent 0; unannotated
// pairs count as uncertain.
double annotation_score(const Instance& inst, int i, int j);

}  // namespace msan
