#include "msan/scoring.hpp"

#include <cmath>

namespace msan {

double segment_importance(const Segment& seg, const RewardConfig& cfg) {
  if (seg.labels.empty()) return 0.0;  // unlabeled filler scores zero
  double sum = 0.0;
  for (const ImportanceLabel& l : seg.labels) {
    double w = l.group_weight ? *l.group_weight : cfg.w_default;
    sum += w * l.level;
  }
  return sum / static_cast<double>(seg.labels.size());
}

double importance_reward(const Instance& inst, const Selection& sel, const RewardConfig& cfg) {
  if (sel.temporal.empty()) return 0.0;
  double sum = 0.0;
  for (int idx : sel.temporal) sum += segment_importance(inst.segments.at(idx), cfg);
  return sum / static_cast<double>(sel.temporal.size());
}

double coherence_reward(const Instance& inst, const Selection& sel, const RewardConfig& cfg) {
  const int n = sel.count();
  if (n <= 1) {
    return cfg.empty_coherence_policy == RewardConfig::EmptyCohPolicy::kZero ? 0.0 : 1.0;
  }
  double sum = 0.0;
  for (auto [i, j] : adjacent_pairs(sel)) sum += inst.ppl.at(i, j);
  return std::exp(-sum / static_cast<double>(n - 1));
}

double composite_reward(const Instance& inst, const Selection& sel, const RewardConfig& cfg) {
  return cfg.beta * importance_reward(inst, sel, cfg) +
         (1.0 - cfg.beta) * coherence_reward(inst, sel, cfg);
}

double imp_at_t(const Instance& inst, const Selection& sel, const DurationWindow& window,
                const RewardConfig& cfg) {
  if (!window.contains(sel.total_duration_s)) return 0.0;
  return importance_reward(inst, sel, cfg);
}

double coh_at_t(const Instance& inst, const Selection& sel, const DurationWindow& window) {
  if (!inst.annotations) {
    throw MissingDataError("instance '" + inst.id + "' has no coherence annotations; Coh@T unavailable");
  }
  if (!window.contains(sel.total_duration_s)) return 0.0;
  const int n = sel.count();
  if (n <= 1) return 0.0;
  double sum = 0.0;
  for (auto [i, j] : adjacent_pairs(sel)) sum += annotation_score(inst, i, j);
  return sum / static_cast<double>(n - 1);
}

MetricReport impcoh_at_t(const Instance& inst, const Selection& sel, const DurationWindow& window,
                         const RewardConfig& cfg) {
  MetricReport report;
  report.feasible = window.contains(sel.total_duration_s);
  if (!report.feasible) return report;
  double imp = imp_at_t(inst, sel, window, cfg);
  double coh = coh_at_t(inst, sel, window);
  report.imp = 100.0 * imp;
  report.coh = 100.0 * coh;
  report.overall = 100.0 * imp * coh;
  return report;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport mean;
  if (reports.empty()) return mean;
  for (const MetricReport& r : reports) {
    mean.imp += r.imp;
    mean.coh += r.coh;
    mean.overall += r.overall;
  }
  const double n = static_cast<double>(reports.size());
  mean.imp /= n;
  mean.coh /= n;
  mean.overall /= n;
  mean.feasible = true;
  return mean;
}

double exp_neg_ppl(const Instance& inst, int i, int j) { return std::exp(-inst.ppl.at(i, j)); }

double annotation_score(const Instance& inst, int i, int j) {
  if (!inst.annotations) {
    throw MissingDataError("instance '" + inst.id + "' has no coherence annotations");
  }
  auto label = inst.annotations->get(i, j);
  if (!label) return 0.5;  // unannotated pairs count as uncertain
  switch (*label) {
    case CohLabel::kCoherent: return 1.0;
    case CohLabel::kUncertain: return 0.5;
    case CohLabel::kIncoherent: return 0.0;
  }
  return 0.5;
}

}  // namespace msan
