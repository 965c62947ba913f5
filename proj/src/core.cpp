#include "msan/core.hpp"

#include "msan/scoring.hpp"

namespace msan {

void Instance::validate() const {
  if (segments.empty()) throw ValidationError("instance '" + id + "': no segments");
  const int m = size();
  size_t feat_dim = segments.front().features.size();
  for (int i = 0; i < m; ++i) {
    const Segment& s = segments[i];
    if (s.index != i) {
      throw ValidationError("instance '" + id + "': segment at position " + std::to_string(i) +
                            " has index " + std::to_string(s.index) + " (expected consecutive 0-based)");
    }
    if (!(s.duration_s > 0.0)) {
      throw ValidationError("instance '" + id + "': segment " + std::to_string(i) + " has non-positive duration");
    }
    if (s.features.size() != feat_dim) {
      throw ValidationError("instance '" + id + "': segment " + std::to_string(i) +
                            " feature dim " + std::to_string(s.features.size()) +
                            " != " + std::to_string(feat_dim));
    }
    for (const ImportanceLabel& l : s.labels) {
      if (l.level < 1 || l.level > 4) {
        throw ValidationError("instance '" + id + "': segment " + std::to_string(i) +
                              " label level " + std::to_string(l.level) + " outside {1,2,3,4}");
      }
      if (l.group_weight && *l.group_weight <= 0.0) {
        throw ValidationError("instance '" + id + "': segment " + std::to_string(i) +
                              " has non-positive group weight");
      }
    }
  }
  for (const auto& [key, value] : ppl.entries()) {
    if (key.first < 0 || key.second >= m) {
      throw ValidationError("instance '" + id + "': ppl key (" + std::to_string(key.first) + "," +
                            std::to_string(key.second) + ") out of range for M=" + std::to_string(m));
    }
    (void)value;
  }
  if (annotations) {
    for (const auto& [key, label] : annotations->entries()) {
      if (key.first < 0 || key.second >= m) {
        throw ValidationError("instance '" + id + "': annotation key (" + std::to_string(key.first) +
                              "," + std::to_string(key.second) + ") out of range");
      }
      (void)label;
    }
  }
}

Selection Selection::make(const Instance& inst, std::vector<int> picked, std::string solver_tag) {
  Selection sel;
  sel.instance_id = inst.id;
  sel.solver = std::move(solver_tag);
  sel.indices = std::move(picked);
  std::vector<bool> seen(inst.segments.size(), false);
  double tau = 0.0;
  for (int idx : sel.indices) {
    if (idx < 0 || idx >= inst.size()) {
      throw InvalidSelectionError("selection on '" + inst.id + "' references unknown index " + std::to_string(idx));
    }
    if (seen[idx]) {
      throw InvalidSelectionError("selection on '" + inst.id + "' repeats index " + std::to_string(idx));
    }
    seen[idx] = true;
    tau += inst.segments[idx].duration_s;
  }
  sel.temporal = sel.indices;
  std::sort(sel.temporal.begin(), sel.temporal.end());
  sel.total_duration_s = tau;
  return sel;
}

std::vector<std::pair<int, int>> adjacent_pairs(const Selection& sel) {
  std::vector<std::pair<int, int>> pairs;
  if (sel.temporal.size() < 2) return pairs;
  pairs.reserve(sel.temporal.size() - 1);
  for (size_t k = 0; k + 1 < sel.temporal.size(); ++k) {
    pairs.emplace_back(sel.temporal[k], sel.temporal[k + 1]);
  }
  return pairs;
}

std::optional<double> objective_eq1(const Instance& inst, const Selection& sel,
                                    const DurationWindow& window, const PairCohFn& coh_fn) {
  for (int idx : sel.temporal) {
    if (idx < 0 || idx >= inst.size()) {
      throw InvalidSelectionError("selection references unknown index " + std::to_string(idx));
    }
  }
  if (!window.contains(sel.total_duration_s)) return std::nullopt;
  RewardConfig cfg;
  double value = 0.0;
  for (int idx : sel.temporal) value += segment_importance(inst.segments[idx], cfg);
  for (auto [i, j] : adjacent_pairs(sel)) value += coh_fn(i, j);
  return value;
}

}  // namespace msan
