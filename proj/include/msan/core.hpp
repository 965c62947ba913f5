#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace msan {

// ---------------------------------------------------------------------------
// Errors

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleInstanceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidSelectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Domain types

// One annotated narrative-technique label: hierarchy level 1..4 plus an
// optional per-label group weight (scoring supplies a default when unset).
struct ImportanceLabel {
  int level = 1;
  std::optional<double> group_weight;
};

struct Segment {
  int index = 0;
  double duration_s = 0.0;
  std::vector<double> features;
  std::vector<ImportanceLabel> labels;
  std::optional<std::string> text;
};

// Sparse map of pairwise text perplexities, keyed by order-preserving index
// pairs (i < j). Pairs against the original order carry no value.
class PplMap {
 public:
  void set(int i, int j, double value) {
    if (i >= j) throw ValidationError("ppl key (" + std::to_string(i) + "," + std::to_string(j) + "): requires i < j");
    if (value < 0.0) throw ValidationError("ppl value for (" + std::to_string(i) + "," + std::to_string(j) + ") is negative");
    entries_[{i, j}] = value;
  }

  std::optional<double> get(int i, int j) const {
    auto it = entries_.find({i, j});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  double at(int i, int j) const {
    auto v = get(i, j);
    if (!v) {
      throw MissingDataError("missing PPL entry for pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    return *v;
  }

  const std::map<std::pair<int, int>, double>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }

 private:
  std::map<std::pair<int, int>, double> entries_;
};

enum class CohLabel { kCoherent, kUncertain, kIncoherent };

class CoherenceAnnotation {
 public:
  void set(int i, int j, CohLabel label) {
    if (i >= j) throw ValidationError("annotation key (" + std::to_string(i) + "," + std::to_string(j) + "): requires i < j");
    entries_[{i, j}] = label;
  }

  std::optional<CohLabel> get(int i, int j) const {
    auto it = entries_.find({i, j});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::pair<int, int>, CohLabel>& entries() const { return entries_; }

 private:
  std::map<std::pair<int, int>, CohLabel> entries_;
};

struct Instance {
  std::string id;
  std::vector<Segment> segments;
  PplMap ppl;
  std::optional<CoherenceAnnotation> annotations;
  bool force_end_segment = true;

  int size() const { return static_cast<int>(segments.size()); }
  double duration(int i) const { return segments.at(i).duration_s; }

  // Checks every structural invariant; throws ValidationError on the first
  // violation with an index-anchored message.
  void validate() const;
};

// Feasibility window [c1*T, c2*T] around a target duration T.
struct DurationWindow {
  double target_s = 0.0;
  double t_min_s = 0.0;
  double t_max_s = 0.0;
  double c1 = 0.8;
  double c2 = 1.2;

  static DurationWindow from_target(double target_s, double c1 = 0.8, double c2 = 1.2) {
    if (target_s <= 0.0) throw ValidationError("target duration must be positive");
    if (c1 <= 0.0 || c1 > c2) throw ValidationError("duration window requires 0 < c1 <= c2");
    return DurationWindow{target_s, c1 * target_s, c2 * target_s, c1, c2};
  }

  bool contains(double tau) const { return tau >= t_min_s && tau <= t_max_s; }
};

// A feasible subset of segment indices. `indices` preserves the order the
// producer emitted them; `temporal` is the same set in ascending source
// order, which is the order all scoring uses.
struct Selection {
  std::string instance_id;
  std::vector<int> indices;
  std::vector<int> temporal;
  double total_duration_s = 0.0;
  std::string solver;

  static Selection make(const Instance& inst, std::vector<int> picked, std::string solver_tag);

  int count() const { return static_cast<int>(temporal.size()); }
};

// ---------------------------------------------------------------------------
// Operations

// Consecutive pairs of the temporal order; empty for |A| <= 1.
std::vector<std::pair<int, int>> adjacent_pairs(const Selection& sel);

using PairCohFn = std::function<double(int, int)>;

// Eq.-style objective: sum of member importances plus pairwise coherence over
// adjacent temporal pairs, gated by the duration window. Returns nullopt when
// the selection's total duration falls outside the window.
std::optional<double> objective_eq1(const Instance& inst, const Selection& sel,
                                    const DurationWindow& window, const PairCohFn& coh_fn);

}  // namespace msan
