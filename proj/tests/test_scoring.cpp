#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "msan/rng.hpp"
#include "msan/scoring.hpp"
#include "test_helpers.hpp"

using namespace msan;
using msan::testing::make_instance;

namespace {
Segment seg_with_levels(const std::vector<int>& levels) {
  Segment s;
  s.index = 0;
  s.duration_s = 1.0;
  s.features = {0, 0, 0, 0};
  for (int l : levels) s.labels.push_back(ImportanceLabel{l, std::nullopt});
  return s;
}
}  // namespace

TEST_CASE("segment_importance fixtures") {
  RewardConfig cfg;
  CHECK(segment_importance(seg_with_levels({4, 4}), cfg) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(segment_importance(seg_with_levels({1, 2, 3, 4}), cfg) == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(segment_importance(seg_with_levels({}), cfg) == 0.0);
}

TEST_CASE("segment_importance honors per-label weights") {
  RewardConfig cfg;
  Segment s = seg_with_levels({4});
  s.labels[0].group_weight = 1.0;  // fourth-power scheme: level 4 weighs 1.0
  CHECK(segment_importance(s, cfg) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("importance_reward is the mean over the selection") {
  Instance inst = make_instance({4, 4}, {4, 2});  // imps 1.0 and 0.5
  RewardConfig cfg;
  auto sel = Selection::make(inst, {0, 1}, "t");
  CHECK(importance_reward(inst, sel, cfg) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(importance_reward(inst, Selection::make(inst, {}, "t"), cfg) == 0.0);

  // brute-force oracle on a random 5-segment selection
  Instance big = make_instance({1, 1, 1, 1, 1, 1, 1, 1}, {1, 2, 3, 4, 1, 2, 3, 4});
  auto sel5 = Selection::make(big, {6, 1, 4, 0, 7}, "t");
  double expected = 0.0;
  for (int idx : sel5.temporal) expected += 0.25 * big.segments[idx].labels[0].level;
  expected /= 5.0;
  CHECK(importance_reward(big, sel5, cfg) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("coherence_reward fixtures") {
  RewardConfig cfg;
  Instance inst = make_instance({1, 1, 1}, {1, 1, 1});
  inst.ppl.set(0, 1, 0.0);
  CHECK(coherence_reward(inst, Selection::make(inst, {0, 1}, "t"), cfg) == doctest::Approx(1.0).epsilon(1e-15));

  inst.ppl.set(0, 1, 1.0);
  inst.ppl.set(1, 2, 3.0);
  CHECK(coherence_reward(inst, Selection::make(inst, {0, 1, 2}, "t"), cfg) ==
        doctest::Approx(std::exp(-2.0)).epsilon(1e-14));

  CHECK(coherence_reward(inst, Selection::make(inst, {1}, "t"), cfg) == 0.0);
  cfg.empty_coherence_policy = RewardConfig::EmptyCohPolicy::kOne;
  CHECK(coherence_reward(inst, Selection::make(inst, {1}, "t"), cfg) == 1.0);
}

TEST_CASE("coherence_reward names the missing pair") {
  RewardConfig cfg;
  Instance inst = make_instance({1, 1}, {1, 1});
  Instance sparse = inst;
  sparse.ppl = PplMap{};
  auto sel = Selection::make(sparse, {0, 1}, "t");
  CHECK_THROWS_WITH_AS(coherence_reward(sparse, sel, cfg),
                       "missing PPL entry for pair (0,1)", MissingDataError);
}

TEST_CASE("coherence_reward strictly decreases in any touched PPL entry") {
  RewardConfig cfg;
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Instance inst = make_instance({1, 1, 1, 1}, {1, 1, 1, 1}, rng.uniform(0.1, 3.0));
    auto sel = Selection::make(inst, {0, 1, 2, 3}, "t");
    double before = coherence_reward(inst, sel, cfg);
    Instance bumped = inst;
    int k = rng.uniform_int(0, 2);
    bumped.ppl.set(k, k + 1, inst.ppl.at(k, k + 1) + rng.uniform(0.01, 1.0));
    CHECK(coherence_reward(bumped, sel, cfg) < before);
  }
}

TEST_CASE("composite_reward is affine in beta with the right endpoints") {
  Instance inst = make_instance({4, 4}, {4, 2});
  inst.ppl.set(0, 1, 2.0);
  auto sel = Selection::make(inst, {0, 1}, "t");

  RewardConfig cfg;
  cfg.beta = 0.5;
  double r_imp = importance_reward(inst, sel, cfg);
  double r_coh = coherence_reward(inst, sel, cfg);
  CHECK(r_imp == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(composite_reward(inst, sel, cfg) == doctest::Approx(0.5 * r_imp + 0.5 * r_coh).epsilon(1e-15));

  cfg.beta = 0.0;
  CHECK(composite_reward(inst, sel, cfg) == r_coh);
  cfg.beta = 1.0;
  CHECK(composite_reward(inst, sel, cfg) == r_imp);

  // affine: value at beta is the chord between the endpoints
  for (double beta : {0.1, 0.3, 0.7, 0.9}) {
    cfg.beta = beta;
    CHECK(composite_reward(inst, sel, cfg) ==
          doctest::Approx(beta * r_imp + (1 - beta) * r_coh).epsilon(1e-15));
  }

  // the worked fixture: beta 0.5, R_imp 0.8, R_coh exp(-2)
  CHECK(0.5 * 0.8 + 0.5 * std::exp(-2.0) == doctest::Approx(0.46767).epsilon(1e-4));
}

TEST_CASE("imp_at_t window rule") {
  auto window = DurationWindow::from_target(10.0);
  Instance inst = make_instance({4, 5}, {4, 2});  // tau = 9, in [8,12]
  auto sel = Selection::make(inst, {0, 1}, "t");
  CHECK(imp_at_t(inst, sel, window) == doctest::Approx(0.75).epsilon(1e-15));

  Instance late = make_instance({6, 7}, {4, 2});  // tau = 13
  auto sel2 = Selection::make(late, {0, 1}, "t");
  CHECK(imp_at_t(late, sel2, window) == 0.0);
}

TEST_CASE("coh_at_t with annotations") {
  auto window = DurationWindow::from_target(10.0);
  Instance inst = make_instance({3, 3, 3}, {1, 1, 1});
  CoherenceAnnotation ann;
  ann.set(0, 1, CohLabel::kCoherent);
  ann.set(1, 2, CohLabel::kUncertain);
  inst.annotations = ann;
  auto sel = Selection::make(inst, {0, 1, 2}, "t");  // tau = 9
  CHECK(coh_at_t(inst, sel, window) == doctest::Approx(0.75).epsilon(1e-15));

  inst.annotations->set(0, 1, CohLabel::kIncoherent);
  inst.annotations->set(1, 2, CohLabel::kIncoherent);
  CHECK(coh_at_t(inst, sel, window) == 0.0);

  // unannotated pair counts as uncertain
  Instance noann = make_instance({3, 3, 3}, {1, 1, 1});
  noann.annotations = CoherenceAnnotation{};
  CHECK(coh_at_t(noann, sel, window) == doctest::Approx(0.5).epsilon(1e-15));

  Instance missing = make_instance({3, 3, 3}, {1, 1, 1});
  CHECK_THROWS_AS(coh_at_t(missing, sel, window), MissingDataError);

  // infeasible duration zeroes the metric
  Instance big = make_instance({7, 7}, {1, 1});
  big.annotations = CoherenceAnnotation{};
  CHECK(coh_at_t(big, Selection::make(big, {0, 1}, "t"), window) == 0.0);
}

TEST_CASE("impcoh_at_t is imp x coh at unit scale") {
  auto window = DurationWindow::from_target(10.0);
  Instance inst = make_instance({4, 3, 3}, {4, 3, 4});
  CoherenceAnnotation ann;
  ann.set(0, 1, CohLabel::kCoherent);
  ann.set(1, 2, CohLabel::kUncertain);
  inst.annotations = ann;
  auto sel = Selection::make(inst, {0, 1, 2}, "t");

  MetricReport r = impcoh_at_t(inst, sel, window);
  CHECK(r.feasible);
  CHECK(std::abs(r.overall - (r.imp / 100.0) * (r.coh / 100.0) * 100.0) < 1e-12);

  Instance late = make_instance({7, 7}, {4, 4});
  late.annotations = CoherenceAnnotation{};
  MetricReport r2 = impcoh_at_t(late, Selection::make(late, {0, 1}, "t"), window);
  CHECK(!r2.feasible);
  CHECK(r2.imp == 0.0);
  CHECK(r2.coh == 0.0);
  CHECK(r2.overall == 0.0);
}

TEST_CASE("dataset mean report") {
  MetricReport a{80.0, 75.0, 60.0, true};
  MetricReport b{40.0, 100.0, 40.0, true};
  MetricReport mean = mean_report({a, b});
  CHECK(mean.overall == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(mean.imp == doctest::Approx(60.0).epsilon(1e-15));
}
