#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "msan/data.hpp"
#include "msan/solvers.hpp"
#include "test_helpers.hpp"

using namespace msan;
using msan::testing::make_instance;

namespace {

GeneratorConfig small_gen(uint64_t seed, int cap = 10) {
  GeneratorConfig cfg;
  cfg.seed = seed;
  cfg.mean_segments = 7.0;
  cfg.max_segments = cap;
  cfg.feature_dim = 8;
  return cfg;
}

}  // namespace

TEST_CASE("solve_random basics") {
  SolverConfig cfg;
  cfg.seed = 11;
  auto window = DurationWindow::from_target(10.0);

  Instance one = make_instance({3.0}, {4});
  auto sel = solve_random(one, window, cfg);
  CHECK(sel.temporal == std::vector<int>{0});

  Instance inst = make_instance({1, 2, 3, 4, 5}, {1, 2, 3, 4, 1});
  auto a = solve_random(inst, window, cfg);
  auto b = solve_random(inst, window, cfg);
  CHECK(a.indices == b.indices);  // fixed seed -> identical output
}

TEST_CASE("solve_random draws r roughly uniformly over [1, M]") {
  auto window = DurationWindow::from_target(10.0);
  const int m = 10;
  std::vector<double> durs(m, 1.0);
  std::vector<int> levels(m, 1);
  std::vector<int> counts(m + 1, 0);
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    Instance inst = make_instance(durs, levels, 1.0, "chi-" + std::to_string(s));
    SolverConfig cfg;
    cfg.seed = s;
    counts[solve_random(inst, window, cfg).count()]++;
  }
  for (int r = 1; r <= m; ++r) {
    double freq = counts[r] / static_cast<double>(trials);
    CHECK(std::abs(freq - 0.1) < 0.02);
  }
}

TEST_CASE("solve_random_cut lands in the window or reports infeasibility") {
  SolverConfig cfg;
  cfg.seed = 3;
  auto window = DurationWindow::from_target(10.0);

  Instance inst = make_instance({2, 3, 4, 2, 3, 4, 2, 3}, {1, 1, 1, 1, 1, 1, 1, 1});
  for (uint64_t s = 0; s < 50; ++s) {
    cfg.seed = s;
    auto sel = solve_random_cut(inst, window, cfg);
    CHECK(sel.total_duration_s >= 8.0);
    CHECK(sel.total_duration_s <= 12.0);
  }

  // every subset overshoots: single 13 s segment
  Instance hopeless = make_instance({13.0}, {1});
  CHECK_THROWS_AS(solve_random_cut(hopeless, window, cfg), InfeasibleInstanceError);

  cfg.seed = 3;
  auto a = solve_random_cut(inst, window, cfg);
  auto b = solve_random_cut(inst, window, cfg);
  CHECK(a.indices == b.indices);
}

TEST_CASE("oracle on the hand-enumerated 3-segment fixture") {
  // durations {4,5,6}, T = 10: feasible subsets are {4,5}, {4,6}, {5,6}
  Instance inst = make_instance({4, 5, 6}, {1, 2, 4}, 0.5);
  auto window = DurationWindow::from_target(10.0);
  SolverConfig cfg;
  cfg.force_end_segment = false;

  auto sel = solve_oracle(inst, window, cfg);
  // values: imp {0.25, 0.5, 1.0}; every pair coherence exp(-0.5)
  // {1,2} scores 1.5 + e^-0.5, the max
  CHECK(sel.temporal == std::vector<int>{1, 2});

  cfg.force_end_segment = true;
  auto sel2 = solve_oracle(inst, window, cfg);
  CHECK(sel2.temporal.back() == 2);
}

TEST_CASE("oracle refuses instances above the size cap") {
  std::vector<double> durs(23, 1.0);
  std::vector<int> levels(23, 1);
  Instance inst = make_instance(durs, levels);
  SolverConfig cfg;
  CHECK_THROWS_AS(solve_oracle(inst, DurationWindow::from_target(10.0), cfg), InvalidSelectionError);
  CHECK_THROWS_AS(solve_oracle_serial(inst, DurationWindow::from_target(10.0), cfg), InvalidSelectionError);
}

TEST_CASE("oracle reports infeasibility") {
  Instance inst = make_instance({20, 30}, {1, 1});
  SolverConfig cfg;
  cfg.force_end_segment = false;
  CHECK_THROWS_AS(solve_oracle(inst, DurationWindow::from_target(10.0), cfg), InfeasibleInstanceError);
}

TEST_CASE("parallel oracle equals the serial reference") {
  auto window = DurationWindow::from_target(10.0);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Instance inst = generate_instance(small_gen(seed), 0, false);
    SolverConfig cfg;
    cfg.force_end_segment = true;
    for (auto mode : {ObjectiveMode::kEq1Sum, ObjectiveMode::kRewardMean}) {
      cfg.objective_mode = mode;
      try {
        auto par = solve_oracle(inst, window, cfg);
        auto ser = solve_oracle_serial(inst, window, cfg);
        CHECK(par.temporal == ser.temporal);
      } catch (const InfeasibleInstanceError&) {
        CHECK_THROWS_AS(solve_oracle_serial(inst, window, cfg), InfeasibleInstanceError);
      }
    }
  }
}

TEST_CASE("sam equals the oracle and pruning changes nothing") {
  auto window = DurationWindow::from_target(10.0);
  int checked = 0;
  for (uint64_t seed = 100; seed < 130; ++seed) {
    Instance inst = generate_instance(small_gen(seed), 1, false);
    SolverConfig cfg;
    cfg.force_end_segment = true;
    Selection oracle_sel, sam_sel, sam_noprune;
    try {
      oracle_sel = solve_oracle(inst, window, cfg);
    } catch (const InfeasibleInstanceError&) {
      CHECK_THROWS_AS(solve_sam(inst, window, cfg), InfeasibleInstanceError);
      continue;
    }
    sam_sel = solve_sam(inst, window, cfg, true);
    sam_noprune = solve_sam(inst, window, cfg, false);
    CHECK(sam_sel.temporal == sam_noprune.temporal);
    CHECK(evaluate_objective(inst, sam_sel.temporal, cfg) ==
          evaluate_objective(inst, oracle_sel.temporal, cfg));
    // identical tie-breaking makes the sets themselves equal
    CHECK(sam_sel.temporal == oracle_sel.temporal);
    if (cfg.force_end_segment) CHECK(sam_sel.temporal.back() == inst.size() - 1);
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("oracle dominates the other solvers") {
  auto window = DurationWindow::from_target(10.0);
  int checked = 0;
  for (uint64_t seed = 300; seed < 360; ++seed) {
    Instance inst = generate_instance(small_gen(seed), 2, false);
    SolverConfig cfg;
    cfg.seed = seed;
    cfg.force_end_segment = false;
    Selection best;
    try {
      best = solve_oracle(inst, window, cfg);
    } catch (const InfeasibleInstanceError&) {
      continue;
    }
    const double best_value = evaluate_objective(inst, best.temporal, cfg);

    auto rc = solve_random_cut(inst, window, cfg);
    CHECK(evaluate_objective(inst, rc.temporal, cfg) <= best_value);

    auto rnd = solve_random(inst, window, cfg);
    if (window.contains(rnd.total_duration_s)) {
      CHECK(evaluate_objective(inst, rnd.temporal, cfg) <= best_value);
    }
    ++checked;
  }
  CHECK(checked > 30);
}

TEST_CASE("annotation coherence source") {
  Instance inst = make_instance({4, 5, 6}, {1, 1, 1});
  CoherenceAnnotation ann;
  ann.set(0, 1, CohLabel::kCoherent);
  ann.set(0, 2, CohLabel::kIncoherent);
  ann.set(1, 2, CohLabel::kUncertain);
  inst.annotations = ann;
  CHECK(pair_coherence(inst, 0, 1, CohSource::kAnnotation) == 1.0);
  CHECK(pair_coherence(inst, 0, 2, CohSource::kAnnotation) == 0.0);
  CHECK(pair_coherence(inst, 1, 2, CohSource::kAnnotation) == 0.5);
  CHECK(pair_coherence(inst, 0, 1, CohSource::kExpNegPpl) == doctest::Approx(std::exp(-1.0)));

  SolverConfig cfg;
  cfg.coh_source = CohSource::kAnnotation;
  cfg.force_end_segment = false;
  auto sel = solve_oracle(inst, DurationWindow::from_target(10.0), cfg);
  CHECK(sel.temporal == std::vector<int>{0, 1});  // coherent pair wins
}
