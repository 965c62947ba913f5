// Times the OpenMP subset-enumeration solver against its single-threaded
// reference on growing instance sizes and checks they agree.
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "msan/data.hpp"
#include "msan/solvers.hpp"

using namespace msan;

namespace {

template <typename F>
double time_ms(F&& f, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  const int max_m = argc > 1 ? std::atoi(argv[1]) : 20;
  const DurationWindow window = DurationWindow::from_target(10.0);
  SolverConfig cfg;
  cfg.oracle_size_cap = max_m;

  std::printf("%4s %6s %12s %12s %8s %6s\n", "M", "reps", "serial_ms", "parallel_ms", "speedup",
              "agree");
  for (int m = 12; m <= max_m; m += 2) {
    GeneratorConfig gcfg;
    gcfg.seed = 1000 + m;
    gcfg.mean_segments = m;
    gcfg.max_segments = m;
    gcfg.feature_dim = 8;
    Instance inst;
    // regenerate until the instance actually has m segments and is feasible
    for (int attempt = 0;; ++attempt) {
      inst = generate_instance(gcfg, attempt, false);
      if (inst.size() != m) continue;
      try {
        solve_oracle_serial(inst, window, cfg);
        break;
      } catch (const InfeasibleInstanceError&) {
      }
    }

    const int reps = m >= 20 ? 3 : 10;
    Selection ser, par;
    const double t_ser = time_ms([&] { ser = solve_oracle_serial(inst, window, cfg); }, reps);
    const double t_par = time_ms([&] { par = solve_oracle(inst, window, cfg); }, reps);
    std::printf("%4d %6d %12.3f %12.3f %8.2f %6s\n", m, reps, t_ser, t_par, t_ser / t_par,
                ser.temporal == par.temporal ? "yes" : "NO");
  }
  return 0;
}
