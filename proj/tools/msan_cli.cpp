#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "msan/data.hpp"
#include "msan/solvers.hpp"
#include "msan/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace msan;

namespace {

constexpr const char* kVersion = "0.1.0";

// Every command that writes artifacts drops a run manifest next to them so
// the output directory is self-describing and reproducible.
struct RunManifest {
  std::string command;
  json config = json::object();
  uint64_t seed = 0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& dir) const {
    const double wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["wall_time_s"] = wall_s;
    fs::create_directories(dir);
    std::ofstream out(dir / "run_manifest.json");
    out << j.dump(2) << "\n";
  }
};

std::string default_data_dir() {
  const char* env = std::getenv("MSAN_DATA_DIR");
  return env ? env : "";
}

Selection run_method(const std::string& method, const Instance& inst, const DurationWindow& window,
                     const SolverConfig& scfg, const PolicyParams* policy) {
  if (method == "random") return solve_random(inst, window, scfg);
  if (method == "random-cut") return solve_random_cut(inst, window, scfg);
  if (method == "sam") return solve_sam(inst, window, scfg);
  if (method == "oracle") return solve_oracle(inst, window, scfg);
  if (method == "policy") {
    if (!policy) throw std::runtime_error("method 'policy' requires --ckpt");
    ad::Tape tape;
    PolicyNet net(tape, *policy);
    Rng rng(scfg.seed);
    return net.rollout(inst, window, SampleMode::kGreedy, rng).selection;
  }
  throw std::runtime_error("unknown method '" + method + "'");
}

void append_row(std::string& csv, const std::string& method, const std::string& id,
                const MetricReport& r, double objective, double reward, double tau, int count) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.10g,%.10g,%.10g,%d\n", method.c_str(),
                id.c_str(), r.imp, r.coh, r.overall, objective, reward, tau, count);
  csv += buf;
}

// Shared core of eval/compare: one CSV row per (method, instance) plus a mean
// row per method, all metric values on the x100 scale.
int run_compare(const std::string& data_dir, std::vector<std::string> methods, double target,
                uint64_t seed, const std::string& ckpt, const std::string& out_csv,
                RunManifest manifest) {
  Dataset ds = load_dataset(data_dir);
  if (ds.test.empty()) throw std::runtime_error("dataset has no test split");
  for (const Instance& inst : ds.test) {
    if (!inst.annotations) {
      throw MissingDataError("instance '" + inst.id + "' lacks coherence annotations; "
                             "the Imp/Coh metrics need an annotated test split");
    }
  }

  std::optional<PolicyParams> policy;
  if (!ckpt.empty()) policy = load_checkpoint(ckpt);
  const DurationWindow window = DurationWindow::from_target(target);
  const bool wants_oracle =
      std::find(methods.begin(), methods.end(), "oracle") != methods.end();

  SolverConfig scfg;
  scfg.seed = seed;
  std::vector<const Instance*> usable;
  for (const Instance& inst : ds.test) {
    if (wants_oracle && inst.size() > scfg.oracle_size_cap) continue;
    usable.push_back(&inst);
  }
  if (usable.empty()) throw std::runtime_error("no usable test instances");

  std::string csv = "method,instance,imp,coh,overall,objective,reward,tau,count\n";
  for (const std::string& method : methods) {
    std::vector<MetricReport> reports;
    double mean_obj = 0.0, mean_reward = 0.0, mean_tau = 0.0, mean_count = 0.0;
    for (const Instance* inst : usable) {
      SolverConfig per = scfg;
      per.seed = Rng::derive(seed, inst->id, 0).next_u64();  // per-instance stream
      MetricReport r;
      double obj = 0.0, reward = 0.0, tau = 0.0;
      int count = 0;
      try {
        Selection sel = run_method(method, *inst, window, per, policy ? &*policy : nullptr);
        r = impcoh_at_t(*inst, sel, window);
        obj = evaluate_objective(*inst, sel.temporal, per);
        reward = composite_reward(*inst, sel, per.reward);
        tau = sel.total_duration_s;
        count = sel.count();
      } catch (const InfeasibleInstanceError&) {
        // infeasible stays an all-zero row
      }
      reports.push_back(r);
      mean_obj += obj;
      mean_reward += reward;
      mean_tau += tau;
      mean_count += count;
      append_row(csv, method, inst->id, r, obj, reward, tau, count);
    }
    const double n = static_cast<double>(usable.size());
    append_row(csv, method, "mean", mean_report(reports), mean_obj / n, mean_reward / n,
               mean_tau / n, static_cast<int>(mean_count / n + 0.5));
  }

  fs::path out = out_csv;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream(out) << csv;
  std::cout << csv;
  std::cerr << "evaluated " << usable.size() << " of " << ds.test.size()
            << " test instances\n";
  manifest.write(out.has_parent_path() ? out.parent_path() : fs::path("."));
  return 0;
}

MetricReport greedy_test_metrics(const PolicyParams& params, const std::vector<Instance>& test,
                                 const DurationWindow& window) {
  std::vector<MetricReport> reports;
  for (const Instance& inst : test) {
    ad::Tape tape;
    PolicyNet net(tape, params);
    Rng rng(0);
    try {
      Rollout r = net.rollout(inst, window, SampleMode::kGreedy, rng);
      reports.push_back(impcoh_at_t(inst, r.selection, window));
    } catch (const InfeasibleInstanceError&) {
      reports.push_back({});
    }
  }
  return mean_report(reports);
}

// Quick on-demand finite-difference pass over the differentiation primitives;
// the full suite lives in the test binaries.
int run_gradcheck() {
  Rng rng(12345);
  auto fd = [&](auto&& build, std::vector<double> x, int out_dim) {
    ad::Tape tape;
    ad::Tensor leaf = tape.leaf(x, ad::Shape{{static_cast<int>(x.size())}});
    ad::Tensor loss = tape.sum(build(tape, leaf));
    (void)out_dim;
    tape.backward(loss);
    std::vector<double> analytic = tape.grad(leaf);
    if (analytic.empty()) analytic.assign(x.size(), 0.0);
    double max_rel = 0.0;
    const double h = 1e-6;
    for (size_t i = 0; i < x.size(); ++i) {
      auto eval = [&](double v) {
        std::vector<double> xs = x;
        xs[i] = v;
        ad::Tape t;
        ad::Tensor l = t.leaf(xs, ad::Shape{{static_cast<int>(xs.size())}});
        return t.values(t.sum(build(t, l)))[0];
      };
      const double g = (eval(x[i] + h) - eval(x[i] - h)) / (2 * h);
      const double denom = std::max({std::abs(g), std::abs(analytic[i]), 1e-6});
      max_rel = std::max(max_rel, std::abs(g - analytic[i]) / denom);
    }
    return max_rel;
  };

  std::vector<double> x(8);
  for (double& v : x) v = rng.uniform() * 2 - 1;
  std::vector<double> xpos(8);
  for (double& v : xpos) v = rng.uniform() + 0.5;

  struct Check {
    const char* name;
    double err;
  };
  std::vector<Check> checks;
  checks.push_back({"tanh(x)*sigmoid(x)+exp(x)", fd(
      [](ad::Tape& t, ad::Tensor a) {
        return t.add(t.mul(t.tanh(a), t.sigmoid(a)), t.exp(a));
      }, x, 8)});
  checks.push_back({"log(x)", fd(
      [](ad::Tape& t, ad::Tensor a) { return t.log(a); }, xpos, 8)});
  checks.push_back({"matvec chain", fd(
      [](ad::Tape& t, ad::Tensor a) {
        ad::Tensor m = t.stack_cols({t.slice(a, 0, 4), t.slice(a, 4, 4)});
        return t.matvec_t(m, t.slice(a, 2, 4));
      }, x, 2)});
  checks.push_back({"masked softmax", fd(
      [](ad::Tape& t, ad::Tensor a) {
        ad::Tensor p = t.masked_softmax(a, {0, 1, 0, 0, 1, 0, 0, 0});
        return t.mul(p, p);
      }, x, 8)});
  checks.push_back({"concat/mean", fd(
      [](ad::Tape& t, ad::Tensor a) {
        return t.mean(t.concat(t.scale(a, 1.5), t.sub(a, t.tanh(a))));
      }, x, 1)});

  bool ok = true;
  for (const Check& c : checks) {
    const bool pass = c.err < 1e-5;
    ok = ok && pass;
    std::cout << (pass ? "ok   " : "FAIL ") << c.name << "  max rel err " << c.err << "\n";
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segment-assemblage toolkit: synthetic data, solvers, policy training"};
  app.require_subcommand(1);

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  GeneratorConfig gcfg;
  std::string gen_out;
  std::string weights = "uniform";
  gen->add_option("--count", gcfg.count, "number of instances")
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", gcfg.seed, "generator seed");
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--feature-dim", gcfg.feature_dim)->check(CLI::PositiveNumber);
  gen->add_option("--mean-segments", gcfg.mean_segments)->check(CLI::PositiveNumber);
  gen->add_option("--max-segments", gcfg.max_segments, "0 = unlimited")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--test-fraction", gcfg.test_fraction)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--weights", weights, "label group weights")
      ->check(CLI::IsMember({"uniform", "fourth-power"}));

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train the pointer policy with REINFORCE");
  TrainConfig tcfg;
  PolicyConfig pcfg;
  std::string tr_data = default_data_dir();
  std::string tr_out = "run";
  bool beta_sweep = false;
  bool no_glimpse = false;
  tr->add_option("--data", tr_data, "dataset directory (default: $MSAN_DATA_DIR)");
  tr->add_option("--out", tr_out, "output directory");
  tr->add_option("--target", tcfg.target_duration_s, "target duration T in seconds")
      ->check(CLI::PositiveNumber);
  tr->add_option("--beta", tcfg.beta, "composite reward weight")->check(CLI::Range(0.0, 1.0));
  tr->add_flag("--beta-sweep", beta_sweep, "train at beta in {0.0, 0.3, 0.5, 0.7}");
  tr->add_option("--epochs", tcfg.epochs)->check(CLI::PositiveNumber);
  tr->add_option("--seed", tcfg.seed);
  tr->add_option("--batch", tcfg.batch_size)->check(CLI::PositiveNumber);
  tr->add_option("--episodes", tcfg.episodes_per_video, "rollouts per video per step")
      ->check(CLI::PositiveNumber);
  tr->add_option("--lr", tcfg.lr)->check(CLI::PositiveNumber);
  tr->add_option("--embed-dim", pcfg.embed_dim)->check(CLI::PositiveNumber);
  tr->add_option("--enc-hidden", pcfg.enc_hidden)->check(CLI::PositiveNumber);
  tr->add_flag("--no-glimpse", no_glimpse, "single-attention decoder variant");

  // ---- solve ----
  auto* so = app.add_subcommand("solve", "run one solver on one instance file");
  std::string so_method, so_instance, so_ckpt;
  double so_target = 10.0;
  uint64_t so_seed = 0;
  so->add_option("--method", so_method)
      ->required()
      ->check(CLI::IsMember({"random", "random-cut", "sam", "oracle", "policy"}));
  so->add_option("--instance", so_instance, "instance JSON file")->required();
  so->add_option("--target", so_target)->check(CLI::PositiveNumber);
  so->add_option("--ckpt", so_ckpt, "policy checkpoint");
  so->add_option("--seed", so_seed);

  // ---- eval / compare ----
  std::string ev_data = default_data_dir(), ev_ckpt, ev_out = "report.csv";
  std::vector<std::string> ev_methods;
  double ev_target = 10.0;
  uint64_t ev_seed = 0;
  auto add_eval_flags = [&](CLI::App* c, bool multi) {
    c->add_option("--data", ev_data, "dataset directory (default: $MSAN_DATA_DIR)");
    auto* m = c->add_option("--method", ev_methods, "methods to evaluate")
                  ->required()
                  ->check(CLI::IsMember({"random", "random-cut", "sam", "oracle", "policy"}));
    if (!multi) m->expected(1);
    c->add_option("--target", ev_target)->check(CLI::PositiveNumber);
    c->add_option("--seed", ev_seed);
    c->add_option("--ckpt", ev_ckpt, "policy checkpoint");
    c->add_option("--out", ev_out, "report CSV path");
  };
  auto* ev = app.add_subcommand("eval", "metric report for one method on the test split");
  add_eval_flags(ev, false);
  auto* cp = app.add_subcommand("compare", "metric table across methods on the test split");
  add_eval_flags(cp, true);

  // ---- gradcheck (hidden) ----
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the autodiff primitives");
  gc->group("");  // hidden from help

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      RunManifest man;
      man.command = "gen";
      man.seed = gcfg.seed;
      gcfg.weight_scheme =
          weights == "fourth-power" ? WeightScheme::kFourthPower : WeightScheme::kUniformQuarter;
      man.config = {{"count", gcfg.count},
                    {"feature_dim", gcfg.feature_dim},
                    {"mean_segments", gcfg.mean_segments},
                    {"max_segments", gcfg.max_segments},
                    {"test_fraction", gcfg.test_fraction},
                    {"weights", weights}};
      Dataset ds = generate(gcfg);
      save_dataset(ds, gen_out);
      man.write(gen_out);
      std::cout << "wrote " << ds.train.size() << " train + " << ds.test.size()
                << " test instances to " << gen_out << "\n";
      return 0;
    }

    if (tr->parsed()) {
      if (tr_data.empty()) {
        throw std::runtime_error("no dataset: pass --data or set MSAN_DATA_DIR");
      }
      pcfg.use_glimpse = !no_glimpse;
      Dataset ds = load_dataset(tr_data);
      if (ds.train.empty()) throw std::runtime_error("dataset has no training split");
      pcfg.feature_dim = static_cast<int>(ds.train.front().segments.front().features.size());
      const DurationWindow window = DurationWindow::from_target(tcfg.target_duration_s);

      std::vector<double> betas = beta_sweep ? std::vector<double>{0.0, 0.3, 0.5, 0.7}
                                             : std::vector<double>{tcfg.beta};
      std::string sweep_csv = "beta,final_train_reward,test_imp,test_coh,test_overall\n";
      for (double beta : betas) {
        TrainConfig cfg = tcfg;
        cfg.beta = beta;
        fs::path dir = beta_sweep
                           ? fs::path(tr_out) / ("beta_" + std::to_string(beta).substr(0, 3))
                           : fs::path(tr_out);
        RunManifest man;
        man.command = "train";
        man.seed = cfg.seed;
        man.config = {{"data", tr_data},        {"target", cfg.target_duration_s},
                      {"beta", cfg.beta},       {"epochs", cfg.epochs},
                      {"batch", cfg.batch_size}, {"episodes", cfg.episodes_per_video},
                      {"lr", cfg.lr},           {"glimpse", pcfg.use_glimpse}};
        TrainResult res = train(ds.train, pcfg, cfg, dir.string());
        res.log.write_csv((dir / "train_log.csv").string());
        man.write(dir);
        MetricReport test = ds.test.empty() ? MetricReport{}
                                            : greedy_test_metrics(res.params, ds.test, window);
        char row[160];
        std::snprintf(row, sizeof(row), "%.1f,%.10g,%.4f,%.4f,%.4f\n", beta,
                      res.log.epochs.back().mean_reward, test.imp, test.coh, test.overall);
        sweep_csv += row;
        std::cout << "beta " << beta << ": final train reward "
                  << res.log.epochs.back().mean_reward << ", test overall " << test.overall
                  << "\n";
      }
      if (beta_sweep) {
        std::ofstream(fs::path(tr_out) / "beta_sweep.csv") << sweep_csv;
        std::cout << "wrote " << (fs::path(tr_out) / "beta_sweep.csv").string() << "\n";
      }
      return 0;
    }

    if (so->parsed()) {
      Instance inst = load_instance(so_instance);
      const DurationWindow window = DurationWindow::from_target(so_target);
      SolverConfig scfg;
      scfg.seed = so_seed;
      std::optional<PolicyParams> policy;
      if (!so_ckpt.empty()) policy = load_checkpoint(so_ckpt);
      Selection sel = run_method(so_method, inst, window, scfg, policy ? &*policy : nullptr);

      json out;
      out["method"] = so_method;
      out["instance"] = inst.id;
      out["indices_temporal"] = sel.temporal;
      out["tau_s"] = sel.total_duration_s;
      out["objective_eq1"] = evaluate_objective(inst, sel.temporal, scfg);
      out["reward"] = composite_reward(inst, sel, scfg.reward);
      if (inst.annotations) {
        MetricReport r = impcoh_at_t(inst, sel, window);
        out["metrics_x100"] = {{"imp", r.imp}, {"coh", r.coh}, {"overall", r.overall}};
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (ev->parsed() || cp->parsed()) {
      if (ev_data.empty()) {
        throw std::runtime_error("no dataset: pass --data or set MSAN_DATA_DIR");
      }
      RunManifest man;
      man.command = ev->parsed() ? "eval" : "compare";
      man.seed = ev_seed;
      man.config = {{"data", ev_data}, {"methods", ev_methods}, {"target", ev_target}};
      return run_compare(ev_data, ev_methods, ev_target, ev_seed, ev_ckpt, ev_out,
                         std::move(man));
    }

    if (gc->parsed()) return run_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
