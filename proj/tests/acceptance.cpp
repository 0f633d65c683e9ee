// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
#include <lsgame/experiments.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace lsgame;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string format(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path source_dir() { return LSGAME_SOURCE_DIR; }

GameDefinition default_game() {
  return load_experiment_config((source_dir() / "configs/default.json").string()).game;
}

GameSpec regime(double gamma) { return GameSpec(default_game()).with_alpha(regime_alpha(gamma, false)); }

GameSpec gaussian_benchmark() { return load_game((source_dir() / "configs/gaussian_benchmark.json").string()); }

Vector linspace(double lo, double hi, std::size_t n) {
  Vector out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = lo + (hi - lo) * double(k) / double(n - 1);
  return out;
}

const Vector kGammas{-0.6, 0.0, 0.6};

// ---------------------------------------------------------------------------

Verdict feynman_kac() {
  const std::size_t M = 200000;
  const Vector qs = linspace(-1.0, 1.0, 11);
  std::vector<Vector> xs;
  for (double x : qs) xs.push_back({x});
  double worst = 0.0, slowest = 0.0;
  auto check = [&](const GameSpec& spec, std::size_t i, std::uint64_t seed, const Grid1D& grid) {
    const auto field = solve_linear_pde_fd(spec, i, grid);
    const auto t0 = std::chrono::steady_clock::now();
    const auto est = estimate_Z_field(spec, i, 0.0, xs, M, seed, {Quadrature::kTrapezoid, 10, 1});
    slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double z = field.value(0.0, qs[k]);
      worst = std::max(worst, std::abs(est[k].value - z) / std::max(0.01 * z, 3.0 * est[k].std_error));
    }
  };
  const auto g = gaussian_benchmark();
  check(g, 0, 101, default_grid(g, 801, 2000));
  for (double gamma : kGammas) {
    const auto spec = regime(gamma);
    const auto grid = default_grid(spec, 801, 800);
    for (std::size_t i = 0; i < 2; ++i) check(spec, i, cell_seed(42, kStageValidation, gamma, i), grid);
  }
  return {worst <= 1.0 && slowest <= 60.0,
          format("worst |MC-FD|/max(1%%,3SE) = %.3f, slowest player-regime %.1f s", worst, slowest)};
}

Verdict hjb_cancellation() {
  const auto spec = regime(0.6);
  std::vector<double> levels;
  for (std::size_t l = 0; l < 3; ++l) {
    const auto grid = default_grid(spec, 200 * (std::size_t{1} << l) + 1, 100 * (std::size_t{1} << l));
    const std::vector<ZField> fields{solve_linear_pde_fd(spec, 0, grid), solve_linear_pde_fd(spec, 1, grid)};
    double worst = 0.0;
    for (const auto& r : hjb_residual(spec, fields)) worst = std::max(worst, r.max_scaled);
    levels.push_back(worst);
  }
  const double r1 = levels[0] / levels[1], r2 = levels[1] / levels[2];
  return {r1 >= 2.0 && r2 >= 2.0 && levels[2] <= 1e-2,
          format("scaled residuals %.3g, %.3g, %.3g (ratios %.2f, %.2f)", levels[0], levels[1], levels[2], r1, r2)};
}

Verdict control_consistency() {
  const std::size_t M = 1000000;
  const Vector qs{-0.5, -0.25, 0.0, 0.25, 0.5};
  double worst_fd = 0.0, worst_ric = 0.0;
  for (double gamma : {0.6, 0.0}) {
    const auto spec = regime(gamma);
    const auto grid = default_grid(spec, 801, 800);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto field = std::make_shared<const ZField>(solve_linear_pde_fd(spec, i, grid));
      const auto model = detail::scalar_model(spec, i);
      const auto fd_policy = field_policy(field, model.g, model.ubar);
      const auto ric = solve_riccati(mixed_riccati_problem(spec, i), spec.dt());
      for (std::size_t k = 0; k < qs.size(); ++k) {
        const Vector x{qs[k]};
        const auto est = control_estimate(spec, i, 0.0, x, M, derive_seed(derive_seed(7, i, k), gamma == 0.0));
        Vector u_fd(1);
        fd_policy(0.0, x, u_fd);
        const double se = est.std_error[0];
        worst_fd = std::max(worst_fd, std::abs(est.value[0] - u_fd[0]) /
                                          std::max(0.05 * std::abs(u_fd[0]), 3.0 * se));
        if (gamma == 0.0) {
          const double u_ric = model.ubar + ric.feedback(0.0, qs[k]);
          worst_ric = std::max(worst_ric, std::abs(est.value[0] - u_ric) /
                                              std::max(0.05 * std::abs(u_ric), 3.0 * se));
        }
      }
    }
  }
  return {worst_fd <= 1.0 && worst_ric <= 1.0,
          format("worst ratio vs FD gradient %.3f, vs Riccati feedback %.3f", worst_fd, worst_ric)};
}

Verdict cost_equivalence() {
  const auto spec = regime(0.6);
  const auto res = cost_equivalence_check(spec, riccati_equilibrium_policies(spec), 50000, 4242);
  double worst = 0.0;
  std::string detail;
  for (const auto& r : res) {
    const double se = std::hypot(r.measure.std_error, r.control.std_error);
    const double gap = std::abs(r.measure.mean - r.control.mean);
    worst = std::max(worst, gap / (4.0 * se));
    detail += format("player %zu: J_measure %.5f J_control %.5f (combined SE %.2g); ", r.player + 1,
                     r.measure.mean, r.control.mean, se);
  }
  return {worst <= 1.0, detail + format("worst gap/4SE = %.3f", worst)};
}

struct SuiteRuns {
  ExperimentOutcome symmetric;
  ExperimentOutcome asymmetric;
};

ExperimentConfig suite_config(const std::string& name, const fs::path& dir) {
  auto cfg = load_experiment_config((source_dir() / "configs" / name).string());
  cfg.outputs.directory = dir.string();
  cfg.validation.enabled = false;
  cfg.sampling.workers = std::max(1u, std::thread::hardware_concurrency());
  return cfg;
}

Verdict two_perspectives(const SuiteRuns& runs) {
  double worst = 0.0;
  std::string detail;
  for (const auto& r : runs.symmetric.regimes) {
    worst = std::max(worst, r.consistency_ratio);
    detail += format("gamma %.1f ratio %.3f; ", r.gamma, r.consistency_ratio);
  }
  return {worst <= 1.0 && runs.symmetric.regimes.size() == 3, detail + "bound max(5% a, 4SE)"};
}

Verdict regime_ordering(const SuiteRuns& runs) {
  std::vector<DistancePoint> d;
  for (double gamma : {0.6, 0.0, -0.6})
    for (const auto& r : runs.symmetric.regimes)
      if (r.gamma == gamma) d.push_back(r.distance_tilted.back());
  if (d.size() != 3) return {false, "missing regimes"};
  const double gap1 = d[0].distance - d[1].distance, gap2 = d[1].distance - d[2].distance;
  const double se1 = std::hypot(d[0].std_error, d[1].std_error);
  const double se2 = std::hypot(d[1].std_error, d[2].std_error);
  return {gap1 > 4.0 * se1 && gap2 > 4.0 * se2,
          format("D(T) = %.4f > %.4f > %.4f, gaps %.1f SE and %.1f SE", d[0].distance, d[1].distance,
                 d[2].distance, gap1 / se1, gap2 / se2)};
}

Verdict asymmetric_regime(const SuiteRuns& runs) {
  double sym_z = -1.0;
  for (const auto& r : runs.symmetric.regimes)
    if (r.gamma == 0.6) sym_z = r.symmetry_z;
  const double asym_z = runs.asymmetric.regimes.at(0).symmetry_z;
  return {asym_z > 4.0 && sym_z >= 0.0 && sym_z <= 4.0,
          format("max |E1+E2|/SE: asymmetric %.2f, symmetric %.2f", asym_z, sym_z)};
}

Verdict determinism_suite(const SuiteRuns& runs) {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  // Byte-identical artifacts on rerun, also across worker counts.
  auto cfg = load_experiment_config((source_dir() / "configs/default.json").string());
  cfg.sampling.M_reference = 20000;
  cfg.sampling.M_policy = 1000;
  cfg.sampling.M_ensemble = 20;
  cfg.validation.nx = 201;
  cfg.validation.nt = 200;
  cfg.validation.paths = 5000;
  const auto base = fs::temp_directory_path() / "lsgame_acceptance_rerun";
  fs::remove_all(base);
  cfg.outputs.directory = (base / "a").string();
  const auto first = run_experiment(cfg);
  cfg.outputs.directory = (base / "b").string();
  cfg.sampling.workers = 2;
  run_experiment(cfg);
  expect(verify_manifest(base / "a") && verify_manifest(base / "b"), "manifest checksums");
  bool identical = true;
  for (const auto& e : first.manifest.files)
    identical = identical && read_file_bytes(base / "a" / e.path) == read_file_bytes(base / "b" / e.path);
  identical = identical && read_file_bytes(base / "a/manifest.json") == read_file_bytes(base / "b/manifest.json");
  expect(identical, "byte-identical rerun");
  fs::remove_all(base);

  // Weight normalization, shift invariance, ESS range, positivity.
  for (double gamma : kGammas) {
    const auto spec = regime(gamma);
    for (std::size_t i = 0; i < 2; ++i) {
      auto batch = std::make_shared<const TrajectoryBatch>(
          rollout_reference(spec, i, 0.0, spec.initial_state(), 20000, derive_seed(99, i)));
      const auto costs = path_cost(*batch, spec, i).values;
      const auto ens = weights_from_costs(batch, costs, i, 10);
      expect(std::abs(detail::compensated_sum(ens.weights) - 1.0) <= 1e-12, "weights sum to 1");
      expect(ens.ess >= 1.0 && ens.ess <= double(batch->paths()), "ESS in [1, M]");
      const auto& beta = spec.interaction();
      double beta_sum = 0.0;
      for (std::size_t j = 0; j < 2; ++j) beta_sum += beta.beta(i, j);
      Vector shifted = costs;
      for (double& s : shifted) s += 3.7 * beta_sum;
      const auto ens2 = weights_from_costs(batch, shifted, i, 10);
      double diff = 0.0;
      for (std::size_t p = 0; p < costs.size(); ++p) diff = std::max(diff, std::abs(ens.weights[p] - ens2.weights[p]));
      expect(diff <= 1e-12, "terminal-cost shift invariance");
      const auto z = estimate_from_costs(costs);
      expect(z.value > 0.0, "MC Z > 0");

      const auto field = solve_linear_pde_fd(spec, i, default_grid(spec, 201, 100));
      bool positive = true;
      for (double v : field.values) positive = positive && v > 0.0;
      expect(positive, "FD Z > 0");
    }
  }
  for (const auto* o : {&runs.symmetric, &runs.asymmetric})
    for (const auto& r : o->regimes)
      for (double ess : r.tilted_ess)
        expect(ess >= 1.0 && ess <= double(suite_config("default.json", "").sampling.M_reference),
               "suite ESS in [1, M]");

  // alpha = I locality: player 0's S ignores player 1's costs.
  auto def = default_game();
  def.alpha = {{1.0, 0.0}, {0.0, 1.0}};
  const GameSpec a(def);
  def.costs[1].running = QuadraticWellCost{5.0, ConstantCenter{{2.0}}};
  def.costs[1].terminal = QuadraticTerminalCost{9.0, ConstantCenter{{-3.0}}};
  const GameSpec b(def);
  const auto batch = rollout_reference(a, 0, 0.0, a.initial_state(), 5000, 5);
  expect(path_cost(batch, a, 0).values == path_cost(batch, b, 0).values, "alpha = I locality");

  std::string detail = failures.empty() ? "rerun identical, weights, shift, ESS, locality, positivity" : "";
  for (const auto& f : failures) detail += "failed: " + f + "; ";
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  SuiteRuns runs;
  bool suite_ok = false;
  std::string suite_error;
  auto ensure_suite = [&] {
    if (suite_ok || !suite_error.empty()) return;
    try {
      const auto dir = fs::temp_directory_path() / "lsgame_acceptance_suite";
      fs::remove_all(dir);
      runs.symmetric = run_experiment(suite_config("default.json", dir / "symmetric"));
      runs.asymmetric = run_experiment(suite_config("asymmetric.json", dir / "asymmetric"));
      fs::remove_all(dir);
      suite_ok = true;
    } catch (const std::exception& e) {
      suite_error = e.what();
    }
  };
  auto with_suite = [&](Verdict (*f)(const SuiteRuns&)) {
    return [&, f] {
      ensure_suite();
      if (!suite_ok) return Verdict{false, "experiment suite failed: " + suite_error};
      return f(runs);
    };
  };

  const std::vector<Criterion> criteria{
      {"1 feynman-kac estimator vs finite differences", feynman_kac},
      {"2 hjb residual cancellation under refinement", hjb_cancellation},
      {"3 path-integral control vs gradient and riccati", control_consistency},
      {"4 measure-form vs control-form cost", cost_equivalence},
      {"5 tilted vs closed-loop ensemble means", with_suite(two_perspectives)},
      {"6 terminal distance regime ordering", with_suite(regime_ordering)},
      {"7 asymmetric regime symmetry breaking", with_suite(asymmetric_regime)},
      {"8 determinism and invariance", [&] {
         ensure_suite();
         if (!suite_ok) return Verdict{false, "experiment suite failed: " + suite_error};
         return determinism_suite(runs);
       }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
