// Command-line front end. Exit codes: 0 success, 1 validation or usage
// failure, 2 runtime or numerical failure.

#include <lsgame/config.hpp>
#include <lsgame/desirability.hpp>
#include <lsgame/experiments.hpp>
#include <lsgame/measure_recovery.hpp>
#include <lsgame/oracles.hpp>
#include <lsgame/pi_control.hpp>
#include <lsgame/sde_engine.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace lsgame;

constexpr const char* kSchemaHelp = R"(Game document fields:
  players, horizon, dt, initial_state,
  dynamics: {drift: {type: zero|constant|linear, A, b},
             diffusion: {type: scalar|matrix, sigma, g}},
  costs: [{running: {type: zero|quadratic_well, q, center},
           terminal: {type: zero|quadratic, q_T, center}}],
  center: {type: constant|linear, c},
  nominal_controls: [{type: zero|constant, u}],
  alpha: [[...]], cond_bound (optional)
Experiment document: {game, gammas, asymmetric, sampling, outputs, validation}.
)";

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  bool quiet = false;
};

struct GameFlags {
  std::optional<double> gamma;
  bool asymmetric = false;
  std::size_t player = 1;
};

void add_game_flags(CLI::App* cmd, GameFlags& f) {
  cmd->add_option("--gamma", f.gamma, "override alpha with the 2-player regime gamma");
  cmd->add_flag("--asymmetric", f.asymmetric, "with --gamma, use alpha = [[1, -gamma], [gamma, 1]]");
  cmd->add_option("--player", f.player, "player number (1-based)")->check(CLI::PositiveNumber);
}

Json load_document(const std::string& path) {
  require(!path.empty(), Errc::kInvalidArgument, "--config is required");
  return read_json_file(path);
}

bool is_experiment_document(const Json& doc) { return doc.is_object() && doc.contains("game"); }

GameSpec load_spec(const Globals& g, const GameFlags& f) {
  const Json doc = load_document(g.config);
  GameSpec spec = is_experiment_document(doc) ? GameSpec(parse_experiment_config(doc).game)
                                              : parse_game(doc);
  if (f.gamma) {
    require(spec.players() == 2, Errc::kInvalidArgument, "--gamma needs a 2-player game");
    require(std::abs(*f.gamma) < 1.0, Errc::kInvalidArgument, "|gamma| must be < 1");
    spec = spec.with_alpha(regime_alpha(*f.gamma, f.asymmetric));
  }
  require(f.player >= 1 && f.player <= spec.players(), Errc::kInvalidArgument,
          "--player must be between 1 and " + std::to_string(spec.players()));
  return spec;
}

/// Writes to --out when given, stdout otherwise.
void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(g.out, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(Errc::kIo, "cannot write " + g.out);
  if (!g.quiet) std::cerr << "wrote " << g.out << "\n";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string join(const Vector& v) {
  std::string s = "[";
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt(v[k]);
  return s + "]";
}

Vector state_or_initial(const GameSpec& spec, const Vector& x) {
  if (x.empty()) return Vector(spec.initial_state().begin(), spec.initial_state().end());
  require(x.size() == spec.state_dim(), Errc::kInvalidArgument,
          "--x needs " + std::to_string(spec.state_dim()) + " coordinates");
  return x;
}

EstimatorOptions estimator_options(const std::string& quadrature) {
  EstimatorOptions o;
  o.quadrature = parse_quadrature(quadrature);
  o.workers = default_workers();
  return o;
}

/// Z(0, x) for zero drift and nominal control, no mixed running cost and a
/// quadratic mixed terminal cost; empty when these conditions do not hold.
std::optional<double> gaussian_closed_form(const GameSpec& spec, std::size_t i, double x) {
  const auto model = detail::scalar_model(spec, i);
  if (model.A != 0.0 || model.b != 0.0 || model.ubar != 0.0) return std::nullopt;
  for (double t : {0.0, 0.5 * spec.horizon(), spec.horizon()}) {
    const auto f = detail::mixed_running_form(spec, i, t);
    if (f.Q != 0.0 || f.L != 0.0 || f.K != 0.0) return std::nullopt;
  }
  const auto f = detail::mixed_terminal_form(spec, i);
  const double s2 = model.g * model.g * spec.horizon();
  const double d = 1.0 + f.Q * s2;
  if (!(d > 0.0)) return std::nullopt;
  const double e = f.L - f.Q * x;
  return std::exp(e * e * s2 / (2.0 * d) - 0.5 * f.Q * x * x + f.L * x - f.K) / std::sqrt(d);
}

int cmd_validate(const Globals& g, const std::string& positional) {
  const std::string path = positional.empty() ? g.config : positional;
  const Json doc = load_document(path);
  if (is_experiment_document(doc)) {
    const auto cfg = parse_experiment_config(doc);
    if (!g.quiet)
      std::cout << "valid experiment configuration: " << cfg.gammas.size() << " regime(s), "
                << GameSpec(cfg.game).players() << " players\n";
  } else {
    const auto spec = parse_game(doc);
    if (!g.quiet)
      std::cout << "valid game: " << spec.players() << " player(s), state dimension "
                << spec.state_dim() << ", " << spec.steps() << " steps\n";
  }
  return 0;
}

int cmd_sample(const Globals& g, const GameFlags& f, double t, const Vector& x) {
  const auto spec = load_spec(g, f);
  const auto batch = rollout_reference(spec, f.player - 1, t, state_or_initial(spec, x),
                                       g.paths.value_or(100), g.seed.value_or(42),
                                       RolloutOptions{default_workers(), false});
  std::ostringstream os;
  write_csv(os, batch);
  emit(g, os.str());
  return 0;
}

int cmd_desirability(const Globals& g, const GameFlags& f, double t, const Vector& xs,
                     const std::string& quadrature) {
  const auto spec = load_spec(g, f);
  require(xs.empty() || spec.state_dim() == 1, Errc::kInvalidArgument,
          "--x lists scalar query states; use a 1-D game");
  std::vector<Vector> points;
  if (xs.empty()) points.push_back(state_or_initial(spec, {}));
  for (double x : xs) points.push_back({x});
  const auto est = estimate_Z_field(spec, f.player - 1, t, points, g.paths.value_or(100000),
                                    g.seed.value_or(42), estimator_options(quadrature));
  std::string out = "x,Z,std_error,ess,log_Z\n";
  for (std::size_t k = 0; k < points.size(); ++k)
    out += fmt(points[k][0]) + "," + fmt(est[k].value) + "," + fmt(est[k].std_error) + "," +
           fmt(est[k].ess) + "," + fmt(est[k].log_value) + "\n";
  emit(g, out);
  return 0;
}

int cmd_control(const Globals& g, const GameFlags& f, double t, const Vector& x,
                const std::string& quadrature) {
  const auto spec = load_spec(g, f);
  const auto est = control_estimate(spec, f.player - 1, t, state_or_initial(spec, x),
                                    g.paths.value_or(100000), g.seed.value_or(42),
                                    estimator_options(quadrature));
  const auto ubar = spec.nominal(f.player - 1);
  emit(g, "u = " + join(est.value) + "\nstd_error = " + join(est.std_error) + "\nnominal = " +
              join(Vector(ubar.begin(), ubar.end())) + "\ness = " + fmt(est.ess) +
              "\npaths = " + std::to_string(est.paths) + "\n");
  return 0;
}

int cmd_reweight(const Globals& g, const GameFlags& f, const std::string& quadrature) {
  const auto spec = load_spec(g, f);
  const std::size_t i = f.player - 1;
  auto batch = std::make_shared<const TrajectoryBatch>(
      rollout_reference(spec, i, 0.0, spec.initial_state(), g.paths.value_or(100000),
                        g.seed.value_or(42), RolloutOptions{default_workers(), false}));
  const auto ens = tilt_weights(batch, spec, i, estimator_options(quadrature));
  const auto mean = weighted_mean_path(ens);
  double w_max = 0.0, total = 0.0;
  for (double w : ens.weights) {
    w_max = std::max(w_max, w);
    total += w;
  }
  const std::size_t K = mean.grid.steps;
  Json out = {{"player", f.player},
              {"paths", batch->paths()},
              {"ess", ens.ess},
              {"max_weight", w_max},
              {"weight_sum", total},
              {"terminal_mean", Vector(mean.mean.begin() + K * mean.n, mean.mean.end())},
              {"terminal_mean_se", Vector(mean.std_error.begin() + K * mean.n, mean.std_error.end())}};
  emit(g, out.dump(2) + "\n");
  return 0;
}

int cmd_oracle(const Globals& g, const GameFlags& f, std::size_t nx, std::size_t nt) {
  const auto spec = load_spec(g, f);
  const double x0 = spec.initial_state()[0];
  const auto grid = default_grid(spec, nx, nt);
  std::vector<ZField> fields;
  Json players = Json::array();
  for (std::size_t i = 0; i < spec.players(); ++i) {
    FdOptions opts;
    opts.probe_points = {x0};
    fields.push_back(solve_linear_pde_fd(spec, i, grid, opts));
    const double z_fd = fields.back().value(0.0, x0);
    const auto sol = solve_riccati(mixed_riccati_problem(spec, i), spec.dt());
    const double z_ric = std::exp(-sol.value(0.0, x0));
    Json pj = {{"player", i + 1}, {"x", x0}, {"Z_fd", z_fd}, {"Z_riccati", z_ric},
               {"fd_vs_riccati_relative", std::abs(z_fd - z_ric) / z_ric},
               {"riccati_feedback_at_x0", sol.feedback(0.0, x0)},
               {"fd_control_at_x0", spec.nominal(i)[0] + spec.dynamics().g(0, 0) *
                                                             fields.back().log_gradient(0.0, x0)}};
    if (const auto exact = gaussian_closed_form(spec, i, x0)) {
      pj["Z_closed_form"] = *exact;
      pj["fd_relative_error"] = std::abs(z_fd - *exact) / *exact;
    }
    players.push_back(pj);
  }
  Json hjb = Json::array();
  for (const auto& r : hjb_residual(spec, fields))
    hjb.push_back({{"player", r.player + 1}, {"max_abs", r.max_abs}, {"max_scaled", r.max_scaled}});
  Json out = {{"grid", {{"x_min", grid.x_min}, {"x_max", grid.x_max}, {"nx", nx}, {"nt", nt}}},
              {"players", players},
              {"hjb_residual", hjb}};
  emit(g, out.dump(2) + "\n");
  return 0;
}

int cmd_experiment(const Globals& g) {
  auto cfg = parse_experiment_config(load_document(g.config));
  if (!g.out.empty()) cfg.outputs.directory = g.out;
  if (g.seed) cfg.sampling.seed = *g.seed;
  if (g.paths) cfg.sampling.M_reference = *g.paths;
  if (cfg.sampling.workers == 1) cfg.sampling.workers = default_workers();
  const auto outcome = run_experiment(cfg);
  if (!g.quiet) {
    std::cout << "gamma  D_tilted(T)  D_controlled(T)  consistency_ratio  symmetry_z\n";
    for (const auto& r : outcome.regimes) {
      std::printf("%5.2f  %11.5f  %15.5f  %17.3f  %10.2f\n", r.gamma, r.distance_tilted.back().distance,
                  r.distance_controlled.back().distance, r.consistency_ratio, r.symmetry_z);
    }
    std::cout << "artifacts in " << cfg.outputs.directory << " (" << outcome.manifest.files.size()
              << " files + manifest.json)\n";
  }
  return 0;
}

int cmd_equivalence(const Globals& g, const GameFlags& f, const std::string& policy_kind,
                    std::size_t policy_paths) {
  const auto spec = load_spec(g, f);
  const std::uint64_t seed = g.seed.value_or(42);
  std::vector<FeedbackPolicy> policies;
  if (policy_kind == "riccati") {
    policies = riccati_equilibrium_policies(spec);
  } else if (policy_kind == "nominal") {
    for (std::size_t i = 0; i < spec.players(); ++i) policies.push_back(nominal_policy(spec, i));
  } else if (policy_kind == "pi") {
    for (std::size_t i = 0; i < spec.players(); ++i)
      policies.push_back(make_pi_policy(spec, i, policy_paths, derive_seed(seed, 7, i)));
  } else {
    throw Error(Errc::kInvalidArgument, "--policy must be pi, riccati or nominal");
  }
  const auto res = cost_equivalence_check(spec, policies, g.paths.value_or(2000),
                                          derive_seed(seed, 8), default_workers());
  std::string out = "player,J_measure,J_measure_se,J_control,J_control_se,difference,difference_se\n";
  for (const auto& r : res)
    out += std::to_string(r.player + 1) + "," + fmt(r.measure.mean) + "," + fmt(r.measure.std_error) +
           "," + fmt(r.control.mean) + "," + fmt(r.control.std_error) + "," + fmt(r.difference.mean) +
           "," + fmt(r.difference.std_error) + "\n";
  emit(g, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linearly solvable stochastic differential games"};
  app.footer(kSchemaHelp);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "game or experiment JSON");
  app.add_option("--out", g.out, "output file (directory for experiment)");
  app.add_option("--seed", g.seed, "64-bit seed");
  app.add_option("--paths", g.paths, "Monte Carlo path count")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  GameFlags f;
  double t = 0.0;
  Vector x;
  std::string quadrature = "left_riemann";
  std::string positional;
  std::size_t nx = 801, nt = 2000, policy_paths = 1000;
  std::string policy_kind = "pi";

  auto* validate = app.add_subcommand("validate", "schema check of a game or experiment document");
  validate->add_option("file", positional, "document to check (defaults to --config)");

  auto* sample = app.add_subcommand("sample", "reference rollouts to CSV");
  auto* desirability = app.add_subcommand("desirability", "Monte Carlo Z at query states");
  auto* control = app.add_subcommand("control", "single path-integral control query");
  auto* reweight = app.add_subcommand("reweight", "tilted reference ensemble statistics");
  auto* oracle = app.add_subcommand("oracle", "finite-difference and Riccati solves with comparison");
  auto* experiment = app.add_subcommand("experiment", "full regime suite with artifacts");
  auto* equivalence = app.add_subcommand("equivalence", "measure-form vs control-form cost check");

  for (auto* cmd : {sample, desirability, control, reweight, oracle, equivalence}) {
    add_game_flags(cmd, f);
    // Global flags are also accepted after the subcommand name.
    cmd->fallthrough();
  }
  validate->fallthrough();
  experiment->fallthrough();
  for (auto* cmd : {sample, desirability, control}) {
    cmd->add_option("--t", t, "start time");
    cmd->add_option("--x", x, "state (desirability: list of scalar query states)")->delimiter(',');
  }
  for (auto* cmd : {desirability, control, reweight})
    cmd->add_option("--quadrature", quadrature, "left_riemann or trapezoid");
  oracle->add_option("--nx", nx, "grid points")->check(CLI::Range(3, 1000000));
  oracle->add_option("--nt", nt, "time steps")->check(CLI::PositiveNumber);
  equivalence->add_option("--policy", policy_kind, "pi, riccati or nominal");
  equivalence->add_option("--policy-paths", policy_paths, "paths per path-integral control query")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << kSchemaHelp;
    return code == 0 ? 0 : 1;
  }

  try {
    if (*validate) return cmd_validate(g, positional);
    if (*sample) return cmd_sample(g, f, t, x);
    if (*desirability) return cmd_desirability(g, f, t, x, quadrature);
    if (*control) return cmd_control(g, f, t, x, quadrature);
    if (*reweight) return cmd_reweight(g, f, quadrature);
    if (*oracle) return cmd_oracle(g, f, nx, nt);
    if (*experiment) return cmd_experiment(g);
    if (*equivalence) return cmd_equivalence(g, f, policy_kind, policy_paths);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_validation() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
