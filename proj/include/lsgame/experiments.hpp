#pragma once

// Experiment suite: tilted-reference and closed-loop equilibrium ensembles
// per interaction regime, with CSV/JSON artifacts and a checksummed manifest.
//
// Experiment document:
// {
//   "game": { ...game document... },
//   "gammas": [-0.6, 0.0, 0.6],
//   "asymmetric": false,
//   "sampling": {"M_reference": 200000, "M_policy": 2000, "M_ensemble": 200,
//                "seed": 42, "quadrature": "left_riemann", "ess_floor": 10, "workers": 1},
//   "outputs": {"directory": "out", "kde_bandwidth": "auto",
//               "query_grid": {"min": -4, "max": 4, "points": 161},
//               "density_times": [0.0, 0.25, 0.5, 0.75, 1.0]},
//   "validation": {"enabled": true, "nx": 401, "nt": 400, "paths": 20000,
//                  "query_states": [-1.0, -0.5, 0.0, 0.5, 1.0]}
// }
// Only "game" and "gammas" are required.

#include <lsgame/config.hpp>
#include <lsgame/desirability.hpp>
#include <lsgame/error.hpp>
#include <lsgame/game_model.hpp>
#include <lsgame/measure_recovery.hpp>
#include <lsgame/oracles.hpp>
#include <lsgame/pi_control.hpp>
#include <lsgame/rng.hpp>
#include <lsgame/sde_engine.hpp>

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lsgame {

struct SamplingConfig {
  std::size_t M_reference = 200000;
  std::size_t M_policy = 2000;
  std::size_t M_ensemble = 200;
  std::uint64_t seed = 42;
  Quadrature quadrature = Quadrature::kLeftRiemann;
  double ess_floor = kDefaultEssFloor;
  unsigned workers = 1;
};

struct OutputConfig {
  std::string directory = "out";
  /// Fixed KDE bandwidth; empty selects Silverman's rule per time.
  std::optional<double> kde_bandwidth;
  /// Density evaluation states; empty selects a grid around the wells.
  Vector query_grid;
  /// Density snapshot times, snapped to the simulation grid; empty means 11 equally spaced.
  Vector density_times;
};

struct ValidationConfig {
  bool enabled = true;
  std::size_t nx = 401;
  std::size_t nt = 400;
  std::size_t paths = 20000;
  Vector query_states = {-1.0, -0.5, 0.0, 0.5, 1.0};
};

struct ExperimentConfig {
  GameDefinition game;
  Vector gammas;
  bool asymmetric = false;
  SamplingConfig sampling;
  OutputConfig outputs;
  ValidationConfig validation;
};

/// alpha = [[1, gamma], [gamma, 1]] or, asymmetric, [[1, -gamma], [gamma, 1]].
inline Matrix regime_alpha(double gamma, bool asymmetric) {
  return {{1.0, asymmetric ? -gamma : gamma}, {gamma, 1.0}};
}

// ============================================================================
// Config parsing
// ============================================================================

namespace detail {

inline Vector parse_grid_spec(SchemaChecker& sc, const Json& node, const std::string& path) {
  if (node.is_array()) return sc.vector(node, path);
  if (!sc.object(node, path, {"min", "max", "points"})) return {};
  double lo = 0.0, hi = 0.0;
  std::size_t points = 0;
  if (const Json* v = sc.field(node, path, "min")) lo = sc.number(*v, path + "/min");
  if (const Json* v = sc.field(node, path, "max")) hi = sc.number(*v, path + "/max");
  if (const Json* v = sc.field(node, path, "points")) points = sc.count(*v, path + "/points");
  if (!(hi > lo)) sc.fail(path, "max must exceed min");
  if (points < 2) sc.fail(path + "/points", "at least 2 points are required");
  if (!(hi > lo) || points < 2) return {};
  Vector out(points);
  for (std::size_t k = 0; k < points; ++k)
    out[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const Json& doc) {
  SchemaChecker sc;
  ExperimentConfig cfg;
  if (!sc.object(doc, "", {"game", "gammas", "asymmetric", "sampling", "outputs", "validation"}))
    sc.throw_if_failed();

  std::optional<GameDefinition> game;
  if (const Json* g = sc.field(doc, "", "game")) {
    try {
      game = parse_game_definition(*g, "/game");
    } catch (const Error& e) {
      if (e.code() != Errc::kSchemaViolation) throw;
      std::istringstream lines(e.what());
      std::string line;
      std::getline(lines, line);
      while (std::getline(lines, line)) sc.add(line.substr(line.find_first_not_of(' ')));
    }
  }
  if (const Json* g = sc.field(doc, "", "gammas")) {
    cfg.gammas = sc.vector(*g, "/gammas");
    if (g->is_array() && g->empty()) sc.fail("/gammas", "at least one gamma is required");
    for (std::size_t k = 0; k < cfg.gammas.size(); ++k)
      if (!(std::abs(cfg.gammas[k]) < 1.0))
        sc.fail("/gammas/" + std::to_string(k), "|gamma| must be < 1");
  }
  if (const Json* a = sc.field(doc, "", "asymmetric", false)) {
    if (a->is_boolean()) cfg.asymmetric = a->get<bool>();
    else sc.fail("/asymmetric", "expected a boolean");
  }
  if (const Json* s = sc.field(doc, "", "sampling", false)) {
    const std::string p = "/sampling";
    if (sc.object(*s, p, {"M_reference", "M_policy", "M_ensemble", "seed", "quadrature", "ess_floor",
                          "workers"})) {
      auto& c = cfg.sampling;
      if (const Json* v = sc.field(*s, p, "M_reference", false)) c.M_reference = sc.count(*v, p + "/M_reference");
      if (const Json* v = sc.field(*s, p, "M_policy", false)) c.M_policy = sc.count(*v, p + "/M_policy");
      if (const Json* v = sc.field(*s, p, "M_ensemble", false)) c.M_ensemble = sc.count(*v, p + "/M_ensemble");
      if (const Json* v = sc.field(*s, p, "seed", false)) {
        if (v->is_number_unsigned()) c.seed = v->get<std::uint64_t>();
        else sc.fail(p + "/seed", "expected a non-negative integer");
      }
      if (const Json* v = sc.field(*s, p, "quadrature", false)) {
        if (v->is_string() && (*v == "left_riemann" || *v == "trapezoid"))
          c.quadrature = parse_quadrature(v->get<std::string>());
        else
          sc.fail(p + "/quadrature", "expected \"left_riemann\" or \"trapezoid\"");
      }
      if (const Json* v = sc.field(*s, p, "ess_floor", false)) {
        c.ess_floor = sc.number(*v, p + "/ess_floor");
        if (!(c.ess_floor >= 1.0)) sc.fail(p + "/ess_floor", "must be >= 1");
      }
      if (const Json* v = sc.field(*s, p, "workers", false))
        c.workers = static_cast<unsigned>(sc.count(*v, p + "/workers"));
    }
  }
  if (const Json* o = sc.field(doc, "", "outputs", false)) {
    const std::string p = "/outputs";
    if (sc.object(*o, p, {"directory", "kde_bandwidth", "query_grid", "density_times"})) {
      auto& c = cfg.outputs;
      if (const Json* v = sc.field(*o, p, "directory", false)) {
        if (v->is_string() && !v->get<std::string>().empty()) c.directory = v->get<std::string>();
        else sc.fail(p + "/directory", "expected a non-empty string");
      }
      if (const Json* v = sc.field(*o, p, "kde_bandwidth", false)) {
        if (v->is_string() && *v == "auto") {
          c.kde_bandwidth.reset();
        } else if (v->is_number() && v->get<double>() > 0.0) {
          c.kde_bandwidth = v->get<double>();
        } else {
          sc.fail(p + "/kde_bandwidth", "expected \"auto\" or a positive number");
        }
      }
      if (const Json* v = sc.field(*o, p, "query_grid", false))
        c.query_grid = detail::parse_grid_spec(sc, *v, p + "/query_grid");
      if (const Json* v = sc.field(*o, p, "density_times", false))
        c.density_times = sc.vector(*v, p + "/density_times");
    }
  }
  if (const Json* v = sc.field(doc, "", "validation", false)) {
    const std::string p = "/validation";
    if (sc.object(*v, p, {"enabled", "nx", "nt", "paths", "query_states"})) {
      auto& c = cfg.validation;
      if (const Json* e = sc.field(*v, p, "enabled", false)) {
        if (e->is_boolean()) c.enabled = e->get<bool>();
        else sc.fail(p + "/enabled", "expected a boolean");
      }
      if (const Json* e = sc.field(*v, p, "nx", false)) c.nx = sc.count(*e, p + "/nx");
      if (const Json* e = sc.field(*v, p, "nt", false)) c.nt = sc.count(*e, p + "/nt");
      if (const Json* e = sc.field(*v, p, "paths", false)) c.paths = sc.count(*e, p + "/paths");
      if (const Json* e = sc.field(*v, p, "query_states", false))
        c.query_states = sc.vector(*e, p + "/query_states");
    }
  }
  sc.throw_if_failed();
  cfg.game = std::move(*game);
  // Semantic checks of the game and of every regime.
  GameSpec base(cfg.game);
  if (base.players() != 2)
    throw Error(Errc::kPlayerCountMismatch, "the experiment suite needs a 2-player game");
  for (double gamma : cfg.gammas) (void)base.with_alpha(regime_alpha(gamma, cfg.asymmetric));
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_json_file(path));
}

/// Canonical JSON of a parsed config, the input of config_hash.
inline Json experiment_config_to_json(const ExperimentConfig& cfg) {
  Json doc;
  doc["game"] = game_to_json(cfg.game);
  doc["gammas"] = cfg.gammas;
  doc["asymmetric"] = cfg.asymmetric;
  const auto& s = cfg.sampling;
  doc["sampling"] = {{"M_reference", s.M_reference}, {"M_policy", s.M_policy},
                     {"M_ensemble", s.M_ensemble}, {"seed", s.seed},
                     {"quadrature", std::string(to_string(s.quadrature))},
                     {"ess_floor", s.ess_floor}};
  const auto& o = cfg.outputs;
  doc["outputs"] = {{"query_grid", o.query_grid}, {"density_times", o.density_times}};
  if (o.kde_bandwidth) doc["outputs"]["kde_bandwidth"] = *o.kde_bandwidth;
  else doc["outputs"]["kde_bandwidth"] = "auto";
  const auto& v = cfg.validation;
  doc["validation"] = {{"enabled", v.enabled}, {"nx", v.nx}, {"nt", v.nt}, {"paths", v.paths},
                       {"query_states", v.query_states}};
  return doc;
}

// ============================================================================
// Checksums
// ============================================================================

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error(Errc::kIo, "SHA-256 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int k = 0; k < length; ++k) {
    out.push_back(kHex[digest[k] >> 4]);
    out.push_back(kHex[digest[k] & 0xF]);
  }
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ============================================================================
// Results
// ============================================================================

struct ManifestEntry {
  std::string path;
  std::string sha256;
};

struct Manifest {
  std::vector<ManifestEntry> files;
  std::string config_hash;
  std::uint64_t seed = 0;
};

struct RegimeResult {
  double gamma = 0.0;
  Matrix alpha;
  std::vector<MeanPath> tilted;      // per player
  std::vector<MeanPath> controlled;  // per player
  Vector tilted_ess;                 // per player
  std::vector<DistancePoint> distance_tilted;
  std::vector<DistancePoint> distance_controlled;
  /// max over players and times of |tilted - controlled| / max(5% a, 4 SE)
  double consistency_ratio = 0.0;
  /// max over times of |E_1 + E_2| / SE on the tilted means
  double symmetry_z = 0.0;
};

struct ExperimentOutcome {
  Manifest manifest;
  std::vector<RegimeResult> regimes;
  /// Well half-width a: the largest terminal-center distance from x0 (1 if none).
  double well_scale = 1.0;
};

/// Seed for one (stage, gamma, player) cell, independent of the gamma list.
inline std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t stage, double gamma, std::size_t player) {
  return derive_seed(derive_seed(seed, stage, std::bit_cast<std::uint64_t>(gamma)), player);
}

inline constexpr std::uint64_t kStageReference = 1;
inline constexpr std::uint64_t kStageClosedLoop = 2;
inline constexpr std::uint64_t kStageValidation = 3;

inline double well_scale(const GameSpec& spec) {
  const double x0 = spec.initial_state()[0];
  double a = 0.0;
  for (std::size_t j = 0; j < spec.players(); ++j)
    a = std::max(a, std::abs(spec.cost(j).terminal_center(0) - x0));
  return a > 0.0 ? a : 1.0;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Writes artifacts into one directory and removes them all unless committed.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::exists(dir_, ec)) {
      fs::create_directories(dir_, ec);
      if (ec) throw Error(Errc::kIo, "cannot create " + dir_.string() + ": " + ec.message());
      created_ = true;
    }
    require(fs::is_directory(dir_), Errc::kIo, dir_.string() + " is not a directory");
  }
  ArtifactWriter(const ArtifactWriter&) = delete;
  ArtifactWriter& operator=(const ArtifactWriter&) = delete;

  ~ArtifactWriter() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& name : written_) std::filesystem::remove(dir_ / name, ec);
    if (created_) std::filesystem::remove(dir_, ec);
  }

  void write(const std::string& name, const std::string& contents) {
    const auto path = dir_ / name;
    written_.push_back(name);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << contents;
    out.close();
    if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
    entries_.push_back({name, sha256_hex(contents)});
  }

  [[nodiscard]] const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  void commit() noexcept { committed_ = true; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> written_;
  std::vector<ManifestEntry> entries_;
  bool created_ = false;
  bool committed_ = false;
};

inline Vector snapped_density_times(const GameSpec& spec, const Vector& requested) {
  Vector out;
  const double T = spec.horizon();
  const std::size_t K = spec.steps();
  auto add = [&](std::size_t k) {
    const double t = T * static_cast<double>(k) / static_cast<double>(K);
    if (out.empty() || out.back() != t) out.push_back(t);
  };
  if (requested.empty()) {
    for (std::size_t a = 0; a <= 10; ++a) add((K * a + 5) / 10);
    return out;
  }
  std::vector<std::size_t> idx;
  for (double t : requested) {
    require(t >= 0.0 && t <= T * (1.0 + 1e-12), Errc::kInvalidArgument,
            "density time " + std::to_string(t) + " is outside [0, T]");
    idx.push_back(static_cast<std::size_t>(std::llround(t / T * static_cast<double>(K))));
  }
  std::sort(idx.begin(), idx.end());
  for (auto k : idx) add(k);
  return out;
}

inline Vector default_query_grid(const GameSpec& spec) {
  const double x0 = spec.initial_state()[0];
  const double g = std::abs(spec.dynamics().g(0, 0));
  const double half = well_scale(spec) + 5.0 * g * std::sqrt(spec.horizon());
  const std::size_t points = 201;
  Vector out(points);
  for (std::size_t k = 0; k < points; ++k)
    out[k] = x0 - half + 2.0 * half * static_cast<double>(k) / static_cast<double>(points - 1);
  return out;
}

inline double trapezoid_integral(const std::vector<DensityPoint>& curve) {
  double s = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k)
    s += 0.5 * (curve[k].density + curve[k - 1].density) * (curve[k].x - curve[k - 1].x);
  return s;
}

inline Json validation_for_regime(const GameSpec& spec, const ExperimentConfig& cfg, double gamma,
                                  const std::vector<MeanPath>& tilted, double a) {
  Json out;
  out["gamma"] = gamma;
  if (spec.state_dim() != 1 || spec.input_dim() != 1) {
    out["applicable"] = false;
    return out;
  }
  out["applicable"] = true;
  const auto& v = cfg.validation;
  const auto grid = default_grid(spec, v.nx, v.nt);
  FdOptions fd;
  fd.probe_points = v.query_states;
  fd.probe_points.push_back(spec.initial_state()[0]);
  EstimatorOptions est{cfg.sampling.quadrature, cfg.sampling.ess_floor, cfg.sampling.workers};
  std::vector<ZField> fields;
  Json players = Json::array();
  for (std::size_t i = 0; i < spec.players(); ++i) {
    fields.push_back(solve_linear_pde_fd(spec, i, grid, fd));
    const auto& field = fields.back();
    Json pj;
    pj["player"] = i + 1;
    std::vector<Vector> xs;
    for (double x : v.query_states) xs.push_back({x});
    const auto mc = estimate_Z_field(spec, i, 0.0, xs, v.paths,
                                     cell_seed(cfg.sampling.seed, kStageValidation, gamma, i), est);
    Json points = Json::array();
    bool all_ok = true;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double z_fd = field.value(0.0, xs[k][0]);
      const double rel = std::abs(mc[k].value - z_fd) / z_fd;
      const double tol = std::max(0.01, 3.0 * mc[k].std_error / z_fd);
      all_ok = all_ok && rel <= tol;
      points.push_back({{"x", xs[k][0]}, {"Z_mc", mc[k].value}, {"Z_mc_se", mc[k].std_error},
                        {"Z_fd", z_fd}, {"relative_error", rel}, {"tolerance", tol},
                        {"pass", rel <= tol}});
    }
    pj["monte_carlo_vs_fd"] = {{"points", points}, {"pass", all_ok}};

    const auto sol = solve_riccati(mixed_riccati_problem(spec, i), spec.dt());
    const double x0 = spec.initial_state()[0];
    const double z_ric = std::exp(-sol.value(0.0, x0));
    const double z_fd0 = field.value(0.0, x0);
    const double rel_ric = std::abs(z_ric - z_fd0) / z_fd0;
    pj["riccati_vs_fd"] = {{"x", x0}, {"Z_riccati", z_ric}, {"Z_fd", z_fd0},
                           {"relative_error", rel_ric}, {"pass", rel_ric <= 0.005}};

    const auto& tm = tilted[i];
    Vector times{spec.horizon()};
    const double m_ric = sol.mean_trajectory(x0, times)[0];
    const double m_tilt = tm.at(tm.grid.steps);
    const double se = tm.se(tm.grid.steps);
    const double tol = std::max(0.05 * a, 4.0 * se);
    pj["terminal_mean_vs_riccati"] = {{"mean_tilted", m_tilt}, {"mean_tilted_se", se},
                                      {"mean_riccati", m_ric}, {"tolerance", tol},
                                      {"pass", std::abs(m_tilt - m_ric) <= tol}};
    players.push_back(pj);
  }
  out["players"] = players;
  const auto res = hjb_residual(spec, fields);
  Json hjb = Json::array();
  for (const auto& r : res)
    hjb.push_back({{"player", r.player + 1}, {"max_abs", r.max_abs}, {"mean_abs", r.mean_abs},
                   {"scale", r.scale}, {"max_scaled", r.max_scaled}});
  out["hjb_residual"] = hjb;
  out["fd_grid"] = {{"x_min", grid.x_min}, {"x_max", grid.x_max}, {"nx", grid.nx}, {"nt", grid.nt}};
  return out;
}

}  // namespace detail

/// Runs every regime and writes the artifact set into cfg.outputs.directory.
/// On any error the files written so far are removed.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  const GameSpec base(cfg.game);
  require(base.players() == 2, Errc::kPlayerCountMismatch, "the experiment suite needs a 2-player game");
  require(!cfg.gammas.empty(), Errc::kInvalidArgument, "no gamma regimes configured");
  const auto& s = cfg.sampling;
  require(s.M_reference >= 1 && s.M_policy >= 1 && s.M_ensemble >= 2, Errc::kInvalidArgument,
          "sampling counts must be >= 1 (ensembles >= 2)");

  ExperimentOutcome outcome;
  outcome.well_scale = well_scale(base);
  const double a = outcome.well_scale;
  const Vector times = detail::snapped_density_times(base, cfg.outputs.density_times);
  const Vector query = cfg.outputs.query_grid.empty() ? detail::default_query_grid(base)
                                                      : cfg.outputs.query_grid;
  const EstimatorOptions est{s.quadrature, s.ess_floor, s.workers};

  detail::ArtifactWriter writer(cfg.outputs.directory);
  std::string densities = "gamma,player,t,x,density\n";
  std::string densities_cl = "gamma,player,t,x,density\n";
  std::string terminal = "gamma,player,t,x,density\n";
  std::string terminal_cl = "gamma,player,t,x,density\n";
  std::string distances = "gamma,t,distance\n";
  std::string distances_cl = "gamma,t,distance\n";
  std::string consistency = "gamma,player,t,mean_tilted,mean_controlled,se_combined\n";
  Json report_regimes = Json::array();
  Json validation = Json::array();
  double min_density_mass = 1.0, max_density_mass = 1.0;

  auto density_rows = [&](std::string& sink, double gamma, std::size_t player,
                          const WeightedEnsemble& ens, double t) {
    const std::size_t k = detail::time_index(ens.batch->grid(), t);
    const double h = cfg.outputs.kde_bandwidth ? *cfg.outputs.kde_bandwidth
                                               : silverman_bandwidth(ens, k);
    // A point-mass marginal (deterministic start) has no kernel width; bin it instead.
    const auto curve = h > 0.0 ? weighted_density(ens, t, query, h)
                               : weighted_density(ens, t, query, 1.0, DensityMode::kHistogram);
    const double mass = detail::trapezoid_integral(curve);
    min_density_mass = std::min(min_density_mass, mass);
    max_density_mass = std::max(max_density_mass, mass);
    for (const auto& pt : curve)
      sink += detail::fmt(gamma) + "," + std::to_string(player + 1) + "," + detail::fmt(t) + "," +
              detail::fmt(pt.x) + "," + detail::fmt(pt.density) + "\n";
  };

  for (double gamma : cfg.gammas) {
    const GameSpec spec = base.with_alpha(regime_alpha(gamma, cfg.asymmetric));
    RegimeResult r;
    r.gamma = gamma;
    r.alpha = regime_alpha(gamma, cfg.asymmetric);

    std::vector<WeightedEnsemble> tilted_ens;
    for (std::size_t i = 0; i < 2; ++i) {
      auto batch = std::make_shared<const TrajectoryBatch>(
          rollout_reference(spec, i, 0.0, spec.initial_state(), s.M_reference,
                            cell_seed(s.seed, kStageReference, gamma, i), RolloutOptions{s.workers, false}));
      tilted_ens.push_back(tilt_weights(std::move(batch), spec, i, est));
      r.tilted.push_back(weighted_mean_path(tilted_ens.back()));
      r.tilted_ess.push_back(tilted_ens.back().ess);
    }
    const auto closed = nash_closed_loop(spec, s.M_policy, s.M_ensemble,
                                         cell_seed(s.seed, kStageClosedLoop, gamma, 0),
                                         ClosedLoopOptions{est, s.workers});
    std::vector<WeightedEnsemble> closed_ens;
    for (std::size_t i = 0; i < 2; ++i) {
      auto batch = std::make_shared<const TrajectoryBatch>(closed[i]);
      r.controlled.push_back(mean_path(*batch));
      closed_ens.push_back(uniform_ensemble(std::move(batch), i));
    }

    for (std::size_t i = 0; i < 2; ++i)
      for (double t : times) {
        density_rows(densities, gamma, i, tilted_ens[i], t);
        density_rows(densities_cl, gamma, i, closed_ens[i], t);
      }
    for (std::size_t i = 0; i < 2; ++i) {
      density_rows(terminal, gamma, i, tilted_ens[i], spec.horizon());
      density_rows(terminal_cl, gamma, i, closed_ens[i], spec.horizon());
    }
    tilted_ens.clear();
    closed_ens.clear();

    r.distance_tilted = expectation_distance(r.tilted);
    r.distance_controlled = expectation_distance(r.controlled);
    for (const auto& pt : r.distance_tilted)
      distances += detail::fmt(gamma) + "," + detail::fmt(pt.t) + "," + detail::fmt(pt.distance) + "\n";
    for (const auto& pt : r.distance_controlled)
      distances_cl += detail::fmt(gamma) + "," + detail::fmt(pt.t) + "," + detail::fmt(pt.distance) + "\n";

    const std::size_t K = spec.steps();
    Json players = Json::array();
    for (std::size_t i = 0; i < 2; ++i) {
      double worst = 0.0;
      for (std::size_t k = 0; k <= K; ++k) {
        const double mt = r.tilted[i].at(k), mc = r.controlled[i].at(k);
        const double se = std::hypot(r.tilted[i].se(k), r.controlled[i].se(k));
        worst = std::max(worst, std::abs(mt - mc) / std::max(0.05 * a, 4.0 * se));
        consistency += detail::fmt(gamma) + "," + std::to_string(i + 1) + "," +
                       detail::fmt(r.tilted[i].grid.time(k)) + "," + detail::fmt(mt) + "," +
                       detail::fmt(mc) + "," + detail::fmt(se) + "\n";
      }
      r.consistency_ratio = std::max(r.consistency_ratio, worst);
      players.push_back({{"player", i + 1},
                         {"tilted_ess", r.tilted_ess[i]},
                         {"terminal_mean_tilted", r.tilted[i].at(K)},
                         {"terminal_mean_tilted_se", r.tilted[i].se(K)},
                         {"terminal_mean_controlled", r.controlled[i].at(K)},
                         {"terminal_mean_controlled_se", r.controlled[i].se(K)},
                         {"consistency_ratio", worst}});
    }
    for (std::size_t k = 0; k <= K; ++k) {
      const double sum = r.tilted[0].at(k) + r.tilted[1].at(k);
      const double se = std::hypot(r.tilted[0].se(k), r.tilted[1].se(k));
      if (se > 0.0) r.symmetry_z = std::max(r.symmetry_z, std::abs(sum) / se);
    }
    Json regime;
    regime["gamma"] = gamma;
    regime["alpha"] = r.alpha;
    regime["players"] = players;
    regime["terminal_distance_tilted"] = r.distance_tilted.back().distance;
    regime["terminal_distance_tilted_se"] = r.distance_tilted.back().std_error;
    regime["terminal_distance_controlled"] = r.distance_controlled.back().distance;
    regime["terminal_distance_controlled_se"] = r.distance_controlled.back().std_error;
    regime["consistency_ratio"] = r.consistency_ratio;
    regime["consistency_pass"] = r.consistency_ratio <= 1.0;
    regime["symmetry_statistic_max_z"] = r.symmetry_z;
    report_regimes.push_back(regime);

    if (cfg.validation.enabled) validation.push_back(detail::validation_for_regime(spec, cfg, gamma, r.tilted, a));
    outcome.regimes.push_back(std::move(r));
  }

  // Distance ordering across regimes, ascending in gamma.
  std::vector<const RegimeResult*> sorted;
  for (const auto& r : outcome.regimes) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const RegimeResult* x, const RegimeResult* y) { return x->gamma < y->gamma; });
  Json ordering = Json::array();
  bool ordered = true;
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    const auto& lo = sorted[k - 1]->distance_tilted.back();
    const auto& hi = sorted[k]->distance_tilted.back();
    const double gap = hi.distance - lo.distance;
    const double se = std::hypot(hi.std_error, lo.std_error);
    const bool ok = gap > 4.0 * se;
    ordered = ordered && ok;
    ordering.push_back({{"gamma_low", sorted[k - 1]->gamma}, {"gamma_high", sorted[k]->gamma},
                        {"gap", gap}, {"se_combined", se}, {"pass", ok}});
  }

  const Json canonical = experiment_config_to_json(cfg);
  outcome.manifest.config_hash = sha256_hex(canonical.dump());
  outcome.manifest.seed = s.seed;

  Json report;
  report["well_scale"] = a;
  report["asymmetric"] = cfg.asymmetric;
  report["regimes"] = report_regimes;
  report["distance_ordering"] = {{"pairs", ordering}, {"pass", ordered}};
  report["density_mass"] = {{"min", min_density_mass}, {"max", max_density_mass}};
  report["config"] = canonical;

  writer.write("densities.csv", densities);
  writer.write("densities_closed_loop.csv", densities_cl);
  writer.write("terminal_densities.csv", terminal);
  writer.write("terminal_densities_closed_loop.csv", terminal_cl);
  writer.write("distances.csv", distances);
  writer.write("distances_closed_loop.csv", distances_cl);
  writer.write("consistency.csv", consistency);
  if (cfg.validation.enabled) writer.write("validation.json", validation.dump(2) + "\n");
  writer.write("report.json", report.dump(2) + "\n");

  outcome.manifest.files = writer.entries();
  Json manifest;
  manifest["files"] = Json::array();
  for (const auto& e : outcome.manifest.files)
    manifest["files"].push_back({{"path", e.path}, {"sha256", e.sha256}});
  manifest["config_hash"] = outcome.manifest.config_hash;
  manifest["seed"] = outcome.manifest.seed;
  writer.write("manifest.json", manifest.dump(2) + "\n");
  writer.commit();
  return outcome;
}

/// Re-reads every manifest entry and compares checksums.
inline bool verify_manifest(const std::filesystem::path& directory) {
  const Json m = Json::parse(read_file_bytes(directory / "manifest.json"));
  for (const auto& e : m.at("files")) {
    const auto path = directory / e.at("path").get<std::string>();
    if (!std::filesystem::exists(path)) return false;
    if (sha256_hex(read_file_bytes(path)) != e.at("sha256").get<std::string>()) return false;
  }
  return true;
}

}  // namespace lsgame
