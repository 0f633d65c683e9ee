#pragma once

// Interaction-adjusted path costs S and Monte Carlo Feynman-Kac estimates of
// the desirability Z_i(t, x) = E_R[exp(-S)].

#include <lsgame/error.hpp>
#include <lsgame/game_model.hpp>
#include <lsgame/rng.hpp>
#include <lsgame/sde_engine.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lsgame {

enum class Quadrature { kLeftRiemann, kTrapezoid };

constexpr std::string_view to_string(Quadrature q) noexcept {
  return q == Quadrature::kLeftRiemann ? "left_riemann" : "trapezoid";
}

inline Quadrature parse_quadrature(std::string_view name) {
  if (name == "left_riemann") return Quadrature::kLeftRiemann;
  if (name == "trapezoid") return Quadrature::kTrapezoid;
  throw Error(Errc::kInvalidArgument, "unknown quadrature '" + std::string(name) + "'");
}

inline constexpr double kDefaultEssFloor = 10.0;

struct EstimatorOptions {
  Quadrature quadrature = Quadrature::kLeftRiemann;
  /// Minimum effective sample size; capped at the path count.
  double ess_floor = kDefaultEssFloor;
  unsigned workers = 1;
};

/// S_p = sum_j beta_ij [ int_t^T C^j ds + Psi_j(x_T) ] for every path.
struct PathCostVector {
  Vector values;
  std::size_t player = 0;
  Quadrature quadrature = Quadrature::kLeftRiemann;
};

struct DesirabilityEstimate {
  double value = 0.0;
  double std_error = 0.0;
  double ess = 0.0;
  std::size_t paths = 0;
  double log_value = 0.0;
};

/// Unnormalized exponential weights exp(-(S_p - min S)) with their sums.
struct ExponentialWeights {
  Vector scaled;
  double shift = 0.0;  // min S
  double sum = 0.0;
  double sum_sq = 0.0;

  [[nodiscard]] double ess() const noexcept {
    const double e = sum * sum / sum_sq;
    return std::clamp(e, 1.0, static_cast<double>(scaled.size()));
  }
  /// log of sum_p exp(-S_p)
  [[nodiscard]] double log_sum() const noexcept { return std::log(sum) - shift; }
};

inline ExponentialWeights exponential_weights(std::span<const double> costs) {
  require(!costs.empty(), Errc::kInvalidArgument, "no path costs");
  ExponentialWeights w;
  w.shift = std::numeric_limits<double>::infinity();
  for (double s : costs) {
    require(std::isfinite(s), Errc::kInvalidArgument, "path costs must be finite");
    w.shift = std::min(w.shift, s);
  }
  w.scaled.resize(costs.size());
  for (std::size_t p = 0; p < costs.size(); ++p) {
    const double v = std::exp(-(costs[p] - w.shift));
    w.scaled[p] = v;
    w.sum += v;
    w.sum_sq += v * v;
  }
  return w;
}

inline void check_ess(double ess, std::size_t paths, double floor) {
  const double effective_floor = std::min(floor, static_cast<double>(paths));
  if (ess < effective_floor)
    throw Error(Errc::kDegenerateWeights, "effective sample size " + std::to_string(ess) +
                                              " of " + std::to_string(paths) +
                                              " paths is below the floor " +
                                              std::to_string(effective_floor));
}

namespace detail {

/// beta-mixed path cost of one path. Players with beta_ij == 0 are skipped.
inline double interaction_path_cost(const GameSpec& spec, std::size_t i, const PathView& path,
                                    Quadrature quadrature) {
  const std::size_t steps = path.grid.steps;
  const double dt = path.grid.dt;
  double total = 0.0;
  for (std::size_t j = 0; j < spec.players(); ++j) {
    const double beta = spec.interaction().beta(i, j);
    if (beta == 0.0) continue;
    const auto& cost = spec.cost(j);
    double running = 0.0;
    if (quadrature == Quadrature::kLeftRiemann) {
      for (std::size_t k = 0; k < steps; ++k)
        running += cost.running(path.grid.time(k), path.state(k)) * dt;
    } else {
      double prev = cost.running(path.grid.time(0), path.state(0));
      for (std::size_t k = 0; k < steps; ++k) {
        const double next = cost.running(path.grid.time(k + 1), path.state(k + 1));
        running += 0.5 * (prev + next) * dt;
        prev = next;
      }
    }
    total += beta * (running + cost.terminal(path.state(steps)));
  }
  return total;
}

inline void check_reference_batch(const TrajectoryBatch& batch, const GameSpec& spec,
                                  std::size_t i) {
  require(i < spec.players(), Errc::kInvalidArgument, "player index out of range");
  require(batch.state_dim() == spec.state_dim(), Errc::kInvalidArgument,
          "batch state dimension does not match the game");
  require(std::abs(batch.time(batch.steps()) - spec.horizon()) <= 1e-9 * std::max(1.0, spec.horizon()),
          Errc::kInvalidArgument, "batch does not end at the horizon");
}

struct SampledCosts {
  Vector costs;
  Vector first_noise;  // paths x m, empty unless requested
};

inline SampledCosts sample_costs(const GameSpec& spec, std::size_t i, double t,
                                 std::span<const double> x, std::size_t paths, std::uint64_t seed,
                                 const EstimatorOptions& options, bool keep_first_noise) {
  const std::size_t m = spec.input_dim();
  SampledCosts out;
  out.costs.resize(paths);
  if (keep_first_noise) out.first_noise.resize(paths * m);
  stream_reference_paths(spec, i, t, x, paths, seed, RolloutOptions{options.workers, false},
                         [&](std::size_t p, const PathView& view) {
                           out.costs[p] = interaction_path_cost(spec, i, view, options.quadrature);
                           if (keep_first_noise) {
                             const auto dw = view.noise(0);
                             std::copy(dw.begin(), dw.end(), out.first_noise.begin() + p * m);
                           }
                         });
  return out;
}

}  // namespace detail

inline PathCostVector path_cost(const TrajectoryBatch& batch, const GameSpec& spec, std::size_t i,
                                Quadrature quadrature = Quadrature::kLeftRiemann) {
  detail::check_reference_batch(batch, spec, i);
  PathCostVector out{Vector(batch.paths()), i, quadrature};
  for (std::size_t p = 0; p < batch.paths(); ++p)
    out.values[p] = detail::interaction_path_cost(spec, i, batch.path(p), quadrature);
  return out;
}

/// Path costs of M fresh reference paths from (t, x) without storing them.
/// Bitwise equal to path_cost(rollout_reference(...)) with the same seed.
inline PathCostVector stream_path_costs(const GameSpec& spec, std::size_t i, double t,
                                        std::span<const double> x, std::size_t paths,
                                        std::uint64_t seed, const EstimatorOptions& options = {}) {
  require(i < spec.players(), Errc::kInvalidArgument, "player index out of range");
  auto sampled = detail::sample_costs(spec, i, t, x, paths, seed, options, false);
  return {std::move(sampled.costs), i, options.quadrature};
}

/// Z = mean exp(-S) evaluated in log space.
inline DesirabilityEstimate estimate_from_costs(std::span<const double> costs,
                                                double ess_floor = kDefaultEssFloor) {
  const auto w = exponential_weights(costs);
  const auto paths = static_cast<double>(costs.size());
  DesirabilityEstimate est;
  est.paths = costs.size();
  est.ess = w.ess();
  check_ess(est.ess, est.paths, ess_floor);
  est.log_value = w.log_sum() - std::log(paths);
  est.value = std::exp(est.log_value);
  if (!std::isfinite(est.value) || est.value <= 0.0)
    throw Error(Errc::kOverflow, "desirability exp(" + std::to_string(est.log_value) +
                                     ") is not representable");
  const double mean = w.sum / paths;
  double ss = 0.0;
  for (double v : w.scaled) ss += (v - mean) * (v - mean);
  const double sample_std = costs.size() > 1 ? std::sqrt(ss / (paths - 1.0)) : 0.0;
  est.std_error = est.value * (sample_std / mean) / std::sqrt(paths);
  return est;
}

inline DesirabilityEstimate estimate_Z(const TrajectoryBatch& batch, const GameSpec& spec,
                                       std::size_t i, const EstimatorOptions& options = {}) {
  require(!batch.has_controls(), Errc::kInvalidArgument,
          "desirability needs a reference batch, not a controlled one");
  if (const auto owner = batch.player(); owner && *owner != i) {
    const auto a = spec.nominal(*owner);
    const auto b = spec.nominal(i);
    require(std::equal(a.begin(), a.end(), b.begin(), b.end()), Errc::kInvalidArgument,
            "batch was sampled under another player's reference measure");
  }
  const auto costs = path_cost(batch, spec, i, options.quadrature);
  return estimate_from_costs(costs.values, options.ess_floor);
}

/// Independent estimates at each query state; point k uses seed derive_seed(seed, k).
inline std::vector<DesirabilityEstimate> estimate_Z_field(const GameSpec& spec, std::size_t i,
                                                          double t, const std::vector<Vector>& xs,
                                                          std::size_t paths, std::uint64_t seed,
                                                          const EstimatorOptions& options = {}) {
  std::vector<DesirabilityEstimate> out;
  out.reserve(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto costs = stream_path_costs(spec, i, t, xs[k], paths, derive_seed(seed, k), options);
    out.push_back(estimate_from_costs(costs.values, options.ess_floor));
  }
  return out;
}

}  // namespace lsgame
