#pragma once

// Path-integral feedback control: the optimal correction u* - ubar is the
// exp(-S)-weighted mean of the first reference noise increment, divided by dt.

#include <lsgame/desirability.hpp>
#include <lsgame/error.hpp>
#include <lsgame/game_model.hpp>
#include <lsgame/rng.hpp>
#include <lsgame/sde_engine.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lsgame {

struct ControlEstimate {
  Vector value;
  Vector std_error;
  double ess = 0.0;
  std::size_t paths = 0;
};

inline ControlEstimate control_from_samples(std::span<const double> costs,
                                            std::span<const double> first_noise,
                                            std::span<const double> ubar, double dt,
                                            double ess_floor) {
  const std::size_t paths = costs.size();
  const std::size_t m = ubar.size();
  require(first_noise.size() == paths * m, Errc::kInvalidArgument,
          "first-noise array does not match the path count");
  const auto w = exponential_weights(costs);
  ControlEstimate est;
  est.paths = paths;
  est.ess = w.ess();
  check_ess(est.ess, paths, ess_floor);
  est.value.assign(m, 0.0);
  est.std_error.assign(m, 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    double acc = 0.0;
    for (std::size_t p = 0; p < paths; ++p) acc += w.scaled[p] * first_noise[p * m + c];
    const double mean = acc / w.sum;
    double var = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
      const double wn = w.scaled[p] / w.sum;
      const double d = first_noise[p * m + c] - mean;
      var += wn * wn * d * d;
    }
    est.value[c] = ubar[c] + mean / dt;
    est.std_error[c] = std::sqrt(var) / dt;
  }
  return est;
}

/// One-step path-integral estimate of u_i*(t, x) from M fresh reference paths.
inline ControlEstimate control_estimate(const GameSpec& spec, std::size_t i, double t,
                                        std::span<const double> x, std::size_t paths,
                                        std::uint64_t seed, const EstimatorOptions& options = {}) {
  require(i < spec.players(), Errc::kInvalidArgument, "player index out of range");
  if (t >= spec.horizon() - 1e-12 * spec.horizon())
    throw Error(Errc::kHorizonExhausted, "no control is defined at t >= T");
  const auto sampled = detail::sample_costs(spec, i, t, x, paths, seed, options, true);
  return control_from_samples(sampled.costs, sampled.first_noise, spec.nominal(i), spec.dt(),
                              options.ess_floor);
}

/// Hash of the state quantized to 1e-9, for per-query seeds.
inline std::uint64_t quantized_state_hash(std::span<const double> x) {
  std::uint64_t h = 0x51A7E5EEDull;
  for (double v : x) {
    const double q = std::clamp(v / 1e-9, -9.0e18, 9.0e18);
    h = mix64(h ^ static_cast<std::uint64_t>(std::llround(q)));
  }
  return h;
}

/// Closed-loop policy that runs control_estimate at every query. The query
/// seed is derived from (seed, grid index of t, quantized x), so identical
/// queries give identical controls.
inline FeedbackPolicy make_pi_policy(const GameSpec& spec, std::size_t i, std::size_t paths,
                                     std::uint64_t seed, const EstimatorOptions& options = {}) {
  require(i < spec.players(), Errc::kInvalidArgument, "player index out of range");
  require(paths >= 1, Errc::kInvalidArgument, "path count must be >= 1");
  auto shared = std::make_shared<const GameSpec>(spec);
  auto evaluator = [shared, i, paths, seed, options](double t, std::span<const double> x,
                                                     std::span<double> u) {
    const auto t_index = static_cast<std::uint64_t>(grid_index(*shared, t));
    const std::uint64_t query_seed = derive_seed(seed, t_index, quantized_state_hash(x));
    try {
      const auto est = control_estimate(*shared, i, t, x, paths, query_seed, options);
      std::copy(est.value.begin(), est.value.end(), u.begin());
    } catch (const Error& e) {
      std::string where = "player " + std::to_string(i + 1) + " at t=" + std::to_string(t) + ", x=(";
      for (std::size_t d = 0; d < x.size(); ++d) where += (d ? "," : "") + std::to_string(x[d]);
      throw Error(e.code(), e.message() + " [policy query: " + where + ")]");
    }
  };
  return {std::move(evaluator), "path-integral(player=" + std::to_string(i) + ", M=" +
                                    std::to_string(paths) + ", seed=" + std::to_string(seed) +
                                    ")"};
}

struct ClosedLoopOptions {
  EstimatorOptions estimator{};
  /// Parallelism over ensemble paths; policy queries then run single-threaded.
  unsigned workers = 1;
};

/// Equilibrium ensembles: each player's paths from x0 under its own
/// path-integral policy. The linearized problems are decoupled, so players
/// are simulated independently.
inline std::vector<TrajectoryBatch> nash_closed_loop(const GameSpec& spec, std::size_t policy_paths,
                                                     std::size_t ensemble_paths, std::uint64_t seed,
                                                     const ClosedLoopOptions& options = {}) {
  EstimatorOptions inner = options.estimator;
  if (options.workers > 1) inner.workers = 1;
  std::vector<TrajectoryBatch> out;
  out.reserve(spec.players());
  for (std::size_t i = 0; i < spec.players(); ++i) {
    const auto policy = make_pi_policy(spec, i, policy_paths, derive_seed(seed, 1, i), inner);
    out.push_back(rollout_controlled(spec, i, policy, 0.0, spec.initial_state(), ensemble_paths,
                                     derive_seed(seed, 2, i), RolloutOptions{options.workers, false}));
  }
  return out;
}

}  // namespace lsgame
