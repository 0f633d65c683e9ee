#pragma once

// Optimal path measures by exponential tilting of reference ensembles,
// Girsanov log-likelihood ratios, and the empirical check that the
// measure-form and control-form costs agree.

#include <lsgame/desirability.hpp>
#include <lsgame/error.hpp>
#include <lsgame/game_model.hpp>
#include <lsgame/parallel.hpp>
#include <lsgame/rng.hpp>
#include <lsgame/sde_engine.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace lsgame {

/// Reference batch plus normalized weights exp(-S_p) / sum_q exp(-S_q).
struct WeightedEnsemble {
  std::shared_ptr<const TrajectoryBatch> batch;
  Vector weights;
  Vector log_weights;
  std::size_t player = 0;
  double ess = 0.0;
};

namespace detail {

/// Neumaier-compensated sum.
inline double compensated_sum(std::span<const double> v) {
  double sum = 0.0, comp = 0.0;
  for (double x : v) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

inline std::size_t time_index(const TimeGrid& grid, double t) {
  const double pos = (t - grid.t0) / grid.dt;
  const auto k = std::llround(pos);
  require(k >= 0 && static_cast<std::size_t>(k) <= grid.steps &&
              std::abs(pos - static_cast<double>(k)) <= 1e-9 * std::max(1.0, std::abs(pos)),
          Errc::kInvalidArgument, "time " + std::to_string(t) + " is not on the batch grid");
  return static_cast<std::size_t>(k);
}

}  // namespace detail

/// Normalizes weights from path costs; throws DegenerateWeights below the floor.
inline WeightedEnsemble weights_from_costs(std::shared_ptr<const TrajectoryBatch> batch,
                                           std::span<const double> costs, std::size_t player,
                                           double ess_floor = kDefaultEssFloor) {
  require(batch && costs.size() == batch->paths(), Errc::kInvalidArgument,
          "one path cost per batch path is required");
  const auto w = exponential_weights(costs);
  const double total = detail::compensated_sum(w.scaled);
  const double log_total = std::log(total);
  WeightedEnsemble out;
  out.batch = std::move(batch);
  out.player = player;
  out.weights.resize(costs.size());
  out.log_weights.resize(costs.size());
  double sum_sq = 0.0;
  for (std::size_t p = 0; p < costs.size(); ++p) {
    out.weights[p] = w.scaled[p] / total;
    out.log_weights[p] = -(costs[p] - w.shift) - log_total;
    sum_sq += out.weights[p] * out.weights[p];
  }
  out.ess = std::clamp(1.0 / sum_sq, 1.0, static_cast<double>(costs.size()));
  check_ess(out.ess, costs.size(), ess_floor);
  return out;
}

inline WeightedEnsemble tilt_weights(std::shared_ptr<const TrajectoryBatch> batch,
                                     const GameSpec& spec, std::size_t i,
                                     const EstimatorOptions& options = {}) {
  require(batch != nullptr, Errc::kInvalidArgument, "null batch");
  require(!batch->has_controls(), Errc::kInvalidArgument,
          "tilting needs a reference batch, not a controlled one");
  const auto costs = path_cost(*batch, spec, i, options.quadrature);
  return weights_from_costs(std::move(batch), costs.values, i, options.ess_floor);
}

/// Equal weights 1/M, for closed-loop ensembles that already sample P*.
inline WeightedEnsemble uniform_ensemble(std::shared_ptr<const TrajectoryBatch> batch,
                                         std::size_t player = 0) {
  require(batch != nullptr, Errc::kInvalidArgument, "null batch");
  const auto m = static_cast<double>(batch->paths());
  WeightedEnsemble out;
  out.batch = std::move(batch);
  out.player = player;
  out.weights.assign(out.batch->paths(), 1.0 / m);
  out.log_weights.assign(out.batch->paths(), -std::log(m));
  out.ess = m;
  return out;
}

// ============================================================================
// Moments and densities
// ============================================================================

/// Per-grid-time mean state with its Monte Carlo standard error.
struct MeanPath {
  TimeGrid grid;
  std::size_t n = 0;
  Vector mean;       // (steps + 1) * n
  Vector std_error;  // (steps + 1) * n

  [[nodiscard]] double at(std::size_t k, std::size_t d = 0) const { return mean[k * n + d]; }
  [[nodiscard]] double se(std::size_t k, std::size_t d = 0) const { return std_error[k * n + d]; }
};

/// Self-normalized weighted mean; SE^2 = sum_p w_p^2 (x_p - mean)^2.
inline MeanPath weighted_mean_path(const WeightedEnsemble& ens) {
  const auto& b = *ens.batch;
  const std::size_t n = b.state_dim(), rows = b.steps() + 1;
  MeanPath out{b.grid(), n, Vector(rows * n, 0.0), Vector(rows * n, 0.0)};
  for (std::size_t p = 0; p < b.paths(); ++p)
    for (std::size_t k = 0; k < rows; ++k) {
      const auto x = b.state(p, k);
      for (std::size_t d = 0; d < n; ++d) out.mean[k * n + d] += ens.weights[p] * x[d];
    }
  for (std::size_t p = 0; p < b.paths(); ++p)
    for (std::size_t k = 0; k < rows; ++k) {
      const auto x = b.state(p, k);
      for (std::size_t d = 0; d < n; ++d) {
        const double e = ens.weights[p] * (x[d] - out.mean[k * n + d]);
        out.std_error[k * n + d] += e * e;
      }
    }
  for (double& v : out.std_error) v = std::sqrt(v);
  return out;
}

/// Plain sample mean with SE = s / sqrt(M).
inline MeanPath mean_path(const TrajectoryBatch& b) {
  const std::size_t n = b.state_dim(), rows = b.steps() + 1;
  const auto m = static_cast<double>(b.paths());
  MeanPath out{b.grid(), n, Vector(rows * n, 0.0), Vector(rows * n, 0.0)};
  for (std::size_t p = 0; p < b.paths(); ++p)
    for (std::size_t k = 0; k < rows; ++k) {
      const auto x = b.state(p, k);
      for (std::size_t d = 0; d < n; ++d) out.mean[k * n + d] += x[d];
    }
  for (double& v : out.mean) v /= m;
  if (b.paths() > 1) {
    for (std::size_t p = 0; p < b.paths(); ++p)
      for (std::size_t k = 0; k < rows; ++k) {
        const auto x = b.state(p, k);
        for (std::size_t d = 0; d < n; ++d) {
          const double e = x[d] - out.mean[k * n + d];
          out.std_error[k * n + d] += e * e;
        }
      }
    for (double& v : out.std_error) v = std::sqrt(v / (m - 1.0) / m);
  }
  return out;
}

/// 1.06 * weighted std * ESS^(-1/5) for coordinate `coord` at grid index k.
inline double silverman_bandwidth(const WeightedEnsemble& ens, std::size_t k,
                                  std::size_t coord = 0) {
  const auto& b = *ens.batch;
  double mean = 0.0;
  for (std::size_t p = 0; p < b.paths(); ++p) mean += ens.weights[p] * b.state(p, k)[coord];
  double var = 0.0;
  for (std::size_t p = 0; p < b.paths(); ++p) {
    const double e = b.state(p, k)[coord] - mean;
    var += ens.weights[p] * e * e;
  }
  return 1.06 * std::sqrt(var) * std::pow(ens.ess, -0.2);
}

enum class DensityMode { kKernel, kHistogram };

struct DensityPoint {
  double x = 0.0;
  double density = 0.0;
};

/// Density of the time-t marginal of coordinate `coord` on `grid`.
///
/// Kernel mode sums weighted Gaussian kernels of width `bandwidth`, truncated
/// at 8 bandwidths when the grid is sorted. Histogram mode treats the grid
/// points as bin centers (edges halfway between neighbours).
inline std::vector<DensityPoint> weighted_density(const WeightedEnsemble& ens, double t,
                                                  std::span<const double> grid, double bandwidth,
                                                  DensityMode mode = DensityMode::kKernel,
                                                  std::size_t coord = 0) {
  const auto& b = *ens.batch;
  require(coord < b.state_dim(), Errc::kInvalidArgument, "coordinate out of range");
  require(!grid.empty(), Errc::kInvalidArgument, "density grid is empty");
  const std::size_t k = detail::time_index(b.grid(), t);
  std::vector<DensityPoint> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) out[g].x = grid[g];
  const bool sorted = std::is_sorted(grid.begin(), grid.end());

  if (mode == DensityMode::kHistogram) {
    require(sorted && grid.size() >= 2, Errc::kInvalidArgument,
            "histogram mode needs an ascending grid of at least two points");
    Vector edges(grid.size() + 1);
    for (std::size_t g = 1; g < grid.size(); ++g) edges[g] = 0.5 * (grid[g - 1] + grid[g]);
    edges.front() = grid.front() - (edges[1] - grid.front());
    edges.back() = grid.back() + (grid.back() - edges[grid.size() - 1]);
    for (std::size_t p = 0; p < b.paths(); ++p) {
      const double x = b.state(p, k)[coord];
      if (x < edges.front() || x >= edges.back()) continue;
      const auto it = std::upper_bound(edges.begin(), edges.end(), x);
      out[static_cast<std::size_t>(it - edges.begin()) - 1].density += ens.weights[p];
    }
    for (std::size_t g = 0; g < grid.size(); ++g) out[g].density /= edges[g + 1] - edges[g];
    return out;
  }

  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw Error(Errc::kBandwidthNonPositive,
                "bandwidth " + std::to_string(bandwidth) + " must be > 0");
  const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * std::numbers::pi));
  const double reach = 8.0 * bandwidth;
  for (std::size_t p = 0; p < b.paths(); ++p) {
    const double w = ens.weights[p];
    if (w == 0.0) continue;
    const double x = b.state(p, k)[coord];
    std::size_t lo = 0, hi = grid.size();
    if (sorted) {
      lo = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), x - reach) -
                                    grid.begin());
      hi = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), x + reach) -
                                    grid.begin());
    }
    for (std::size_t g = lo; g < hi; ++g) {
      const double z = (grid[g] - x) / bandwidth;
      out[g].density += w * norm * std::exp(-0.5 * z * z);
    }
  }
  return out;
}

/// Kernel density with the Silverman bandwidth.
inline std::vector<DensityPoint> weighted_density(const WeightedEnsemble& ens, double t,
                                                  std::span<const double> grid) {
  const double h = silverman_bandwidth(ens, detail::time_index(ens.batch->grid(), t));
  return weighted_density(ens, t, grid, h);
}

/// CSV with columns t, x, density_player_1..; one block per time.
inline void write_density_csv(std::ostream& os, const std::vector<double>& times,
                              const std::vector<std::vector<std::vector<DensityPoint>>>& per_player) {
  os << "t,x";
  for (std::size_t i = 0; i < per_player.size(); ++i) os << ",density_player_" << i + 1;
  os << '\n';
  char buf[64];
  for (std::size_t a = 0; a < times.size(); ++a) {
    const std::size_t points = per_player.empty() ? 0 : per_player[0][a].size();
    for (std::size_t g = 0; g < points; ++g) {
      std::snprintf(buf, sizeof buf, "%.12g,%.12g", times[a], per_player[0][a][g].x);
      os << buf;
      for (const auto& player : per_player) {
        std::snprintf(buf, sizeof buf, ",%.12g", player[a][g].density);
        os << buf;
      }
      os << '\n';
    }
  }
}

// ============================================================================
// Radon-Nikodym derivatives and the cost equivalence
// ============================================================================

/// log dP/dR along each path: sum (u - ubar).dw + 1/2 sum |u - ubar|^2 dt,
/// with dw the increments that drove the controlled rollout.
inline Vector log_rn_self(const TrajectoryBatch& batch, std::span<const double> ubar) {
  require(batch.has_controls(), Errc::kMissingControls,
          "log-likelihood ratio needs a batch with recorded controls");
  require(ubar.size() == batch.input_dim(), Errc::kInvalidArgument,
          "nominal control has wrong dimension");
  Vector out(batch.paths(), 0.0);
  const double dt = batch.dt();
  for (std::size_t p = 0; p < batch.paths(); ++p) {
    double stochastic = 0.0, quadratic = 0.0;
    for (std::size_t k = 0; k < batch.steps(); ++k) {
      const auto u = batch.control(p, k);
      const auto dw = batch.noise(p, k);
      for (std::size_t c = 0; c < u.size(); ++c) {
        const double du = u[c] - ubar[c];
        stochastic += du * dw[c];
        quadratic += du * du;
      }
    }
    out[p] = stochastic + 0.5 * quadratic * dt;
  }
  return out;
}

struct SampleMean {
  double mean = 0.0;
  double std_error = 0.0;
};

inline SampleMean sample_mean(std::span<const double> v) {
  const auto m = static_cast<double>(v.size());
  SampleMean out;
  for (double x : v) out.mean += x;
  out.mean /= m;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std_error = std::sqrt(ss / (m - 1.0) / m);
  }
  return out;
}

struct CostEquivalence {
  std::size_t player = 0;
  SampleMean measure;     // trajectory cost + alpha-weighted log-likelihood terms
  SampleMean control;     // control-form running cost
  SampleMean difference;  // per-path measure - control, paired
};

/// Evaluates both cost forms on M closed-loop paths of every player.
///
/// Player i's paths are driven by policies[i]; the other players' controls
/// along them come from evaluating policies[j] at the visited states. Cross
/// terms use the deterministic integrand 1/2 (u^j - ubar^j).(2u^i - u^j - ubar^j).
inline std::vector<CostEquivalence> cost_equivalence_check(const GameSpec& spec,
                                                           const std::vector<FeedbackPolicy>& policies,
                                                           std::size_t paths, std::uint64_t seed,
                                                           unsigned workers = 1) {
  const std::size_t n_players = spec.players();
  if (policies.size() != n_players)
    throw Error(Errc::kPlayerCountMismatch, "expected " + std::to_string(n_players) +
                                                " policies, got " + std::to_string(policies.size()));
  const std::size_t m = spec.input_dim();
  const double dt = spec.dt();
  std::vector<CostEquivalence> out;
  for (std::size_t i = 0; i < n_players; ++i) {
    const auto batch = rollout_controlled(spec, i, policies[i], 0.0, spec.initial_state(), paths,
                                          derive_seed(seed, i), RolloutOptions{workers, false});
    const auto rn = log_rn_self(batch, spec.nominal(i));
    const auto& alpha = spec.interaction();
    Vector measure(paths), control(paths), diff(paths);
    parallel_for(paths, workers, [&](std::size_t p) {
      Vector uj(m);
      double trajectory = 0.0, cross_measure = 0.0, control_running = 0.0;
      for (std::size_t k = 0; k < batch.steps(); ++k) {
        const double t = batch.time(k);
        const auto x = batch.state(p, k);
        const auto ui = batch.control(p, k);
        const auto ubar_i = spec.nominal(i);
        trajectory += spec.cost(i).running(t, x) * dt;
        double self_sq = 0.0;
        for (std::size_t c = 0; c < m; ++c) self_sq += (ui[c] - ubar_i[c]) * (ui[c] - ubar_i[c]);
        double step_control = 0.5 * alpha.alpha(i, i) * self_sq;
        for (std::size_t j = 0; j < n_players; ++j) {
          if (j == i || alpha.alpha(i, j) == 0.0) continue;
          policies[j](t, x, uj);
          const auto ubar_j = spec.nominal(j);
          double measure_term = 0.0, norm_bar = 0.0, norm_u = 0.0, coupling = 0.0;
          for (std::size_t c = 0; c < m; ++c) {
            const double duj = uj[c] - ubar_j[c];
            measure_term += 0.5 * duj * (2.0 * ui[c] - uj[c] - ubar_j[c]);
            norm_bar += ubar_j[c] * ubar_j[c];
            norm_u += uj[c] * uj[c];
            coupling += duj * ui[c];
          }
          cross_measure += alpha.alpha(i, j) * measure_term * dt;
          step_control += 0.5 * alpha.alpha(i, j) * (norm_bar - norm_u) + alpha.alpha(i, j) * coupling;
        }
        control_running += step_control * dt;
      }
      trajectory += spec.cost(i).terminal(batch.state(p, batch.steps()));
      measure[p] = trajectory + alpha.alpha(i, i) * rn[p] + cross_measure;
      control[p] = trajectory + control_running;
      diff[p] = measure[p] - control[p];
    });
    out.push_back({i, sample_mean(measure), sample_mean(control), sample_mean(diff)});
  }
  return out;
}

// ============================================================================
// Expectation distance
// ============================================================================

struct DistancePoint {
  double t = 0.0;
  double distance = 0.0;
  double std_error = 0.0;
};

/// D(t) = |E_1[x_t] - E_2[x_t]| per grid time, with a delta-method SE from
/// independent ensembles.
inline std::vector<DistancePoint> expectation_distance(const std::vector<MeanPath>& means) {
  if (means.size() != 2)
    throw Error(Errc::kPlayerCountMismatch,
                "expectation distance needs exactly 2 players, got " + std::to_string(means.size()));
  const auto& a = means[0];
  const auto& b = means[1];
  if (a.grid.steps != b.grid.steps || a.n != b.n || std::abs(a.grid.dt - b.grid.dt) > 1e-12 ||
      std::abs(a.grid.t0 - b.grid.t0) > 1e-12)
    throw Error(Errc::kGridMismatch, "ensembles are on different time grids");
  std::vector<DistancePoint> out(a.grid.steps + 1);
  for (std::size_t k = 0; k <= a.grid.steps; ++k) {
    double sq = 0.0, var = 0.0;
    for (std::size_t d = 0; d < a.n; ++d) {
      const double e = a.at(k, d) - b.at(k, d);
      sq += e * e;
      var += e * e * (a.se(k, d) * a.se(k, d) + b.se(k, d) * b.se(k, d));
    }
    const double dist = std::sqrt(sq);
    double se = 0.0;
    if (dist > 0.0) {
      se = std::sqrt(var) / dist;
    } else {
      for (std::size_t d = 0; d < a.n; ++d)
        se += a.se(k, d) * a.se(k, d) + b.se(k, d) * b.se(k, d);
      se = std::sqrt(se);
    }
    out[k] = {a.grid.time(k), dist, se};
  }
  return out;
}

inline void write_distance_csv(std::ostream& os, const std::vector<DistancePoint>& curve) {
  os << "t,distance\n";
  char buf[64];
  for (const auto& pt : curve) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g\n", pt.t, pt.distance);
    os << buf;
  }
}

}  // namespace lsgame
