#pragma once

// Euler-Maruyama simulation of reference (nominal) and feedback-controlled
// dynamics. Batches keep the Wiener increments that drove them.

#include <lsgame/error.hpp>
#include <lsgame/game_model.hpp>
#include <lsgame/parallel.hpp>
#include <lsgame/rng.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace lsgame {

/// Uniform time grid t_k = t0 + k*dt, k = 0..steps, ending at the horizon.
struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;

  [[nodiscard]] double time(std::size_t k) const noexcept {
    return t0 + static_cast<double>(k) * dt;
  }
};

/// Grid from t0 to the game horizon using the game's step. t0 must sit on the
/// game's integration grid.
inline TimeGrid remaining_grid(const GameSpec& spec, double t0) {
  require(std::isfinite(t0) && t0 >= 0.0, Errc::kInvalidArgument, "start time must be >= 0");
  if (!(t0 < spec.horizon() - 1e-12 * spec.horizon()))
    throw Error(Errc::kHorizonExhausted, "start time " + std::to_string(t0) +
                                             " is not before the horizon");
  const double remaining = (spec.horizon() - t0) / spec.dt();
  const auto steps = static_cast<std::size_t>(std::llround(remaining));
  require(steps >= 1 && std::abs(static_cast<double>(steps) * spec.dt() + t0 - spec.horizon()) <=
                            1e-9 * std::max(1.0, spec.horizon()),
          Errc::kInvalidArgument, "start time " + std::to_string(t0) + " is off the dt grid");
  return {t0, spec.dt(), steps};
}

/// Index of grid time t on the game's full [0, T] grid.
inline std::int64_t grid_index(const GameSpec& spec, double t) {
  return std::llround(t / spec.dt());
}

/// Read-only view of one simulated path.
struct PathView {
  std::span<const double> states;    // (steps + 1) * n
  std::span<const double> noises;    // steps * m
  std::span<const double> controls;  // steps * m, or empty
  TimeGrid grid;
  std::size_t n = 0;
  std::size_t m = 0;

  [[nodiscard]] std::span<const double> state(std::size_t k) const { return states.subspan(k * n, n); }
  [[nodiscard]] std::span<const double> noise(std::size_t k) const { return noises.subspan(k * m, m); }
  [[nodiscard]] std::span<const double> control(std::size_t k) const {
    return controls.subspan(k * m, m);
  }
};

// ============================================================================
// TrajectoryBatch
// ============================================================================

/// M sampled paths on a common grid: states M x (K+1) x n, Wiener increments
/// M x K x m, and (for controlled rollouts) applied controls M x K x m.
class TrajectoryBatch {
 public:
  TrajectoryBatch(std::size_t paths, TimeGrid grid, std::size_t state_dim, std::size_t input_dim,
                  std::uint64_t seed, std::optional<std::size_t> player, Vector states,
                  Vector noises, Vector controls = {})
      : paths_(paths),
        grid_(grid),
        n_(state_dim),
        m_(input_dim),
        seed_(seed),
        player_(player),
        states_(std::move(states)),
        noises_(std::move(noises)),
        controls_(std::move(controls)) {
    require(paths_ >= 1 && grid_.steps >= 1 && n_ >= 1 && m_ >= 1, Errc::kInvalidArgument,
            "batch dimensions must be positive");
    require(states_.size() == paths_ * (grid_.steps + 1) * n_, Errc::kInvalidArgument,
            "states array has wrong size");
    require(noises_.size() == paths_ * grid_.steps * m_, Errc::kInvalidArgument,
            "noises array has wrong size");
    require(controls_.empty() || controls_.size() == noises_.size(), Errc::kInvalidArgument,
            "controls array has wrong size");
  }

  [[nodiscard]] std::size_t paths() const noexcept { return paths_; }
  [[nodiscard]] std::size_t steps() const noexcept { return grid_.steps; }
  [[nodiscard]] std::size_t state_dim() const noexcept { return n_; }
  [[nodiscard]] std::size_t input_dim() const noexcept { return m_; }
  [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
  [[nodiscard]] double t0() const noexcept { return grid_.t0; }
  [[nodiscard]] double dt() const noexcept { return grid_.dt; }
  [[nodiscard]] double time(std::size_t k) const noexcept { return grid_.time(k); }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::optional<std::size_t> player() const noexcept { return player_; }
  [[nodiscard]] bool has_controls() const noexcept { return !controls_.empty(); }

  [[nodiscard]] std::span<const double> state(std::size_t p, std::size_t k) const {
    return {states_.data() + (p * (grid_.steps + 1) + k) * n_, n_};
  }
  [[nodiscard]] std::span<const double> noise(std::size_t p, std::size_t k) const {
    return {noises_.data() + (p * grid_.steps + k) * m_, m_};
  }
  [[nodiscard]] std::span<const double> control(std::size_t p, std::size_t k) const {
    require(has_controls(), Errc::kMissingControls, "batch has no recorded controls");
    return {controls_.data() + (p * grid_.steps + k) * m_, m_};
  }

  [[nodiscard]] PathView path(std::size_t p) const {
    const std::size_t ns = (grid_.steps + 1) * n_;
    const std::size_t nw = grid_.steps * m_;
    PathView v{std::span<const double>(states_).subspan(p * ns, ns),
               std::span<const double>(noises_).subspan(p * nw, nw),
               {},
               grid_,
               n_,
               m_};
    if (has_controls()) v.controls = std::span<const double>(controls_).subspan(p * nw, nw);
    return v;
  }

  [[nodiscard]] const Vector& states_data() const noexcept { return states_; }
  [[nodiscard]] const Vector& noises_data() const noexcept { return noises_; }
  [[nodiscard]] const Vector& controls_data() const noexcept { return controls_; }

 private:
  std::size_t paths_;
  TimeGrid grid_;
  std::size_t n_;
  std::size_t m_;
  std::uint64_t seed_;
  std::optional<std::size_t> player_;
  Vector states_;
  Vector noises_;
  Vector controls_;
};

/// CSV dump with columns path, step, t, x_1..x_n[, u_1..u_m]. Control cells
/// are empty on the terminal row, which has no applied control.
inline void write_csv(std::ostream& os, const TrajectoryBatch& batch) {
  os << "path,step,t";
  for (std::size_t d = 0; d < batch.state_dim(); ++d) os << ",x_" << d + 1;
  if (batch.has_controls())
    for (std::size_t c = 0; c < batch.input_dim(); ++c) os << ",u_" << c + 1;
  os << '\n';
  char buf[64];
  for (std::size_t p = 0; p < batch.paths(); ++p) {
    for (std::size_t k = 0; k <= batch.steps(); ++k) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.12g", p, k, batch.time(k));
      os << buf;
      for (double x : batch.state(p, k)) {
        std::snprintf(buf, sizeof buf, ",%.12g", x);
        os << buf;
      }
      if (batch.has_controls()) {
        for (std::size_t c = 0; c < batch.input_dim(); ++c) {
          if (k < batch.steps()) {
            std::snprintf(buf, sizeof buf, ",%.12g", batch.control(p, k)[c]);
            os << buf;
          } else {
            os << ',';
          }
        }
      }
      os << '\n';
    }
  }
}

// ============================================================================
// Feedback policies
// ============================================================================

/// State feedback u = policy(t, x). Evaluators must be deterministic and safe
/// to call concurrently.
struct FeedbackPolicy {
  using Evaluator = std::function<void(double t, std::span<const double> x, std::span<double> u)>;

  Evaluator evaluator;
  std::string descriptor;

  void operator()(double t, std::span<const double> x, std::span<double> u) const {
    evaluator(t, x, u);
  }
};

inline FeedbackPolicy constant_policy(Vector u, std::string descriptor = "constant") {
  return {[u = std::move(u)](double, std::span<const double>, std::span<double> out) {
            std::copy(u.begin(), u.end(), out.begin());
          },
          std::move(descriptor)};
}

inline FeedbackPolicy nominal_policy(const GameSpec& spec, std::size_t player) {
  const auto ubar = spec.nominal(player);
  return constant_policy(Vector(ubar.begin(), ubar.end()),
                         "nominal(player=" + std::to_string(player) + ")");
}

/// u = gain * x + offset with gain m x n
inline FeedbackPolicy linear_feedback_policy(Matrix gain, Vector offset) {
  return {[gain = std::move(gain), offset = std::move(offset)](
              double, std::span<const double> x, std::span<double> u) {
            for (std::size_t r = 0; r < u.size(); ++r) {
              double acc = offset[r];
              for (std::size_t c = 0; c < x.size(); ++c) acc += gain[r][c] * x[c];
              u[r] = acc;
            }
          },
          "linear-feedback"};
}

// ============================================================================
// Rollouts
// ============================================================================

struct RolloutOptions {
  unsigned workers = 1;
  /// Drops the Wiener increments, leaving the Euler scheme for the drift ODE.
  /// Intended for tests.
  bool zero_noise = false;
};

namespace detail {

/// x <- x + (f(x) + g u) dt + g dw
inline void euler_maruyama_step(const DynamicsModel& dyn, double dt, std::span<double> x,
                                std::span<const double> u, std::span<const double> dw,
                                std::span<double> drift) {
  dyn.drift(x, drift);
  dyn.add_g_times(u, 1.0, drift);
  for (std::size_t r = 0; r < x.size(); ++r) x[r] += drift[r] * dt;
  dyn.add_g_times(dw, 1.0, x);
}

inline void check_state(std::span<const double> x, std::size_t path, std::size_t step) {
  if (!detail::all_finite(x))
    throw Error(Errc::kNonFiniteState, "path " + std::to_string(path) + " diverged at step " +
                                           std::to_string(step));
}

struct PathScratch {
  Vector x;
  Vector drift;
  Vector u;
};

/// Simulates one path into caller-owned buffers. A null policy applies the
/// nominal control `ubar`; controls_out may be empty.
inline void simulate_path(const GameSpec& spec, std::span<const double> ubar,
                          const FeedbackPolicy* policy, const TimeGrid& grid,
                          std::span<const double> x0, std::uint64_t seed, std::size_t path,
                          bool zero_noise, std::span<double> states_out,
                          std::span<double> noises_out, std::span<double> controls_out,
                          PathScratch& scratch) {
  const auto& dyn = spec.dynamics();
  const std::size_t n = dyn.state_dim();
  const std::size_t m = dyn.input_dim();
  const double sqrt_dt = std::sqrt(grid.dt);
  NormalStream stream(seed, path);

  auto& x = scratch.x;
  auto& drift = scratch.drift;
  auto& u = scratch.u;
  x.assign(x0.begin(), x0.end());
  drift.resize(n);
  u.assign(ubar.begin(), ubar.end());
  // One-dimensional models skip the generic matrix loops.
  const bool scalar_path = n == 1 && m == 1;
  const double a = dyn.drift_matrix(0, 0);
  const double b = dyn.drift_offset(0);
  const double g = dyn.g(0, 0);
  std::copy(x.begin(), x.end(), states_out.begin());
  for (std::size_t k = 0; k < grid.steps; ++k) {
    auto dw = noises_out.subspan(k * m, m);
    if (zero_noise)
      std::fill(dw.begin(), dw.end(), 0.0);
    else
      stream.fill(dw, sqrt_dt);
    if (policy != nullptr) {
      (*policy)(grid.time(k), x, u);
      if (!detail::all_finite(u))
        throw Error(Errc::kNonFiniteControl, "policy '" + policy->descriptor +
                                                 "' returned a non-finite control at t = " +
                                                 std::to_string(grid.time(k)));
    }
    if (!controls_out.empty()) std::copy(u.begin(), u.end(), controls_out.begin() + k * m);
    if (scalar_path) {
      x[0] += (a * x[0] + b + g * u[0]) * grid.dt + g * dw[0];
    } else {
      euler_maruyama_step(dyn, grid.dt, x, u, dw, drift);
    }
    check_state(x, path, k + 1);
    std::copy(x.begin(), x.end(), states_out.begin() + (k + 1) * n);
  }
}

inline void check_rollout_args(const GameSpec& spec, std::size_t player, std::span<const double> x0,
                               std::size_t paths) {
  require(player < spec.players(), Errc::kInvalidArgument, "player index out of range");
  require(paths >= 1, Errc::kInvalidArgument, "path count must be >= 1");
  require(x0.size() == spec.state_dim() && all_finite(x0), Errc::kInvalidArgument,
          "start state must be finite with state_dim entries");
}

inline TrajectoryBatch rollout(const GameSpec& spec, std::size_t player,
                               const FeedbackPolicy* policy, double t0,
                               std::span<const double> x0, std::size_t paths, std::uint64_t seed,
                               const RolloutOptions& options) {
  check_rollout_args(spec, player, x0, paths);
  const TimeGrid grid = remaining_grid(spec, t0);
  const std::size_t n = spec.state_dim();
  const std::size_t m = spec.input_dim();
  const std::size_t ns = (grid.steps + 1) * n;
  const std::size_t nw = grid.steps * m;
  Vector states(paths * ns);
  Vector noises(paths * nw);
  Vector controls(policy != nullptr ? paths * nw : 0);
  const auto ubar = spec.nominal(player);

  parallel_for(paths, options.workers, [&](std::size_t p) {
    PathScratch scratch;
    simulate_path(spec, ubar, policy, grid, x0, seed, p, options.zero_noise,
                  std::span<double>(states).subspan(p * ns, ns),
                  std::span<double>(noises).subspan(p * nw, nw),
                  policy != nullptr ? std::span<double>(controls).subspan(p * nw, nw)
                                    : std::span<double>{},
                  scratch);
  });
  return TrajectoryBatch(paths, grid, n, m, seed, player, std::move(states), std::move(noises),
                         std::move(controls));
}

}  // namespace detail

/// Paths of dx = (f + g ubar) dt + g dw from (t0, x0) under player's reference measure.
inline TrajectoryBatch rollout_reference(const GameSpec& spec, std::size_t player, double t0,
                                         std::span<const double> x0, std::size_t paths,
                                         std::uint64_t seed, const RolloutOptions& options = {}) {
  return detail::rollout(spec, player, nullptr, t0, x0, paths, seed, options);
}

/// Paths of dx = (f + g u(t, x)) dt + g dw with the applied controls recorded.
inline TrajectoryBatch rollout_controlled(const GameSpec& spec, std::size_t player,
                                          const FeedbackPolicy& policy, double t0,
                                          std::span<const double> x0, std::size_t paths,
                                          std::uint64_t seed, const RolloutOptions& options = {}) {
  return detail::rollout(spec, player, &policy, t0, x0, paths, seed, options);
}

/// Simulates reference paths one at a time and hands each to visit(p, view)
/// without retaining the batch. Path p sees the same draws as path p of
/// rollout_reference with the same seed. visit may run concurrently for
/// distinct p when workers > 1.
template <class Visit>
void stream_reference_paths(const GameSpec& spec, std::size_t player, double t0,
                            std::span<const double> x0, std::size_t paths, std::uint64_t seed,
                            const RolloutOptions& options, Visit&& visit) {
  detail::check_rollout_args(spec, player, x0, paths);
  const TimeGrid grid = remaining_grid(spec, t0);
  const std::size_t n = spec.state_dim();
  const std::size_t m = spec.input_dim();
  const auto ubar = spec.nominal(player);
  const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, paths));
  const std::size_t chunk = (paths + workers - 1) / workers;

  parallel_for(workers, workers, [&](std::size_t w) {
    Vector states((grid.steps + 1) * n);
    Vector noises(grid.steps * m);
    detail::PathScratch scratch;
    const std::size_t end = std::min(paths, (w + 1) * chunk);
    for (std::size_t p = w * chunk; p < end; ++p) {
      detail::simulate_path(spec, ubar, nullptr, grid, x0, seed, p, options.zero_noise, states,
                            noises, {},
                            scratch);
      visit(p, PathView{states, noises, {}, grid, n, m});
    }
  });
}

}  // namespace lsgame
