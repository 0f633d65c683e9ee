#pragma once

// Independent verification solvers for one-dimensional games:
//  - Crank-Nicolson finite differences for the linear desirability PDE,
//  - a residual check of the coupled nonlinear HJB system,
//  - Riccati ODEs for quadratic (mixed) costs.

#include <lsgame/error.hpp>
#include <lsgame/game_model.hpp>
#include <lsgame/sde_engine.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lsgame {

// ============================================================================
// Grid and field
// ============================================================================

/// Space-time grid: x_j = x_min + j*dx (j < nx), t_k = k*dtau (k <= nt).
struct Grid1D {
  double x_min = -1.0;
  double x_max = 1.0;
  std::size_t nx = 3;
  std::size_t nt = 1;
  double horizon = 1.0;

  static Grid1D make(double x_min, double x_max, std::size_t nx, std::size_t nt, double horizon) {
    require(std::isfinite(x_min) && std::isfinite(x_max) && x_min < x_max, Errc::kInvalidArgument,
            "grid needs x_min < x_max");
    require(nx >= 3, Errc::kInvalidArgument, "grid needs nx >= 3");
    require(nt >= 1, Errc::kInvalidArgument, "grid needs nt >= 1");
    require(std::isfinite(horizon) && horizon > 0.0, Errc::kInvalidArgument, "horizon must be > 0");
    return {x_min, x_max, nx, nt, horizon};
  }

  [[nodiscard]] double dx() const noexcept { return (x_max - x_min) / static_cast<double>(nx - 1); }
  [[nodiscard]] double dtau() const noexcept { return horizon / static_cast<double>(nt); }
  [[nodiscard]] double x(std::size_t j) const noexcept {
    return j + 1 == nx ? x_max : x_min + static_cast<double>(j) * dx();
  }
  [[nodiscard]] double t(std::size_t k) const noexcept {
    return k == nt ? horizon : static_cast<double>(k) * dtau();
  }
  [[nodiscard]] bool same_as(const Grid1D& o) const noexcept {
    return x_min == o.x_min && x_max == o.x_max && nx == o.nx && nt == o.nt && horizon == o.horizon;
  }
};

/// Z_i on a Grid1D, rows k = 0..nt (row nt is the terminal condition).
struct ZField {
  Grid1D grid;
  std::size_t player = 0;
  Vector values;  // (nt + 1) * nx

  [[nodiscard]] double at(std::size_t k, std::size_t j) const { return values[k * grid.nx + j]; }
  [[nodiscard]] std::span<const double> row(std::size_t k) const {
    return std::span<const double>(values).subspan(k * grid.nx, grid.nx);
  }

  /// Linear interpolation in x and t; x is clamped to the grid.
  [[nodiscard]] double value(double t, double x) const {
    return interpolate(t, x, [&](std::size_t k, std::size_t j) { return at(k, j); });
  }

  /// d/dx log Z by central differences (one-sided at the ends), interpolated.
  [[nodiscard]] double log_gradient(double t, double x) const {
    const double dx = grid.dx();
    return interpolate(t, x, [&](std::size_t k, std::size_t j) {
      const std::size_t lo = j == 0 ? 0 : j - 1;
      const std::size_t hi = j + 1 == grid.nx ? j : j + 1;
      return (std::log(at(k, hi)) - std::log(at(k, lo))) / (static_cast<double>(hi - lo) * dx);
    });
  }

 private:
  template <class F>
  double interpolate(double t, double x, F&& node) const {
    const double xs = std::clamp((x - grid.x_min) / grid.dx(), 0.0, static_cast<double>(grid.nx - 1));
    const double ts = std::clamp(t / grid.dtau(), 0.0, static_cast<double>(grid.nt));
    const auto j = std::min(static_cast<std::size_t>(xs), grid.nx - 2);
    const auto k = std::min(static_cast<std::size_t>(ts), grid.nt - 1);
    const double fx = xs - static_cast<double>(j);
    const double ft = ts - static_cast<double>(k);
    const double a = (1.0 - fx) * node(k, j) + fx * node(k, j + 1);
    const double b = (1.0 - fx) * node(k + 1, j) + fx * node(k + 1, j + 1);
    return (1.0 - ft) * a + ft * b;
  }
};

inline void write_csv(std::ostream& os, const ZField& field) {
  os << "t,x,Z\n";
  char buf[96];
  for (std::size_t k = 0; k <= field.grid.nt; ++k)
    for (std::size_t j = 0; j < field.grid.nx; ++j) {
      std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", field.grid.t(k), field.grid.x(j),
                    field.at(k, j));
      os << buf;
    }
}

// ============================================================================
// Scalar model extraction
// ============================================================================

namespace detail {

/// Coefficients of a 1-D game seen by player i: drift A x + b, noise gain g,
/// nominal control ubar.
struct ScalarModel {
  double A = 0.0;
  double b = 0.0;
  double g = 1.0;
  double ubar = 0.0;
  [[nodiscard]] double advection(double x) const noexcept { return A * x + b + g * ubar; }
};

inline ScalarModel scalar_model(const GameSpec& spec, std::size_t i) {
  require(spec.state_dim() == 1 && spec.input_dim() == 1, Errc::kInvalidArgument,
          "oracles support one-dimensional state and input only");
  require(i < spec.players(), Errc::kInvalidArgument, "player index out of range");
  const auto& dyn = spec.dynamics();
  return {dyn.drift_matrix(0, 0), dyn.drift_offset(0), dyn.g(0, 0), spec.nominal(i)[0]};
}

/// Mixed quadratic cost sum_j beta_ij (k_j/2)(x - m_j)^2 written as
/// (Q/2) x^2 - L x + K.
struct QuadraticForm {
  double Q = 0.0;
  double L = 0.0;
  double K = 0.0;
};

inline QuadraticForm mixed_running_form(const GameSpec& spec, std::size_t i, double t) {
  QuadraticForm f;
  for (std::size_t j = 0; j < spec.players(); ++j) {
    const double beta = spec.interaction().beta(i, j);
    const double k = spec.cost(j).running_stiffness();
    const double m = spec.cost(j).running_center(t, 0);
    f.Q += beta * k;
    f.L += beta * k * m;
    f.K += 0.5 * beta * k * m * m;
  }
  return f;
}

inline QuadraticForm mixed_terminal_form(const GameSpec& spec, std::size_t i) {
  QuadraticForm f;
  for (std::size_t j = 0; j < spec.players(); ++j) {
    const double beta = spec.interaction().beta(i, j);
    const double k = spec.cost(j).terminal_stiffness();
    const double m = spec.cost(j).terminal_center(0);
    f.Q += beta * k;
    f.L += beta * k * m;
    f.K += 0.5 * beta * k * m * m;
  }
  return f;
}

inline void check_positive_row(std::span<const double> row, std::size_t k) {
  for (std::size_t j = 0; j < row.size(); ++j)
    if (!(row[j] > 0.0) || !std::isfinite(row[j]))
      throw Error(Errc::kInstabilityDetected, "Z = " + std::to_string(row[j]) + " at row " +
                                                  std::to_string(k) + ", node " +
                                                  std::to_string(j));
}

/// Solves a tridiagonal system in place (Thomas algorithm); `rhs` becomes x.
inline void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::span<double> rhs,
                              std::span<double> scratch) {
  const std::size_t n = diag.size();
  scratch[0] = upper[0] / diag[0];
  rhs[0] /= diag[0];
  for (std::size_t j = 1; j < n; ++j) {
    const double denom = diag[j] - lower[j] * scratch[j - 1];
    if (j + 1 < n) scratch[j] = upper[j] / denom;
    rhs[j] = (rhs[j] - lower[j] * rhs[j - 1]) / denom;
  }
  for (std::size_t j = n - 1; j-- > 0;) rhs[j] -= scratch[j] * rhs[j + 1];
}

}  // namespace detail

// ============================================================================
// Finite-difference solver
// ============================================================================

enum class FdScheme { kCrankNicolson, kExplicit };

struct FdOptions {
  FdScheme scheme = FdScheme::kCrankNicolson;
  /// Re-solve on a wider domain and compare at the probe points.
  bool probe_domain = true;
  /// States compared by the probe at t = 0; empty means the central half of the grid.
  Vector probe_points;
  double probe_tolerance = 1e-4;
  /// Explicit stepping requires dtau <= safety * dx^2 / g^2.
  double explicit_safety = 0.9;
};

/// Default domain: x0 +- (farthest cost center, own or mixed, + 6 g sqrt(T)).
inline Grid1D default_grid(const GameSpec& spec, std::size_t nx, std::size_t nt) {
  const auto model = detail::scalar_model(spec, 0);
  const double x0 = spec.initial_state()[0];
  double extent = 0.0;
  auto reach = [&](double c) { extent = std::max(extent, std::abs(c - x0)); };
  for (std::size_t j = 0; j < spec.players(); ++j) {
    reach(spec.cost(j).running_center(0.0, 0));
    reach(spec.cost(j).running_center(spec.horizon(), 0));
    reach(spec.cost(j).terminal_center(0));
  }
  for (std::size_t i = 0; i < spec.players(); ++i) {
    for (double t : {0.0, spec.horizon()}) {
      const auto f = detail::mixed_running_form(spec, i, t);
      if (f.Q > 0.0) reach(f.L / f.Q);
    }
    const auto f = detail::mixed_terminal_form(spec, i);
    if (f.Q > 0.0) reach(f.L / f.Q);
  }
  const double half = extent + 6.0 * std::abs(model.g) * std::sqrt(spec.horizon());
  return Grid1D::make(x0 - half, x0 + half, nx, nt, spec.horizon());
}

namespace detail {

inline ZField solve_fd_once(const GameSpec& spec, std::size_t i, const Grid1D& grid,
                            const FdOptions& options) {
  const auto model = scalar_model(spec, i);
  const std::size_t nx = grid.nx;
  const double dx = grid.dx();
  const double dtau = grid.dtau();
  const double diff = 0.5 * model.g * model.g / (dx * dx);

  if (options.scheme == FdScheme::kExplicit) {
    const double bound = options.explicit_safety * dx * dx / (model.g * model.g);
    require(dtau <= bound, Errc::kInvalidArgument,
            "explicit stepping needs dtau <= " + std::to_string(bound) + ", got " +
                std::to_string(dtau));
  }

  ZField field{grid, i, Vector((grid.nt + 1) * nx)};
  std::vector<double> xs(nx);
  for (std::size_t j = 0; j < nx; ++j) xs[j] = grid.x(j);

  for (std::size_t j = 0; j < nx; ++j) {
    const double exponent = -mixed_terminal_cost(spec, i, std::span<const double>(&xs[j], 1));
    if (exponent > kDefaultExponentLimit)
      throw Error(Errc::kOverflow, "terminal desirability exponent " + std::to_string(exponent));
    field.values[grid.nt * nx + j] = std::exp(exponent);
  }
  check_positive_row(field.row(grid.nt), grid.nt);

  // L Z = a(x) Z_x + (g^2/2) Z_xx - V(t, x) Z with Neumann ghost nodes.
  std::vector<double> lo(nx), di(nx), up(nx), rhs(nx), scratch(nx);
  auto assemble = [&](double t, double sign, double scale) {
    for (std::size_t j = 0; j < nx; ++j) {
      const double adv = model.advection(xs[j]) / (2.0 * dx);
      const double pot = mixed_running_cost(spec, i, t, std::span<const double>(&xs[j], 1));
      double l = diff - adv, d = -2.0 * diff - pot, u = diff + adv;
      if (j == 0) {
        u += l;
        l = 0.0;
      } else if (j + 1 == nx) {
        l += u;
        u = 0.0;
      }
      lo[j] = sign * scale * l;
      di[j] = 1.0 + sign * scale * d;
      up[j] = sign * scale * u;
    }
  };
  auto apply = [&](std::span<const double> z, std::span<double> out) {
    for (std::size_t j = 0; j < nx; ++j) {
      double v = di[j] * z[j];
      if (j > 0) v += lo[j] * z[j - 1];
      if (j + 1 < nx) v += up[j] * z[j + 1];
      out[j] = v;
    }
  };

  for (std::size_t k = grid.nt; k-- > 0;) {
    const auto next = field.row(k + 1);
    std::span<double> cur(field.values.data() + k * nx, nx);
    if (options.scheme == FdScheme::kExplicit) {
      assemble(grid.t(k + 1), 1.0, dtau);
      apply(next, cur);
    } else {
      assemble(grid.t(k + 1), 1.0, 0.5 * dtau);
      apply(next, rhs);
      assemble(grid.t(k), -1.0, 0.5 * dtau);
      solve_tridiagonal(lo, di, up, rhs, scratch);
      std::copy(rhs.begin(), rhs.end(), cur.begin());
    }
    check_positive_row(field.row(k), k);
  }
  return field;
}

}  // namespace detail

/// Backward solve of the linear desirability PDE for player i on `grid`.
inline ZField solve_linear_pde_fd(const GameSpec& spec, std::size_t i, const Grid1D& grid,
                                  const FdOptions& options = {}) {
  require(std::abs(grid.horizon - spec.horizon()) <= 1e-12 * spec.horizon(),
          Errc::kInvalidArgument, "grid horizon differs from the game horizon");
  auto field = detail::solve_fd_once(spec, i, grid, options);
  if (!options.probe_domain) return field;

  const std::size_t pad = std::max<std::size_t>(1, (grid.nx - 1) / 4);
  const double dx = grid.dx();
  const auto wide = Grid1D::make(grid.x_min - static_cast<double>(pad) * dx,
                                 grid.x_max + static_cast<double>(pad) * dx, grid.nx + 2 * pad,
                                 grid.nt, grid.horizon);
  const auto reference = detail::solve_fd_once(spec, i, wide, options);
  Vector probes = options.probe_points;
  if (probes.empty())
    for (std::size_t j = (grid.nx - 1) / 4; j <= 3 * (grid.nx - 1) / 4; ++j)
      probes.push_back(grid.x(j));
  for (double x : probes) {
    const double a = field.value(0.0, x);
    const double b = reference.value(0.0, x);
    const double rel = std::abs(a - b) / b;
    if (rel > options.probe_tolerance)
      throw Error(Errc::kDomainTooNarrow, "boundary sensitivity " + std::to_string(rel) +
                                              " at x = " + std::to_string(x) + " exceeds " +
                                              std::to_string(options.probe_tolerance));
  }
  return field;
}

// ============================================================================
// Coupled HJB residual
// ============================================================================

struct HjbResidual {
  std::size_t player = 0;
  double max_abs = 0.0;
  double mean_abs = 0.0;
  /// max |dJ/dt| over the window (at least 1), the unit of max_scaled.
  double scale = 1.0;
  double max_scaled = 0.0;
};

namespace detail {

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

}  // namespace detail

/// Residual of the coupled HJB system on J^i = -sum_j alpha_ij log Z^j.
///
/// Spatial terms use central differences and are averaged over rows k and
/// k+1; the time derivative is (J_{k+1} - J_k) / dtau, so the check is
/// centered at each half step. The quadratic coupling is formed literally as
/// gradJ^T (beta^T (x) g) diag(alpha_ij I) (beta (x) g^T) gradJ. Only nodes in
/// the central `window` fraction of the domain are scored.
inline std::vector<HjbResidual> hjb_residual(const GameSpec& spec, const std::vector<ZField>& fields,
                                             double window = 0.5) {
  const std::size_t n_players = spec.players();
  require(fields.size() == n_players, Errc::kGridMismatch,
          "one Z field per player is required");
  for (const auto& f : fields)
    if (!f.grid.same_as(fields[0].grid))
      throw Error(Errc::kGridMismatch, "Z fields are on different grids");
  const Grid1D& grid = fields[0].grid;
  require(std::abs(grid.horizon - spec.horizon()) <= 1e-12 * spec.horizon(), Errc::kGridMismatch,
          "grid horizon differs from the game horizon");
  const auto model0 = detail::scalar_model(spec, 0);
  const std::size_t nx = grid.nx, nt = grid.nt;
  const double dx = grid.dx(), dtau = grid.dtau();
  const auto& alpha = spec.interaction().alpha_matrix();
  const auto& beta = spec.interaction().beta_matrix();
  const Eigen::MatrixXd g = Eigen::MatrixXd::Constant(1, 1, model0.g);
  const Eigen::MatrixXd right = detail::kron(beta, g.transpose());  // (beta (x) g^T)
  const Eigen::MatrixXd left = detail::kron(beta.transpose(), g);   // (beta^T (x) g)

  // J^i on every node.
  std::vector<Vector> J(n_players, Vector((nt + 1) * nx, 0.0));
  for (std::size_t k = 0; k <= nt; ++k)
    for (std::size_t jx = 0; jx < nx; ++jx)
      for (std::size_t i = 0; i < n_players; ++i) {
        double v = 0.0;
        for (std::size_t l = 0; l < n_players; ++l) v -= alpha(i, l) * std::log(fields[l].at(k, jx));
        J[i][k * nx + jx] = v;
      }

  const double centre = 0.5 * (grid.x_min + grid.x_max);
  const double half = 0.5 * (grid.x_max - grid.x_min) * window;
  std::size_t j_lo = nx, j_hi = 0;
  for (std::size_t jx = 1; jx + 1 < nx; ++jx)
    if (std::abs(grid.x(jx) - centre) <= half) {
      j_lo = std::min(j_lo, jx);
      j_hi = std::max(j_hi, jx);
    }
  require(j_lo <= j_hi, Errc::kGridMismatch, "residual window contains no interior nodes");

  std::vector<HjbResidual> out(n_players);
  for (std::size_t i = 0; i < n_players; ++i) {
    const auto model = detail::scalar_model(spec, i);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n_players, n_players);
    for (std::size_t j = 0; j < n_players; ++j) D(j, j) = alpha(i, j);
    const Eigen::MatrixXd kernel = left * D * right;

    auto rhs = [&](std::size_t k, std::size_t jx) {
      Eigen::VectorXd grad(n_players);
      for (std::size_t l = 0; l < n_players; ++l)
        grad(l) = (J[l][k * nx + jx + 1] - J[l][k * nx + jx - 1]) / (2.0 * dx);
      const auto& Ji = J[i];
      const double jxx = (Ji[k * nx + jx + 1] - 2.0 * Ji[k * nx + jx] + Ji[k * nx + jx - 1]) / (dx * dx);
      const double x = grid.x(jx);
      const double cost = spec.cost(i).running(grid.t(k), std::span<const double>(&x, 1));
      const double coupling = grad.dot(kernel * grad);
      return cost + model.advection(x) * grad(i) + 0.5 * model.g * model.g * jxx - 0.5 * coupling;
    };

    double max_abs = 0.0, sum_abs = 0.0, scale = 1.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < nt; ++k)
      for (std::size_t jx = j_lo; jx <= j_hi; ++jx) {
        const double neg_dt = -(J[i][(k + 1) * nx + jx] - J[i][k * nx + jx]) / dtau;
        const double r = std::abs(neg_dt - 0.5 * (rhs(k, jx) + rhs(k + 1, jx)));
        max_abs = std::max(max_abs, r);
        sum_abs += r;
        scale = std::max(scale, std::abs(neg_dt));
        ++count;
      }
    out[i] = {i, max_abs, sum_abs / static_cast<double>(count), scale, max_abs / scale};
  }
  return out;
}

// ============================================================================
// Riccati reference
// ============================================================================

/// Quadratic control problem in one dimension whose value is
/// W(t, x) = p x^2 / 2 + r x + c:
///   dx = (A x + b) dt + g (u dt + dw),
///   running (Q/2) x^2 - L(t) x + K(t) + |u|^2 / 2,
///   terminal (QT/2) x^2 - LT x + KT,
/// with L and K polynomial in s = t / T.
struct RiccatiProblem {
  double A = 0.0;
  double b = 0.0;
  double g = 1.0;
  double horizon = 1.0;
  double Q = 0.0;
  double L0 = 0.0, L1 = 0.0;
  double K0 = 0.0, K1 = 0.0, K2 = 0.0;
  double QT = 0.0;
  double LT = 0.0;
  double KT = 0.0;

  [[nodiscard]] double L(double t) const noexcept { return L0 + L1 * (t / horizon); }
  [[nodiscard]] double K(double t) const noexcept {
    const double s = t / horizon;
    return K0 + (K1 + K2 * s) * s;
  }
};

/// Single-agent tracking problem: f = 0, cost (q/2)(x - m(t))^2 + |u|^2/2
/// with m(t) = offset + slope * t/T and terminal (q_T/2)(x - m(T))^2.
inline RiccatiProblem lq_tracking_problem(double q, double q_T, double sigma, double horizon,
                                          double offset, double slope) {
  require(q >= 0.0 && q_T >= 0.0, Errc::kInvalidArgument, "q and q_T must be >= 0");
  require(horizon > 0.0, Errc::kInvalidArgument, "horizon must be > 0");
  RiccatiProblem p;
  p.g = sigma;
  p.horizon = horizon;
  p.Q = q;
  p.L0 = q * offset;
  p.L1 = q * slope;
  p.K0 = 0.5 * q * offset * offset;
  p.K1 = q * offset * slope;
  p.K2 = 0.5 * q * slope * slope;
  const double mT = offset + slope;
  p.QT = q_T;
  p.LT = q_T * mT;
  p.KT = 0.5 * q_T * mT * mT;
  return p;
}

/// Player i's problem with the beta-mixed costs, so that W = -log Z_i. With
/// alpha = I this is the player's own LQ problem and W its value function.
inline RiccatiProblem mixed_riccati_problem(const GameSpec& spec, std::size_t i) {
  const auto model = detail::scalar_model(spec, i);
  RiccatiProblem p;
  p.A = model.A;
  p.b = model.b + model.g * model.ubar;
  p.g = model.g;
  p.horizon = spec.horizon();
  for (std::size_t j = 0; j < spec.players(); ++j) {
    const double beta = spec.interaction().beta(i, j);
    const auto& cost = spec.cost(j);
    const double k = cost.running_stiffness();
    const double m0 = cost.running_center(0.0, 0);
    const double m1 = cost.running_center(spec.horizon(), 0) - m0;
    p.Q += beta * k;
    p.L0 += beta * k * m0;
    p.L1 += beta * k * m1;
    p.K0 += 0.5 * beta * k * m0 * m0;
    p.K1 += beta * k * m0 * m1;
    p.K2 += 0.5 * beta * k * m1 * m1;
    const double kT = cost.terminal_stiffness();
    const double mT = cost.terminal_center(0);
    p.QT += beta * kT;
    p.LT += beta * kT * mT;
    p.KT += 0.5 * beta * kT * mT * mT;
  }
  require(p.Q >= 0.0 && p.QT >= 0.0, Errc::kInvalidArgument,
          "mixed quadratic costs must be convex for the Riccati reference");
  return p;
}

/// Coefficients p, r, c on a fine uniform grid with RK4 steps, evaluated
/// between nodes by cubic Hermite interpolation.
class RiccatiSolution {
 public:
  RiccatiSolution(RiccatiProblem problem, std::size_t steps)
      : prob_(problem), steps_(steps), h_(problem.horizon / static_cast<double>(steps)) {
    require(steps >= 1, Errc::kInvalidArgument, "Riccati solve needs at least one step");
    t_.resize(steps + 1);
    y_.resize(steps + 1);
    dy_.resize(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) t_[k] = k == steps ? prob_.horizon : k * h_;
    y_[steps] = {prob_.QT, -prob_.LT, prob_.KT};
    dy_[steps] = derivative(t_[steps], y_[steps]);
    for (std::size_t k = steps; k-- > 0;) {
      const State& y = y_[k + 1];
      const double t = t_[k + 1];
      // dy/dt integrated backwards with step -h.
      const State k1 = derivative(t, y);
      const State k2 = derivative(t - 0.5 * h_, axpy(y, -0.5 * h_, k1));
      const State k3 = derivative(t - 0.5 * h_, axpy(y, -0.5 * h_, k2));
      const State k4 = derivative(t - h_, axpy(y, -h_, k3));
      for (int c = 0; c < 3; ++c)
        y_[k][c] = y[c] - h_ / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
      dy_[k] = derivative(t_[k], y_[k]);
    }
  }

  [[nodiscard]] const RiccatiProblem& problem() const noexcept { return prob_; }
  [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
  [[nodiscard]] double step() const noexcept { return h_; }

  [[nodiscard]] double p(double t) const { return eval(t, 0); }
  [[nodiscard]] double r(double t) const { return eval(t, 1); }
  [[nodiscard]] double c(double t) const { return eval(t, 2); }

  /// W(t, x) = p x^2 / 2 + r x + c
  [[nodiscard]] double value(double t, double x) const {
    return 0.5 * p(t) * x * x + r(t) * x + c(t);
  }
  /// Optimal correction u - ubar = -g (p x + r).
  [[nodiscard]] double feedback(double t, double x) const {
    return -prob_.g * (p(t) * x + r(t));
  }

  /// Closed-loop mean: d xbar/dt = A xbar + b - g^2 (p xbar + r), sampled at `times`.
  [[nodiscard]] Vector mean_trajectory(double x0, const Vector& times) const {
    Vector out(times.size());
    double x = x0;
    std::size_t next = 0;
    auto emit = [&](double t) {
      while (next < times.size() && std::abs(times[next] - t) <= 0.5 * h_) out[next++] = x;
    };
    auto rate = [&](double t, double xv) {
      return prob_.A * xv + prob_.b - prob_.g * prob_.g * (p(t) * xv + r(t));
    };
    emit(0.0);
    for (std::size_t k = 0; k < steps_; ++k) {
      const double t = t_[k];
      const double k1 = rate(t, x);
      const double k2 = rate(t + 0.5 * h_, x + 0.5 * h_ * k1);
      const double k3 = rate(t + 0.5 * h_, x + 0.5 * h_ * k2);
      const double k4 = rate(t + h_, x + h_ * k3);
      x += h_ / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      emit(t_[k + 1]);
    }
    require(next == times.size(), Errc::kInvalidArgument,
            "mean trajectory times must lie on the Riccati step grid");
    return out;
  }

 private:
  using State = std::array<double, 3>;

  static State axpy(const State& y, double a, const State& d) {
    return {y[0] + a * d[0], y[1] + a * d[1], y[2] + a * d[2]};
  }

  // dp/dt, dr/dt, dc/dt
  [[nodiscard]] State derivative(double t, const State& y) const {
    const double g2 = prob_.g * prob_.g;
    const double p = y[0], r = y[1];
    return {-(prob_.Q + 2.0 * prob_.A * p - g2 * p * p),
            -(-prob_.L(t) + prob_.A * r + prob_.b * p - g2 * p * r),
            -(prob_.K(t) + prob_.b * r + 0.5 * g2 * p - 0.5 * g2 * r * r)};
  }

  [[nodiscard]] double eval(double t, int c) const {
    const double s = std::clamp(t / h_, 0.0, static_cast<double>(steps_));
    const auto k = std::min(static_cast<std::size_t>(s), steps_ - 1);
    const double u = s - static_cast<double>(k);
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
    return h00 * y_[k][c] + h10 * h_ * dy_[k][c] + h01 * y_[k + 1][c] + h11 * h_ * dy_[k + 1][c];
  }

  RiccatiProblem prob_;
  std::size_t steps_;
  double h_;
  std::vector<double> t_;
  std::vector<State> y_;
  std::vector<State> dy_;
};

/// RK4 with step dt/10 (rounded so the step divides the horizon).
inline RiccatiSolution solve_riccati(const RiccatiProblem& problem, double dt) {
  require(dt > 0.0 && dt <= problem.horizon, Errc::kInvalidArgument, "dt must be in (0, T]");
  const auto coarse = static_cast<std::size_t>(std::ceil(problem.horizon / dt - 1e-9));
  return RiccatiSolution(problem, 10 * coarse);
}

/// Single-agent LQ tracking reference with center m(t) = center.c * t/T
/// (LinearCenter) or constant.
inline RiccatiSolution riccati_lq_reference(double q, double q_T, double sigma, double horizon,
                                            const CenterPath& center, double dt) {
  double offset = 0.0, slope = 0.0;
  if (const auto* c = std::get_if<ConstantCenter>(&center)) {
    require(c->c.size() == 1, Errc::kInvalidArgument, "center must be one-dimensional");
    offset = c->c[0];
  } else {
    const auto& l = std::get<LinearCenter>(center);
    require(l.c.size() == 1, Errc::kInvalidArgument, "center must be one-dimensional");
    slope = l.c[0];
  }
  return solve_riccati(lq_tracking_problem(q, q_T, sigma, horizon, offset, slope), dt);
}

/// exp(-W) sampled on a grid.
inline ZField zfield_from_riccati(const RiccatiSolution& sol, const Grid1D& grid,
                                  std::size_t player) {
  ZField field{grid, player, Vector((grid.nt + 1) * grid.nx)};
  for (std::size_t k = 0; k <= grid.nt; ++k)
    for (std::size_t j = 0; j < grid.nx; ++j)
      field.values[k * grid.nx + j] = std::exp(-sol.value(grid.t(k), grid.x(j)));
  return field;
}

// ============================================================================
// Policies backed by oracle solutions
// ============================================================================

/// u = ubar + g d/dx log Z read off a cached field.
inline FeedbackPolicy field_policy(std::shared_ptr<const ZField> field, double g, double ubar) {
  require(field != nullptr, Errc::kInvalidArgument, "null field");
  return {[field, g, ubar](double t, std::span<const double> x, std::span<double> u) {
            u[0] = ubar + g * field->log_gradient(t, x[0]);
          },
          "cached-field(player=" + std::to_string(field->player) + ")"};
}

/// u = ubar - g (p x + r).
inline FeedbackPolicy riccati_policy(std::shared_ptr<const RiccatiSolution> sol, double ubar) {
  require(sol != nullptr, Errc::kInvalidArgument, "null Riccati solution");
  return {[sol, ubar](double t, std::span<const double> x, std::span<double> u) {
            u[0] = ubar + sol->feedback(t, x[0]);
          },
          "riccati"};
}

/// Equilibrium policies of every player from the mixed Riccati solutions.
inline std::vector<FeedbackPolicy> riccati_equilibrium_policies(const GameSpec& spec) {
  std::vector<FeedbackPolicy> out;
  for (std::size_t i = 0; i < spec.players(); ++i) {
    auto sol = std::make_shared<const RiccatiSolution>(
        solve_riccati(mixed_riccati_problem(spec, i), spec.dt()));
    out.push_back(riccati_policy(std::move(sol), spec.nominal(i)[0]));
  }
  return out;
}

}  // namespace lsgame
