#pragma once

// Game definition: dynamics, per-player costs, nominal controls, the
// interaction matrix, and the multivariate Cole-Hopf change of variables.

#include <lsgame/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace lsgame {

using Vector = std::vector<double>;
using Matrix = std::vector<Vector>;

inline constexpr double kDefaultConditionBound = 1e8;
inline constexpr double kDefaultExponentLimit = 700.0;

namespace detail {

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail

// ============================================================================
// InteractionMatrix
// ============================================================================

/// Weights alpha_ij between players together with beta = alpha^-1.
///
/// Construction solves for beta with a pivoted LU factorization and rejects
/// matrices whose 2-norm condition number exceeds the configured bound, so
/// every instance satisfies alpha*beta = beta*alpha = I to 1e-10 entrywise.
class InteractionMatrix {
 public:
  static InteractionMatrix build(const Matrix& entries,
                                 double cond_bound = kDefaultConditionBound) {
    const std::size_t n = entries.size();
    require(n > 0, Errc::kInvalidArgument, "interaction matrix is empty");
    Eigen::MatrixXd alpha(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      require(entries[i].size() == n, Errc::kInvalidArgument,
              "interaction matrix must be square");
      for (std::size_t j = 0; j < n; ++j) {
        require(std::isfinite(entries[i][j]), Errc::kInvalidArgument,
                "interaction matrix entries must be finite");
        alpha(i, j) = entries[i][j];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!(alpha(i, i) > 0.0))
        throw Error(Errc::kNonPositiveDiagonal,
                    "alpha[" + std::to_string(i) + "][" + std::to_string(i) +
                        "] = " + std::to_string(alpha(i, i)) + " must be > 0");
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(alpha);
    const auto& s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(s.size() - 1);
    const double cond = smin > 0.0 ? smax / smin : INFINITY;
    if (!std::isfinite(cond) || cond > cond_bound)
      throw Error(Errc::kSingularMatrix,
                  "interaction matrix is singular or ill-conditioned (cond = " +
                      std::to_string(cond) + ", bound = " +
                      std::to_string(cond_bound) + ")");

    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd beta = alpha.partialPivLu().solve(identity);
    const double err_ab = (alpha * beta - identity).cwiseAbs().maxCoeff();
    const double err_ba = (beta * alpha - identity).cwiseAbs().maxCoeff();
    if (!(err_ab < 1e-10 && err_ba < 1e-10))
      throw Error(Errc::kSingularMatrix,
                  "inverse round trip failed (residual " +
                      std::to_string(std::max(err_ab, err_ba)) + ")");
    return InteractionMatrix(std::move(alpha), std::move(beta), cond);
  }

  /// alpha(gamma) = [[1, gamma], [gamma, 1]]
  static InteractionMatrix symmetric_pair(double gamma,
                                          double cond_bound = kDefaultConditionBound) {
    return build({{1.0, gamma}, {gamma, 1.0}}, cond_bound);
  }

  /// alpha(gamma) = [[1, -gamma], [gamma, 1]]: one player repelled, the other attracted.
  static InteractionMatrix antisymmetric_pair(double gamma,
                                              double cond_bound = kDefaultConditionBound) {
    return build({{1.0, -gamma}, {gamma, 1.0}}, cond_bound);
  }

  static InteractionMatrix identity(std::size_t players) {
    Matrix m(players, Vector(players, 0.0));
    for (std::size_t i = 0; i < players; ++i) m[i][i] = 1.0;
    return build(m);
  }

  [[nodiscard]] std::size_t players() const noexcept {
    return static_cast<std::size_t>(alpha_.rows());
  }
  [[nodiscard]] double alpha(std::size_t i, std::size_t j) const { return alpha_(i, j); }
  [[nodiscard]] double beta(std::size_t i, std::size_t j) const { return beta_(i, j); }
  [[nodiscard]] const Eigen::MatrixXd& alpha_matrix() const noexcept { return alpha_; }
  [[nodiscard]] const Eigen::MatrixXd& beta_matrix() const noexcept { return beta_; }
  [[nodiscard]] double condition_number() const noexcept { return cond_; }

  [[nodiscard]] Matrix alpha_rows() const {
    Matrix out(players(), Vector(players()));
    for (std::size_t i = 0; i < players(); ++i)
      for (std::size_t j = 0; j < players(); ++j) out[i][j] = alpha_(i, j);
    return out;
  }

 private:
  InteractionMatrix(Eigen::MatrixXd alpha, Eigen::MatrixXd beta, double cond)
      : alpha_(std::move(alpha)), beta_(std::move(beta)), cond_(cond) {}

  Eigen::MatrixXd alpha_;
  Eigen::MatrixXd beta_;
  double cond_;
};

// ============================================================================
// Dynamics
// ============================================================================

struct ZeroDrift {};
struct ConstantDrift {
  Vector b;
};
/// f(x) = A x + b
struct LinearDrift {
  Matrix A;
  Vector b;
};
using DriftSpec = std::variant<ZeroDrift, ConstantDrift, LinearDrift>;

/// g = sigma * I (so input_dim == state_dim)
struct ScalarDiffusion {
  double sigma = 1.0;
};
/// constant n x m matrix
struct MatrixDiffusion {
  Matrix g;
};
using DiffusionSpec = std::variant<ScalarDiffusion, MatrixDiffusion>;

/// dx = f(x) dt + g dv with f from a built-in family and constant g.
class DynamicsModel {
 public:
  DynamicsModel(DriftSpec drift, DiffusionSpec diffusion, std::size_t state_dim)
      : drift_spec_(std::move(drift)), diffusion_spec_(std::move(diffusion)), n_(state_dim) {
    require(n_ > 0, Errc::kInvalidArgument, "state dimension must be positive");
    A_.assign(n_ * n_, 0.0);
    b_.assign(n_, 0.0);

    if (const auto* c = std::get_if<ConstantDrift>(&drift_spec_)) {
      require(c->b.size() == n_, Errc::kInvalidArgument, "constant drift b has wrong size");
      b_ = c->b;
    } else if (const auto* l = std::get_if<LinearDrift>(&drift_spec_)) {
      require(l->A.size() == n_ && l->b.size() == n_, Errc::kInvalidArgument,
              "linear drift A/b have wrong shape");
      for (std::size_t r = 0; r < n_; ++r) {
        require(l->A[r].size() == n_, Errc::kInvalidArgument, "linear drift A must be n x n");
        for (std::size_t c = 0; c < n_; ++c) A_[r * n_ + c] = l->A[r][c];
      }
      b_ = l->b;
      linear_ = true;
    }
    require(detail::all_finite(A_) && detail::all_finite(b_), Errc::kInvalidArgument,
            "drift coefficients must be finite");

    if (const auto* s = std::get_if<ScalarDiffusion>(&diffusion_spec_)) {
      require(std::isfinite(s->sigma) && s->sigma > 0.0, Errc::kInvalidArgument,
              "sigma must be positive and finite");
      m_ = n_;
      g_.assign(n_ * m_, 0.0);
      for (std::size_t d = 0; d < n_; ++d) g_[d * m_ + d] = s->sigma;
      scalar_ = true;
    } else {
      const auto& g = std::get<MatrixDiffusion>(diffusion_spec_).g;
      require(g.size() == n_ && !g.empty() && !g[0].empty(), Errc::kInvalidArgument,
              "diffusion matrix must have state_dim rows");
      m_ = g[0].size();
      g_.assign(n_ * m_, 0.0);
      for (std::size_t r = 0; r < n_; ++r) {
        require(g[r].size() == m_, Errc::kInvalidArgument, "diffusion matrix rows differ in length");
        for (std::size_t c = 0; c < m_; ++c) g_[r * m_ + c] = g[r][c];
      }
      require(detail::all_finite(g_), Errc::kInvalidArgument, "diffusion entries must be finite");
    }
  }

  [[nodiscard]] std::size_t state_dim() const noexcept { return n_; }
  [[nodiscard]] std::size_t input_dim() const noexcept { return m_; }
  [[nodiscard]] const DriftSpec& drift_spec() const noexcept { return drift_spec_; }
  [[nodiscard]] const DiffusionSpec& diffusion_spec() const noexcept { return diffusion_spec_; }
  [[nodiscard]] bool has_linear_drift() const noexcept { return linear_; }
  [[nodiscard]] double g(std::size_t r, std::size_t c) const { return g_[r * m_ + c]; }
  [[nodiscard]] double drift_matrix(std::size_t r, std::size_t c) const { return A_[r * n_ + c]; }
  [[nodiscard]] double drift_offset(std::size_t r) const { return b_[r]; }

  /// The diffusion as a single constant sigma, when the model is 1-D (n = m = 1).
  [[nodiscard]] double scalar_sigma() const {
    require(n_ == 1 && m_ == 1, Errc::kInvalidArgument, "model is not one-dimensional");
    return g_[0];
  }

  /// out = f(x)
  void drift(std::span<const double> x, std::span<double> out) const noexcept {
    for (std::size_t r = 0; r < n_; ++r) {
      double acc = b_[r];
      if (linear_)
        for (std::size_t c = 0; c < n_; ++c) acc += A_[r * n_ + c] * x[c];
      out[r] = acc;
    }
  }

  /// out += scale * g v
  void add_g_times(std::span<const double> v, double scale, std::span<double> out) const noexcept {
    for (std::size_t r = 0; r < n_; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < m_; ++c) acc += g_[r * m_ + c] * v[c];
      out[r] += scale * acc;
    }
  }

 private:
  DriftSpec drift_spec_;
  DiffusionSpec diffusion_spec_;
  std::size_t n_;
  std::size_t m_ = 0;
  Vector A_;
  Vector b_;
  Vector g_;
  bool linear_ = false;
  bool scalar_ = false;
};

// ============================================================================
// Costs
// ============================================================================

struct ConstantCenter {
  Vector c;
};
/// m(t) = c * (t / T)
struct LinearCenter {
  Vector c;
};
using CenterPath = std::variant<ConstantCenter, LinearCenter>;

struct ZeroRunningCost {};
/// (q/2) * |x - m(t)|^2
struct QuadraticWellCost {
  double q = 0.0;
  CenterPath center = ConstantCenter{};
};
using RunningCostSpec = std::variant<ZeroRunningCost, QuadraticWellCost>;

struct ZeroTerminalCost {};
/// (q_T/2) * |x - m(T)|^2
struct QuadraticTerminalCost {
  double q_T = 0.0;
  CenterPath center = ConstantCenter{};
};
using TerminalCostSpec = std::variant<ZeroTerminalCost, QuadraticTerminalCost>;

struct PlayerCostSpec {
  RunningCostSpec running = ZeroRunningCost{};
  TerminalCostSpec terminal = ZeroTerminalCost{};
};

/// One player's running and terminal cost, compiled to the quadratic form
/// (k/2)|x - (offset + slope * t/T)|^2. Zero costs compile to k = 0.
class CostModel {
 public:
  CostModel(PlayerCostSpec spec, std::size_t state_dim, double horizon)
      : spec_(std::move(spec)), horizon_(horizon) {
    run_offset_.assign(state_dim, 0.0);
    run_slope_.assign(state_dim, 0.0);
    term_center_.assign(state_dim, 0.0);

    auto unpack = [&](const CenterPath& path, Vector& offset, Vector& slope) {
      std::visit(
          [&](const auto& p) {
            require(p.c.size() == state_dim, Errc::kInvalidArgument,
                    "cost center has wrong dimension");
            require(detail::all_finite(p.c), Errc::kInvalidArgument, "cost center must be finite");
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, ConstantCenter>)
              offset = p.c;
            else
              slope = p.c;
          },
          path);
    };

    if (const auto* w = std::get_if<QuadraticWellCost>(&spec_.running)) {
      require(std::isfinite(w->q) && w->q >= 0.0, Errc::kInvalidArgument, "q must be >= 0");
      q_run_ = w->q;
      unpack(w->center, run_offset_, run_slope_);
    }
    if (const auto* tc = std::get_if<QuadraticTerminalCost>(&spec_.terminal)) {
      require(std::isfinite(tc->q_T) && tc->q_T >= 0.0, Errc::kInvalidArgument,
              "q_T must be >= 0");
      q_term_ = tc->q_T;
      Vector offset(state_dim, 0.0), slope(state_dim, 0.0);
      unpack(tc->center, offset, slope);
      for (std::size_t d = 0; d < state_dim; ++d) term_center_[d] = offset[d] + slope[d];
    }
  }

  [[nodiscard]] const PlayerCostSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] double running_stiffness() const noexcept { return q_run_; }
  [[nodiscard]] double terminal_stiffness() const noexcept { return q_term_; }

  [[nodiscard]] double running_center(double t, std::size_t d) const noexcept {
    return run_offset_[d] + run_slope_[d] * (t / horizon_);
  }
  [[nodiscard]] double terminal_center(std::size_t d) const noexcept { return term_center_[d]; }

  [[nodiscard]] double running(double t, std::span<const double> x) const noexcept {
    const double tau = t / horizon_;
    double sum = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double e = x[d] - (run_offset_[d] + run_slope_[d] * tau);
      sum += e * e;
    }
    return 0.5 * q_run_ * sum;
  }

  [[nodiscard]] double terminal(std::span<const double> x) const noexcept {
    double sum = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double e = x[d] - term_center_[d];
      sum += e * e;
    }
    return 0.5 * q_term_ * sum;
  }

 private:
  PlayerCostSpec spec_;
  double horizon_;
  double q_run_ = 0.0;
  double q_term_ = 0.0;
  Vector run_offset_;
  Vector run_slope_;
  Vector term_center_;
};

// ============================================================================
// Nominal controls and the full game
// ============================================================================

struct ZeroNominal {};
struct ConstantNominal {
  Vector u;
};
using NominalControlSpec = std::variant<ZeroNominal, ConstantNominal>;

/// Plain description of a game. Validated and compiled by GameSpec.
struct GameDefinition {
  DriftSpec drift = ZeroDrift{};
  DiffusionSpec diffusion = ScalarDiffusion{1.0};
  std::vector<PlayerCostSpec> costs;
  /// Empty means zero nominal control for every player.
  std::vector<NominalControlSpec> nominal_controls;
  Matrix alpha;
  double horizon = 1.0;
  double dt = 0.01;
  Vector initial_state = {0.0};
  double cond_bound = kDefaultConditionBound;
};

class GameSpec {
 public:
  explicit GameSpec(GameDefinition def)
      : def_(std::move(def)),
        interaction_(InteractionMatrix::build(def_.alpha, def_.cond_bound)),
        dynamics_(def_.drift, def_.diffusion, def_.initial_state.size()) {
    const std::size_t n_players = interaction_.players();
    require(std::isfinite(def_.horizon) && def_.horizon > 0.0, Errc::kInvalidArgument,
            "horizon must be > 0");
    require(std::isfinite(def_.dt) && def_.dt > 0.0 && def_.dt <= def_.horizon,
            Errc::kInvalidArgument, "dt must satisfy 0 < dt <= horizon");
    const double ratio = def_.horizon / def_.dt;
    steps_ = static_cast<std::size_t>(std::llround(ratio));
    require(steps_ >= 1 && std::abs(static_cast<double>(steps_) * def_.dt - def_.horizon) <=
                               1e-9 * def_.horizon,
            Errc::kInvalidArgument, "horizon / dt must be an integer number of steps");
    require(detail::all_finite(def_.initial_state), Errc::kInvalidArgument,
            "initial state must be finite");
    require(def_.costs.size() == n_players, Errc::kInvalidArgument,
            "costs list length must match the interaction dimension");
    if (def_.nominal_controls.empty()) def_.nominal_controls.assign(n_players, ZeroNominal{});
    require(def_.nominal_controls.size() == n_players, Errc::kInvalidArgument,
            "nominal_controls length must match the interaction dimension");

    costs_.reserve(n_players);
    for (const auto& c : def_.costs)
      costs_.emplace_back(c, dynamics_.state_dim(), def_.horizon);
    nominal_.reserve(n_players);
    for (const auto& u : def_.nominal_controls) {
      Vector ubar(dynamics_.input_dim(), 0.0);
      if (const auto* cu = std::get_if<ConstantNominal>(&u)) {
        require(cu->u.size() == dynamics_.input_dim(), Errc::kInvalidArgument,
                "nominal control has wrong dimension");
        require(detail::all_finite(cu->u), Errc::kInvalidArgument,
                "nominal control must be finite");
        ubar = cu->u;
      }
      nominal_.push_back(std::move(ubar));
    }
  }

  [[nodiscard]] const GameDefinition& definition() const noexcept { return def_; }
  [[nodiscard]] std::size_t players() const noexcept { return interaction_.players(); }
  [[nodiscard]] double horizon() const noexcept { return def_.horizon; }
  [[nodiscard]] double dt() const noexcept { return def_.dt; }
  [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
  [[nodiscard]] std::span<const double> initial_state() const noexcept { return def_.initial_state; }
  [[nodiscard]] std::size_t state_dim() const noexcept { return dynamics_.state_dim(); }
  [[nodiscard]] std::size_t input_dim() const noexcept { return dynamics_.input_dim(); }
  [[nodiscard]] const InteractionMatrix& interaction() const noexcept { return interaction_; }
  [[nodiscard]] const DynamicsModel& dynamics() const noexcept { return dynamics_; }
  [[nodiscard]] const CostModel& cost(std::size_t i) const { return costs_.at(i); }
  [[nodiscard]] std::span<const double> nominal(std::size_t i) const { return nominal_.at(i); }

  /// Same game with a different interaction matrix.
  [[nodiscard]] GameSpec with_alpha(Matrix alpha) const {
    GameDefinition def = def_;
    def.alpha = std::move(alpha);
    return GameSpec(std::move(def));
  }

 private:
  GameDefinition def_;
  InteractionMatrix interaction_;
  DynamicsModel dynamics_;
  std::vector<CostModel> costs_;
  std::vector<Vector> nominal_;
  std::size_t steps_ = 0;
};

// ============================================================================
// Cole-Hopf transformation and beta-mixed costs
// ============================================================================

/// Z_i = exp(-sum_j beta_ij J_j)
inline Vector cole_hopf_forward(std::span<const double> values, const InteractionMatrix& interaction,
                                double exponent_limit = kDefaultExponentLimit) {
  const std::size_t n = interaction.players();
  require(values.size() == n, Errc::kInvalidArgument, "value vector has wrong length");
  require(detail::all_finite(values), Errc::kInvalidArgument, "value vector must be finite");
  Vector z(n);
  for (std::size_t i = 0; i < n; ++i) {
    double exponent = 0.0;
    for (std::size_t j = 0; j < n; ++j) exponent -= interaction.beta(i, j) * values[j];
    if (std::abs(exponent) > exponent_limit)
      throw Error(Errc::kOverflow, "desirability exponent " + std::to_string(exponent) +
                                       " exceeds limit " + std::to_string(exponent_limit));
    z[i] = std::exp(exponent);
  }
  return z;
}

/// J_i = -sum_j alpha_ij log Z_j
inline Vector cole_hopf_inverse(std::span<const double> desirability,
                                const InteractionMatrix& interaction) {
  const std::size_t n = interaction.players();
  require(desirability.size() == n, Errc::kInvalidArgument, "desirability vector has wrong length");
  Vector log_z(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (!(desirability[j] > 0.0) || !std::isfinite(desirability[j]))
      throw Error(Errc::kNonPositiveDesirability,
                  "Z[" + std::to_string(j) + "] = " + std::to_string(desirability[j]));
    log_z[j] = std::log(desirability[j]);
  }
  Vector values(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) values[i] -= interaction.alpha(i, j) * log_z[j];
  return values;
}

/// sum_j beta_ij C^j(t, x). Negative values are legitimate when beta has
/// negative off-diagonal entries.
inline double mixed_running_cost(const GameSpec& spec, std::size_t i, double t,
                                 std::span<const double> x) {
  require(i < spec.players(), Errc::kInvalidArgument, "player index out of range");
  require(t >= -1e-12 && t <= spec.horizon() * (1.0 + 1e-12), Errc::kInvalidArgument,
          "time outside [0, T]");
  double sum = 0.0;
  for (std::size_t j = 0; j < spec.players(); ++j)
    sum += spec.interaction().beta(i, j) * spec.cost(j).running(t, x);
  return sum;
}

/// sum_j beta_ij Psi_j(x)
inline double mixed_terminal_cost(const GameSpec& spec, std::size_t i, std::span<const double> x) {
  require(i < spec.players(), Errc::kInvalidArgument, "player index out of range");
  double sum = 0.0;
  for (std::size_t j = 0; j < spec.players(); ++j)
    sum += spec.interaction().beta(i, j) * spec.cost(j).terminal(x);
  return sum;
}

}  // namespace lsgame
