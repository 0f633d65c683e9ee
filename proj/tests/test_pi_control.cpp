#include "test_support.hpp"

#include <lsgame/measure_recovery.hpp>
#include <lsgame/oracles.hpp>
#include <lsgame/pi_control.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace lsgame;
using lsgame::testing::two_well_game;

TEST(ControlEstimate, ZeroCostGivesNominalWithinNoise) {
  const auto spec = lsgame::testing::zero_cost_game();
  const Vector x{0.3};
  const std::size_t M = 20000;
  const auto est = control_estimate(spec, 0, 0.0, x, M, 5);
  const double sigma_hat = std::sqrt(spec.dt()) / spec.dt();
  EXPECT_LE(std::abs(est.value[0] - spec.nominal(0)[0]), 4.0 * sigma_hat / std::sqrt(double(M)));
  EXPECT_NEAR(est.std_error[0], sigma_hat / std::sqrt(double(M)), 0.05 * sigma_hat / std::sqrt(double(M)));
  EXPECT_EQ(est.ess, double(M));
}

TEST(ControlEstimate, ZeroCostAveragedOverManyStates) {
  const auto spec = lsgame::testing::zero_cost_game();
  double sum_abs = 0.0, sum_se = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Vector x{-2.0 + 0.04 * k};
    const auto est = control_estimate(spec, 1, 0.5, x, 1000, derive_seed(3, k));
    sum_abs += std::abs(est.value[0]);
    sum_se += est.std_error[0];
  }
  EXPECT_LE(sum_abs / 100.0, 4.0 * sum_se / 100.0);
}

TEST(ControlEstimate, NominalControlOffset) {
  auto def = lsgame::testing::two_well_definition(0.0);
  for (auto& c : def.costs) c = PlayerCostSpec{};
  def.nominal_controls = {ConstantNominal{{0.7}}, ZeroNominal{}};
  const GameSpec spec(def);
  const Vector x{0.0};
  const auto est = control_estimate(spec, 0, 0.0, x, 20000, 8);
  EXPECT_NEAR(est.value[0], 0.7, 4.0 * est.std_error[0]);
}

TEST(ControlEstimate, MatchesRiccatiFeedbackAtGammaZero) {
  const auto spec = two_well_game(0.0);
  const auto sol = riccati_lq_reference(1.0, 1.0, 1.0, 1.0, LinearCenter{{-1.0}}, spec.dt());
  const Vector x{1.0};
  const auto est = control_estimate(spec, 0, 0.0, x, 100000, 17);
  const double target = sol.feedback(0.0, 1.0);
  EXPECT_LE(std::abs(est.value[0] - target), std::max(0.05 * std::abs(target), 3.0 * est.std_error[0]))
      << est.value[0] << " vs " << target << " se " << est.std_error[0];
}

TEST(ControlEstimate, StackedFirstOrderConditionHolds) {
  // sum_j alpha_ij (u^j - ubar^j) + g dJ^i/dx = 0 with J^i from the FD fields.
  const auto spec = two_well_game(0.6);
  const auto grid = default_grid(spec, 401, 400);
  const std::vector<ZField> fields{solve_linear_pde_fd(spec, 0, grid), solve_linear_pde_fd(spec, 1, grid)};
  const double x = 0.3;
  const Vector xs{x};
  std::vector<ControlEstimate> u;
  for (std::size_t j = 0; j < 2; ++j) u.push_back(control_estimate(spec, j, 0.0, xs, 100000, 40 + j));
  const auto& a = spec.interaction();
  for (std::size_t i = 0; i < 2; ++i) {
    double gradJ = 0.0;
    for (std::size_t l = 0; l < 2; ++l) gradJ -= a.alpha(i, l) * fields[l].log_gradient(0.0, x);
    double lhs = 0.0, var = 0.0, dominant = std::abs(gradJ);
    for (std::size_t j = 0; j < 2; ++j) {
      lhs += a.alpha(i, j) * u[j].value[0];
      var += std::pow(a.alpha(i, j) * u[j].std_error[0], 2);
      dominant = std::max(dominant, std::abs(a.alpha(i, j) * u[j].value[0]));
    }
    const double residual = lhs + gradJ;
    EXPECT_LE(std::abs(residual), std::max(0.05 * dominant, 3.0 * std::sqrt(var))) << "player " << i;
  }
}

TEST(ControlEstimate, HorizonExhausted) {
  const auto spec = two_well_game(0.0);
  const Vector x{0.0};
  try {
    control_estimate(spec, 0, 1.0, x, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kHorizonExhausted);
  }
}

TEST(PiPolicy, DeterministicQueries) {
  const auto spec = two_well_game(0.6);
  const auto policy = make_pi_policy(spec, 0, 500, 9);
  const Vector x{0.25};
  Vector u1(1), u2(1), u3(1);
  policy(0.3, x, u1);
  policy(0.3, x, u2);
  const Vector y{0.2500001};
  policy(0.3, y, u3);
  EXPECT_EQ(u1, u2);
  EXPECT_NE(u1, u3);
  EXPECT_NE(policy.descriptor.find("M=500"), std::string::npos);
}

TEST(PiPolicy, ZeroCostClosedLoopMatchesReference) {
  const auto spec = lsgame::testing::zero_cost_game();
  const Vector x0{0.0};
  const auto policy = make_pi_policy(spec, 0, 100, 3);
  const auto ctl = rollout_controlled(spec, 0, policy, 0.0, x0, 400, 4);
  const auto ref = rollout_reference(spec, 0, 0.0, x0, 400, 5);
  const auto mc = mean_path(ctl), mr = mean_path(ref);
  const std::size_t K = spec.steps();
  EXPECT_LE(std::abs(mc.at(K) - mr.at(K)), 4.0 * std::hypot(mc.se(K), mr.se(K)));
}

TEST(NashClosedLoop, SinglePlayerZeroCostVariance) {
  GameDefinition def;
  def.costs.assign(1, PlayerCostSpec{});
  def.alpha = {{1.0}};
  def.dt = 0.1;
  const GameSpec spec(def);
  const auto batches = nash_closed_loop(spec, 100, 10000, 6);
  ASSERT_EQ(batches.size(), 1u);
  const auto& b = batches[0];
  double mean = 0.0, sq = 0.0;
  for (std::size_t p = 0; p < b.paths(); ++p) mean += b.state(p, b.steps())[0];
  mean /= double(b.paths());
  for (std::size_t p = 0; p < b.paths(); ++p) sq += std::pow(b.state(p, b.steps())[0] - mean, 2);
  EXPECT_NEAR(sq / double(b.paths() - 1), 1.0, 0.05);
}

TEST(NashClosedLoop, RepulsiveRegimeTerminalMeansHaveOppositeSigns) {
  const auto spec = two_well_game(0.6);
  const auto batches = nash_closed_loop(spec, 2000, 30, 11);
  const std::size_t K = spec.steps();
  const auto m1 = mean_path(batches[0]), m2 = mean_path(batches[1]);
  EXPECT_LT(m1.at(K), 0.0);
  EXPECT_GT(m2.at(K), 0.0);
}
