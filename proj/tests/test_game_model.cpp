#include "test_support.hpp"

#include <lsgame/game_model.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lsgame;
using lsgame::testing::two_well_game;

namespace {

void expect_code(Errc code, const auto& fn) {
  try {
    fn();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(InteractionMatrix, IdentityInverse) {
  const auto m = InteractionMatrix::build({{1, 0}, {0, 1}});
  EXPECT_EQ(m.beta(0, 0), 1.0);
  EXPECT_EQ(m.beta(0, 1), 0.0);
  EXPECT_EQ(m.beta(1, 1), 1.0);
}

TEST(InteractionMatrix, SymmetricGammaInverse) {
  const auto m = InteractionMatrix::symmetric_pair(0.6);
  EXPECT_NEAR(m.beta(0, 0), 1.5625, 1e-12);
  EXPECT_NEAR(m.beta(0, 1), -0.9375, 1e-12);
  EXPECT_NEAR(m.beta(1, 0), -0.9375, 1e-12);
  EXPECT_NEAR(m.beta(1, 1), 1.5625, 1e-12);
}

TEST(InteractionMatrix, RejectsSingularAndBadDiagonal) {
  expect_code(Errc::kSingularMatrix, [] { InteractionMatrix::build({{1, 1}, {1, 1}}); });
  expect_code(Errc::kSingularMatrix, [] { InteractionMatrix::symmetric_pair(1.0 - 1e-10); });
  expect_code(Errc::kNonPositiveDiagonal, [] { InteractionMatrix::build({{0, 0.1}, {0.1, 1}}); });
  expect_code(Errc::kInvalidArgument, [] { InteractionMatrix::build({{1, 0}}); });
}

TEST(InteractionMatrix, InverseRoundTripOnRandomMatrices) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> off(-0.4, 0.4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 4;
    Matrix a(n, Vector(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a[i][j] = i == j ? 1.0 + std::abs(off(rng)) : off(rng) / n;
    const auto m = InteractionMatrix::build(a);
    const Eigen::MatrixXd prod = m.alpha_matrix() * m.beta_matrix();
    EXPECT_LT((prod - Eigen::MatrixXd::Identity(n, n)).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_TRUE(std::isfinite(m.condition_number()));
  }
}

TEST(ColeHopf, ForwardExamples) {
  const auto I = InteractionMatrix::identity(2);
  const Vector zero{0.0, 0.0};
  EXPECT_EQ(cole_hopf_forward(zero, InteractionMatrix::symmetric_pair(0.3)), (Vector{1.0, 1.0}));
  const Vector j23{2.0, 3.0};
  const auto z = cole_hopf_forward(j23, I);
  EXPECT_NEAR(z[0], std::exp(-2.0), 1e-15);
  EXPECT_NEAR(z[1], std::exp(-3.0), 1e-15);
  const Vector ones{1.0, 1.0};
  const auto z6 = cole_hopf_forward(ones, InteractionMatrix::symmetric_pair(0.6));
  EXPECT_NEAR(z6[0], std::exp(-0.625), 1e-14);
  EXPECT_NEAR(z6[1], std::exp(-0.625), 1e-14);
  const Vector huge{1e4, 0.0};
  expect_code(Errc::kOverflow, [&] { cole_hopf_forward(huge, I); });
}

TEST(ColeHopf, InverseExamplesAndRoundTrip) {
  const auto I = InteractionMatrix::identity(2);
  const Vector ones{1.0, 1.0};
  EXPECT_EQ(cole_hopf_inverse(ones, InteractionMatrix::symmetric_pair(0.6)), (Vector{0.0, 0.0}));
  const Vector z{std::exp(-1.0), std::exp(-4.0)};
  const auto j = cole_hopf_inverse(z, I);
  EXPECT_NEAR(j[0], 1.0, 1e-14);
  EXPECT_NEAR(j[1], 4.0, 1e-14);
  const Vector bad{1.0, 0.0};
  expect_code(Errc::kNonPositiveDesirability, [&] { cole_hopf_inverse(bad, I); });

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(0.05, 3.0), gam(-0.9, 0.9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = InteractionMatrix::antisymmetric_pair(gam(rng));
    const Vector zz{pos(rng), pos(rng)};
    const auto back = cole_hopf_forward(cole_hopf_inverse(zz, m), m);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(back[k] / zz[k], 1.0, 1e-10);
    const Vector jj{gam(rng) * 5, gam(rng) * 5};
    const auto jb = cole_hopf_inverse(cole_hopf_forward(jj, m), m);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(jb[k], jj[k], 1e-10 * std::max(1.0, std::abs(jj[k])));
  }
}

TEST(MixedCost, WellExamples) {
  const Vector x{0.0};
  EXPECT_NEAR(mixed_running_cost(two_well_game(0.0), 0, 1.0, x), 0.5, 1e-14);
  EXPECT_NEAR(mixed_running_cost(two_well_game(0.6), 0, 1.0, x), 0.3125, 1e-14);
  const auto zero = lsgame::testing::zero_cost_game();
  EXPECT_EQ(mixed_running_cost(zero, 1, 0.3, x), 0.0);
  EXPECT_EQ(mixed_terminal_cost(zero, 0, x), 0.0);
}

TEST(MixedCost, IdentityAlphaGivesOwnCost) {
  const auto spec = two_well_game(0.0);
  for (double xv : {-2.0, -0.3, 0.0, 1.7}) {
    const Vector x{xv};
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(mixed_running_cost(spec, i, 0.4, x), spec.cost(i).running(0.4, x));
      EXPECT_EQ(mixed_terminal_cost(spec, i, x), spec.cost(i).terminal(x));
    }
  }
}

TEST(CostModel, QuadraticWellIsNonnegativeAndZeroAtCenter) {
  const auto spec = two_well_game(0.3);
  for (double t : {0.0, 0.25, 1.0}) {
    const Vector at{spec.cost(0).running_center(t, 0)};
    EXPECT_EQ(spec.cost(0).running(t, at), 0.0);
    for (double xv : {-3.0, -1.0, 0.5, 2.0}) {
      const Vector x{xv};
      const double m = -t;
      EXPECT_NEAR(spec.cost(0).running(t, x), 0.5 * (xv - m) * (xv - m), 1e-14);
      EXPECT_GE(spec.cost(0).running(t, x), 0.0);
    }
  }
}

TEST(GameSpec, ValidatesDefinition) {
  auto def = lsgame::testing::two_well_definition(0.2);
  def.dt = 0.03;
  expect_code(Errc::kInvalidArgument, [&] { GameSpec s(def); });
  def = lsgame::testing::two_well_definition(0.2);
  def.costs.pop_back();
  expect_code(Errc::kInvalidArgument, [&] { GameSpec s(def); });
  def = lsgame::testing::two_well_definition(0.2);
  def.horizon = 0.0;
  expect_code(Errc::kInvalidArgument, [&] { GameSpec s(def); });
  def = lsgame::testing::two_well_definition(0.2);
  def.nominal_controls = {ConstantNominal{{1.0, 2.0}}, ZeroNominal{}};
  expect_code(Errc::kInvalidArgument, [&] { GameSpec s(def); });
  const auto ok = two_well_game(0.2);
  EXPECT_EQ(ok.steps(), 100u);
  EXPECT_EQ(ok.players(), 2u);
  EXPECT_EQ(ok.nominal(1)[0], 0.0);
}
