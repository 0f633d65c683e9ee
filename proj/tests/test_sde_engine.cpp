#include "test_support.hpp"

#include <lsgame/rng.hpp>
#include <lsgame/sde_engine.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace lsgame;

namespace {

GameSpec brownian(double dt = 0.01, double horizon = 1.0) {
  GameDefinition def;
  def.costs.assign(1, PlayerCostSpec{});
  def.alpha = {{1.0}};
  def.dt = dt;
  def.horizon = horizon;
  return GameSpec(def);
}

double variance_at_end(const TrajectoryBatch& b) {
  double mean = 0.0, sq = 0.0;
  const auto M = static_cast<double>(b.paths());
  for (std::size_t p = 0; p < b.paths(); ++p) mean += b.state(p, b.steps())[0];
  mean /= M;
  for (std::size_t p = 0; p < b.paths(); ++p) {
    const double e = b.state(p, b.steps())[0] - mean;
    sq += e * e;
  }
  return sq / (M - 1.0);
}

}  // namespace

TEST(Philox, KnownAnswerVectors) {
  using B = Philox4x32::Block;
  using K = Philox4x32::Key;
  EXPECT_EQ(Philox4x32::generate(B{0, 0, 0, 0}, K{0, 0}),
            (B{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32::generate(B{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                 K{0xffffffffu, 0xffffffffu}),
            (B{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32::generate(B{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                 K{0xa4093822u, 0x299f31d0u}),
            (B{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Rng, StreamsArePureFunctionsOfSeedAndId) {
  NormalStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  const double xa = a(), xb = b(), xc = c(), xd = d();
  EXPECT_EQ(xa, xb);
  EXPECT_NE(xa, xc);
  EXPECT_NE(xa, xd);
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(5, 1, 2), derive_seed(derive_seed(5, 1), 2));
}

TEST(Rollout, BrownianTerminalVariance) {
  const auto spec = brownian();
  const Vector x0{0.0};
  const auto batch = rollout_reference(spec, 0, 0.0, x0, 100000, 1234);
  const double v = variance_at_end(batch);
  EXPECT_GE(v, 0.97);
  EXPECT_LE(v, 1.03);
  EXPECT_NEAR(batch.time(batch.steps()), 1.0, 1e-12);
  for (std::size_t p = 0; p < batch.paths(); p += 997) EXPECT_EQ(batch.state(p, 0)[0], 0.0);
}

TEST(Rollout, NoiseMomentsPassSanityChecks) {
  const auto spec = brownian();
  const Vector x0{0.0};
  const auto batch = rollout_reference(spec, 0, 0.0, x0, 20000, 99);
  const auto& n = batch.noises_data();
  double mean = 0.0, sq = 0.0;
  for (double w : n) mean += w;
  mean /= static_cast<double>(n.size());
  for (double w : n) sq += (w - mean) * (w - mean);
  const double var = sq / static_cast<double>(n.size() - 1);
  EXPECT_LT(std::abs(mean), 4.0 * std::sqrt(0.01 / static_cast<double>(n.size())));
  EXPECT_NEAR(var / 0.01, 1.0, 0.05);
}

TEST(Rollout, SingleStepIsExact) {
  const auto spec = brownian(1.0, 1.0);
  const Vector x0{0.3};
  const auto batch = rollout_reference(spec, 0, 0.0, x0, 50, 5);
  for (std::size_t p = 0; p < batch.paths(); ++p)
    EXPECT_EQ(batch.state(p, 1)[0], 0.3 + batch.noise(p, 0)[0]);
}

TEST(Rollout, DeterministicAndWorkerIndependent) {
  const auto spec = lsgame::testing::two_well_game(0.6);
  const Vector x0{0.0};
  const auto a = rollout_reference(spec, 1, 0.0, x0, 1001, 77, RolloutOptions{1, false});
  const auto b = rollout_reference(spec, 1, 0.0, x0, 1001, 77, RolloutOptions{4, false});
  const auto c = rollout_reference(spec, 1, 0.0, x0, 1001, 77, RolloutOptions{1, false});
  EXPECT_EQ(a.states_data(), b.states_data());
  EXPECT_EQ(a.noises_data(), b.noises_data());
  EXPECT_EQ(a.states_data(), c.states_data());
  const auto d = rollout_reference(spec, 1, 0.0, x0, 1001, 78);
  EXPECT_NE(a.states_data(), d.states_data());
}

TEST(Rollout, NominalPolicyReproducesReference) {
  const auto spec = lsgame::testing::two_well_game(0.6);
  const Vector x0{0.2};
  const auto ref = rollout_reference(spec, 0, 0.0, x0, 300, 8);
  const auto ctl = rollout_controlled(spec, 0, nominal_policy(spec, 0), 0.0, x0, 300, 8);
  EXPECT_EQ(ref.states_data(), ctl.states_data());
  EXPECT_TRUE(ctl.has_controls());
  EXPECT_FALSE(ref.has_controls());
}

TEST(Rollout, OrnsteinUhlenbeckVariance) {
  const auto spec = brownian();
  const Vector x0{0.0};
  const auto batch =
      rollout_controlled(spec, 0, linear_feedback_policy({{-1.0}}, {0.0}), 0.0, x0, 100000, 21);
  const double exact = (1.0 - std::exp(-2.0)) / 2.0;
  EXPECT_NEAR(variance_at_end(batch) / exact, 1.0, 0.03);
}

TEST(Rollout, WeakOrderOneOnOrnsteinUhlenbeckMean) {
  // dx = -x dt + dw from x0 = 1: E[x_T] = e^{-T}. Euler mean is (1 - dt)^K exactly.
  GameDefinition def;
  def.drift = LinearDrift{{{-1.0}}, {0.0}};
  def.costs.assign(1, PlayerCostSpec{});
  def.alpha = {{1.0}};
  const Vector x0{1.0};
  double errors[2];
  int k = 0;
  for (double dt : {0.1, 0.05}) {
    def.dt = dt;
    const GameSpec spec(def);
    const auto b = rollout_reference(spec, 0, 0.0, x0, 1, 0, RolloutOptions{1, true});
    errors[k++] = std::abs(b.state(0, b.steps())[0] - std::exp(-1.0));
  }
  const double factor = errors[0] / errors[1];
  EXPECT_GE(factor, 1.5);
  EXPECT_LE(factor, 3.0);
}

TEST(Rollout, ZeroNoiseMatchesOdeWithinStepSize) {
  GameDefinition def;
  def.drift = LinearDrift{{{-1.0}}, {0.5}};
  def.costs.assign(1, PlayerCostSpec{});
  def.alpha = {{1.0}};
  def.dt = 0.01;
  const GameSpec spec(def);
  const Vector x0{2.0};
  const auto b = rollout_reference(spec, 0, 0.0, x0, 1, 0, RolloutOptions{1, true});
  for (std::size_t k = 0; k <= b.steps(); k += 10) {
    const double t = b.time(k);
    const double exact = 0.5 + 1.5 * std::exp(-t);
    EXPECT_NEAR(b.state(0, k)[0], exact, 0.01);
  }
}

TEST(Rollout, ErrorsOnBadInputs) {
  const auto spec = brownian();
  const Vector x0{0.0};
  EXPECT_THROW(rollout_reference(spec, 0, 0.0, x0, 0, 1), Error);
  EXPECT_THROW(rollout_reference(spec, 0, 1.0, x0, 10, 1), Error);
  const auto nan_policy = constant_policy({std::nan("")});
  try {
    rollout_controlled(spec, 0, nan_policy, 0.0, x0, 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNonFiniteControl);
  }
  GameDefinition def;
  def.drift = LinearDrift{{{1e6}}, {0.0}};
  def.costs.assign(1, PlayerCostSpec{});
  def.alpha = {{1.0}};
  def.dt = 0.01;
  const Vector one{1.0};
  try {
    rollout_reference(GameSpec(def), 0, 0.0, one, 2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNonFiniteState);
  }
}

TEST(Rollout, CsvColumns) {
  const auto spec = brownian(0.5, 1.0);
  const Vector x0{0.0};
  const auto ctl = rollout_controlled(spec, 0, constant_policy({0.25}), 0.0, x0, 2, 3);
  std::ostringstream os;
  write_csv(os, ctl);
  std::istringstream in(os.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "path,step,t,x_1,u_1");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 2 * 3);
}
