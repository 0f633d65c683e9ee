#include "test_support.hpp"

#include <lsgame/oracles.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace lsgame;
using lsgame::testing::gaussian_game;
using lsgame::testing::gaussian_Z;
using lsgame::testing::two_well_game;

namespace {

double gaussian_fd_error(std::size_t nx, std::size_t nt) {
  const auto spec = gaussian_game();
  const auto grid = default_grid(spec, nx, nt);
  const auto field = solve_linear_pde_fd(spec, 0, grid);
  return std::abs(field.value(0.0, 0.0) - gaussian_Z(0.0));
}

}  // namespace

TEST(FdSolver, ZeroCostsStayExactlyOne) {
  const auto spec = lsgame::testing::zero_cost_game();
  const auto grid = default_grid(spec, 101, 50);
  const auto field = solve_linear_pde_fd(spec, 0, grid);
  for (double v : field.values) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(FdSolver, GaussianBenchmarkAccuracy) {
  const double rel = gaussian_fd_error(801, 2000) / gaussian_Z(0.0);
  EXPECT_LE(rel, 0.002);
}

TEST(FdSolver, SecondOrderConvergence) {
  const double e1 = gaussian_fd_error(201, 250);
  const double e2 = gaussian_fd_error(401, 500);
  EXPECT_GE(e1 / e2, 3.0);
  EXPECT_LE(e1 / e2, 5.0);
}

TEST(FdSolver, TerminalRowIsExactAndFieldPositive) {
  const auto spec = two_well_game(0.6);
  const auto grid = default_grid(spec, 201, 100);
  const auto field = solve_linear_pde_fd(spec, 1, grid);
  ASSERT_EQ(field.values.size(), (grid.nt + 1) * grid.nx);
  for (std::size_t j = 0; j < grid.nx; ++j) {
    const Vector x{grid.x(j)};
    EXPECT_EQ(field.at(grid.nt, j), std::exp(-mixed_terminal_cost(spec, 1, x)));
  }
  for (double v : field.values) EXPECT_GT(v, 0.0);
}

TEST(FdSolver, ExplicitSchemeAgreesWithCrankNicolson) {
  const auto spec = gaussian_game();
  const auto grid = default_grid(spec, 201, 400);
  FdOptions explicit_opts;
  explicit_opts.scheme = FdScheme::kExplicit;
  const auto a = solve_linear_pde_fd(spec, 0, grid);
  const auto b = solve_linear_pde_fd(spec, 0, grid, explicit_opts);
  EXPECT_NEAR(a.value(0.0, 0.0), b.value(0.0, 0.0), 1e-3);
  const auto coarse = default_grid(spec, 201, 10);
  EXPECT_THROW(solve_linear_pde_fd(spec, 0, coarse, explicit_opts), Error);
}

TEST(FdSolver, NarrowDomainIsDetected) {
  const auto spec = two_well_game(0.6);
  const auto grid = Grid1D::make(-0.6, 0.6, 61, 100, spec.horizon());
  try {
    solve_linear_pde_fd(spec, 0, grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDomainTooNarrow);
  }
}

TEST(FdSolver, OscillationIsReportedAsInstability) {
  // Crank-Nicolson with one huge time step on a sharp terminal profile.
  const auto spec = gaussian_game(2000.0, 1.0, 0.25, 0.25);
  const auto grid = Grid1D::make(-3.0, 3.0, 601, 1, spec.horizon());
  FdOptions opts;
  opts.probe_domain = false;
  try {
    solve_linear_pde_fd(spec, 0, grid, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kInstabilityDetected);
  }
}

TEST(FdSolver, CsvExport) {
  const auto spec = gaussian_game();
  const auto field = solve_linear_pde_fd(spec, 0, Grid1D::make(-3, 3, 5, 2, spec.horizon()),
                                         FdOptions{FdScheme::kCrankNicolson, false, {}, 1e-4, 0.9});
  std::ostringstream os;
  write_csv(os, field);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x,Z");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3 * 5);
}

TEST(HjbResidual, ZeroCostGameIsExactlyZero) {
  const auto spec = lsgame::testing::zero_cost_game();
  const auto grid = default_grid(spec, 101, 50);
  const std::vector<ZField> fields{solve_linear_pde_fd(spec, 0, grid), solve_linear_pde_fd(spec, 1, grid)};
  for (const auto& r : hjb_residual(spec, fields)) EXPECT_LE(r.max_abs, 1e-12);
}

TEST(HjbResidual, ShrinksUnderRefinement) {
  const auto spec = two_well_game(0.6);
  double previous = 0.0;
  for (std::size_t level = 0; level < 2; ++level) {
    const std::size_t nx = 101 * (1u << level) - (level ? 1 : 0);
    const std::size_t nt = 50 * (1u << level);
    const auto grid = default_grid(spec, nx, nt);
    const std::vector<ZField> fields{solve_linear_pde_fd(spec, 0, grid), solve_linear_pde_fd(spec, 1, grid)};
    double worst = 0.0;
    for (const auto& r : hjb_residual(spec, fields)) worst = std::max(worst, r.max_scaled);
    if (level > 0) EXPECT_GE(previous / worst, 2.0);
    previous = worst;
  }
}

TEST(HjbResidual, GammaZeroFdAndRiccatiFieldsBothSmall) {
  const auto spec = two_well_game(0.0);
  const auto grid = default_grid(spec, 801, 800);
  std::vector<ZField> fd, ric;
  for (std::size_t i = 0; i < 2; ++i) {
    fd.push_back(solve_linear_pde_fd(spec, i, grid));
    ric.push_back(zfield_from_riccati(solve_riccati(mixed_riccati_problem(spec, i), spec.dt()), grid, i));
  }
  for (const auto& r : hjb_residual(spec, fd)) EXPECT_LE(r.max_scaled, 2e-3);
  for (const auto& r : hjb_residual(spec, ric)) EXPECT_LE(r.max_scaled, 2e-3);
}

TEST(HjbResidual, GridMismatch) {
  const auto spec = two_well_game(0.6);
  const std::vector<ZField> fields{solve_linear_pde_fd(spec, 0, default_grid(spec, 101, 50)),
                                   solve_linear_pde_fd(spec, 1, default_grid(spec, 121, 50))};
  try {
    hjb_residual(spec, fields);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kGridMismatch);
  }
}

TEST(Riccati, ZeroCostsGiveZeroSolution) {
  const auto sol = riccati_lq_reference(0.0, 0.0, 1.0, 1.0, LinearCenter{{-1.0}}, 0.01);
  for (double t : {0.0, 0.37, 1.0}) {
    EXPECT_EQ(sol.p(t), 0.0);
    EXPECT_EQ(sol.r(t), 0.0);
    EXPECT_EQ(sol.c(t), 0.0);
    EXPECT_EQ(sol.feedback(t, 2.0), 0.0);
  }
}

TEST(Riccati, TerminalValuesAndStationaryRoot) {
  const auto sol = riccati_lq_reference(2.0, 3.0, 0.5, 1.0, LinearCenter{{-1.0}}, 0.01);
  EXPECT_NEAR(sol.p(1.0), 3.0, 1e-14);
  EXPECT_NEAR(sol.r(1.0), 3.0, 1e-14);  // -q_T m(T) with m(T) = -1
  EXPECT_NEAR(sol.c(1.0), 1.5, 1e-14);
  EXPECT_GE(sol.p(0.0), 0.0);
  const auto longrun = riccati_lq_reference(2.0, 0.0, 0.5, 20.0, ConstantCenter{{0.0}}, 0.01);
  EXPECT_NEAR(longrun.p(0.0), std::sqrt(2.0) / 0.5, 1e-6);
}

TEST(Riccati, AgreesWithFiniteDifferenceValue) {
  for (double gamma : {0.0, 0.6, -0.6}) {
    const auto spec = two_well_game(gamma);
    const auto grid = default_grid(spec, 801, 1000);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto field = solve_linear_pde_fd(spec, i, grid);
      const auto sol = solve_riccati(mixed_riccati_problem(spec, i), spec.dt());
      const double z_ric = std::exp(-sol.value(0.0, 0.0));
      EXPECT_NEAR(field.value(0.0, 0.0) / z_ric, 1.0, 0.005) << gamma << " " << i;
    }
  }
  const auto spec = two_well_game(0.0);
  const auto direct = riccati_lq_reference(1.0, 1.0, 1.0, 1.0, LinearCenter{{1.0}}, spec.dt());
  const auto mixed = solve_riccati(mixed_riccati_problem(spec, 1), spec.dt());
  EXPECT_NEAR(direct.value(0.0, 0.4), mixed.value(0.0, 0.4), 1e-12);
}

TEST(Riccati, FieldPolicyMatchesRiccatiFeedback) {
  const auto spec = two_well_game(0.0);
  const auto grid = default_grid(spec, 801, 1000);
  auto field = std::make_shared<const ZField>(solve_linear_pde_fd(spec, 0, grid));
  const auto sol = std::make_shared<const RiccatiSolution>(
      solve_riccati(mixed_riccati_problem(spec, 0), spec.dt()));
  const auto fp = field_policy(field, 1.0, 0.0);
  const auto rp = riccati_policy(sol, 0.0);
  for (double x : {-1.0, 0.0, 0.7}) {
    Vector a(1), b(1);
    const Vector xs{x};
    fp(0.2, xs, a);
    rp(0.2, xs, b);
    EXPECT_NEAR(a[0], b[0], 5e-3) << x;
  }
}
