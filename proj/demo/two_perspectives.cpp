// Two players, one shared state: how each player's desirability and optimal
// push at the start change as the interaction strength gamma is swept.
#include <lsgame/experiments.hpp>

#include <cstdio>
#include <string>

int main(int argc, char** argv) {
  using namespace lsgame;
  const std::string path = argc > 1 ? argv[1] : LSGAME_SOURCE_DIR "/configs/default.json";
  try {
    const auto cfg = load_experiment_config(path);
    const GameSpec base(cfg.game);
    const Vector x0 = cfg.game.initial_state;
    const std::size_t paths = 20000;
    std::printf("%6s %6s %12s %12s %12s %12s %12s\n", "gamma", "player", "Z_mc", "Z_se", "Z_fd",
                "u_mc", "u_se");
    for (double gamma : cfg.gammas) {
      const GameSpec spec = base.with_alpha(regime_alpha(gamma, cfg.asymmetric));
      const auto grid = default_grid(spec, 401, 400);
      for (std::size_t i = 0; i < spec.players(); ++i) {
        const auto seed = cell_seed(cfg.sampling.seed, kStageReference, gamma, i);
        const auto z = estimate_Z_field(spec, i, 0.0, {x0}, paths, seed, {Quadrature::kTrapezoid, 10, 1});
        const auto field = solve_linear_pde_fd(spec, i, grid);
        const auto u = control_estimate(spec, i, 0.0, x0, paths, seed + 1);
        std::printf("%6.2f %6zu %12.6f %12.6f %12.6f %12.6f %12.6f\n", gamma, i + 1, z[0].value,
                    z[0].std_error, field.value(0.0, x0[0]), u.value[0], u.std_error[0]);
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
