#include <CLI11.hpp>
#include <optional>
#include <string>
#include <vector>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"distributed resource-allocation dynamics: simulation and analysis"};
  app.require_subcommand(1);
  app.fallthrough(true);

  dra::cli::CommandContext ctx;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides config)");
  auto* seed_opt = app.add_option("--seed", seed, "seed recorded in the run manifest");
  app.add_flag("--quiet", ctx.quiet, "suppress console output");

  auto* check = app.add_subcommand("check-graph", "evaluate the graph predicates");
  auto* solve = app.add_subcommand("solve", "solve the optimality system");

  auto* equil = app.add_subcommand("equilibrium", "solve the eps-equilibrium");
  double eq_eps = 0;
  std::string eq_method = "newton";
  auto* eq_eps_opt = equil->add_option("--eps", eq_eps, "adjustable parameter");
  equil->add_option("--method", eq_method, "newton|phi")->default_val("newton");

  auto* simulate = app.add_subcommand("simulate", "integrate the configured dynamics");

  auto* sweep = app.add_subcommand("sweep", "equilibrium gaps across an eps grid");
  std::vector<double> grid{0.2, 0.1, 0.05, 0.02, 0.01};
  int workers = 0;
  sweep->add_option("--grid", grid, "decreasing eps values")->delimiter(',');
  sweep->add_option("--workers", workers, "worker pool size (0 = hardware parallelism)");

  auto* compare = app.add_subcommand("compare", "deviation from the primal-dual reference model");
  double cmp_eps = 0, cmp_horizon = 0, cmp_cutoff = 0;
  auto* cmp_eps_opt = compare->add_option("--eps", cmp_eps, "adjustable parameter");
  auto* cmp_h_opt = compare->add_option("--horizon", cmp_horizon, "comparison horizon");
  auto* cmp_c_opt = compare->add_option("--cutoff", cmp_cutoff,
                                        "boundary-layer cutoff (default 20*eps)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dra::cli::kExitValidation;
  }

  ctx.config_path = config_path;
  if (*out_opt) ctx.out_override = out_dir;
  if (*seed_opt) ctx.seed = seed;

  if (*check) return dra::cli::run_check_graph(ctx);
  if (*solve) return dra::cli::run_solve(ctx);
  if (*equil) {
    return dra::cli::run_equilibrium(
        ctx, *eq_eps_opt ? std::optional<double>(eq_eps) : std::nullopt, eq_method);
  }
  if (*simulate) return dra::cli::run_simulate(ctx);
  if (*sweep) return dra::cli::run_sweep(ctx, grid, workers);
  if (*compare) {
    return dra::cli::run_compare(ctx, *cmp_eps_opt ? std::optional<double>(cmp_eps) : std::nullopt,
                                 *cmp_h_opt ? std::optional<double>(cmp_horizon) : std::nullopt,
                                 *cmp_c_opt ? std::optional<double>(cmp_cutoff) : std::nullopt);
  }
  return dra::cli::kExitValidation;
}
