#include "cli/commands.hpp"

#include <fstream>
#include <functional>
#include <iostream>

#include "cli/config.hpp"
#include "cli/csv.hpp"
#include "cli/manifest.hpp"
#include "dra/analysis.hpp"
#include "dra/dynamics.hpp"
#include "dra/equilibrium.hpp"
#include "dra/errors.hpp"
#include "dra/graph.hpp"
#include "dra/integrate.hpp"
#include "dra/problem.hpp"

namespace dra::cli {

namespace {

using nlohmann::json;

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

void write_json_file(RunManifest& manifest, const std::string& name, const json& doc) {
  std::ofstream out(manifest.dir() / name);
  if (!out) throw ValidationError("cannot write '" + name + "'");
  out << doc.dump(2) << '\n';
  out.close();
  manifest.add_file(name);
}

struct Run {
  ExperimentConfig cfg;
  RunManifest manifest;
};

Run open_run(const CommandContext& ctx, const std::string& command) {
  ExperimentConfig cfg = load_config(ctx.config_path);
  if (ctx.out_override) cfg.output_dir = *ctx.out_override;
  RunManifest manifest(cfg.output_dir, command, cfg.resolved(), ctx.seed);
  return Run{std::move(cfg), std::move(manifest)};
}

// Maps library failures onto the documented exit codes.
int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const AssumptionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAssumption;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

Eigen::VectorXd initial_x(const ExperimentConfig& cfg) {
  switch (cfg.initial.kind) {
    case InitialKind::Zeros:
      return Eigen::VectorXd::Zero(cfg.problem.stacked_dim());
    case InitialKind::BStart:
      return cfg.problem.stacked_reference();
    case InitialKind::Explicit:
      return *cfg.initial.x;
  }
  throw ValidationError("unreachable initial kind");
}

std::vector<std::string> state_headers(const ExperimentConfig& cfg) {
  const Eigen::Index nn = cfg.problem.stacked_dim();
  const Eigen::Index n = cfg.problem.dim();
  std::vector<std::string> h{"t"};
  for (Eigen::Index k = 1; k <= nn; ++k) h.push_back("x_" + std::to_string(k));
  switch (cfg.algorithm) {
    case AlgorithmKind::Suboptimal:
      for (Eigen::Index k = 1; k <= nn; ++k) h.push_back("lambda_" + std::to_string(k));
      break;
    case AlgorithmKind::Pi:
      for (Eigen::Index k = 1; k <= nn; ++k) h.push_back("lambda_" + std::to_string(k));
      for (Eigen::Index k = 1; k <= nn; ++k) h.push_back("z_" + std::to_string(k));
      break;
    case AlgorithmKind::PrimalDual:
      for (Eigen::Index k = 1; k <= n; ++k) h.push_back("mu_" + std::to_string(k));
      break;
  }
  h.push_back("V");
  h.push_back("constraint_residual");
  if (cfg.algorithm != AlgorithmKind::PrimalDual) h.push_back("theta_norm");
  return h;
}

}  // namespace

int run_check_graph(const CommandContext& ctx) {
  return guarded([&] {
    Run run = open_run(ctx, "check-graph");
    const auto& g = run.cfg.graph;
    const Laplacian<double> l = laplacian(g);

    const bool balanced = is_weight_balanced(g);
    const bool connected = is_strongly_connected(g);
    const double min_eig = min_symmetric_part_eigenvalue(l);
    const int zero_mult = zero_eigenvalue_multiplicity(l);

    json report{{"nodes", g.nodes()},
                {"weight_balanced", balanced},
                {"strongly_connected", connected},
                {"min_eigenvalue_L_plus_LT", min_eig},
                {"zero_eigenvalue_multiplicity", zero_mult},
                {"assumption_satisfied", balanced && connected}};
    write_json_file(run.manifest, "graph_report.json", report);
    run.manifest.set_summary(report);
    run.manifest.finalize();

    if (!ctx.quiet) {
      std::cout << "weight-balanced:      " << (balanced ? "true" : "false") << '\n'
                << "strongly-connected:   " << (connected ? "true" : "false") << '\n'
                << "min eig(L + L^T):     " << min_eig << '\n'
                << "zero eig multiplicity: " << zero_mult << '\n';
    }
    return (balanced && connected) ? kExitOk : kExitAssumption;
  });
}

int run_solve(const CommandContext& ctx) {
  return guarded([&] {
    Run run = open_run(ctx, "solve");
    const KktSolution<double> kkt = solve_kkt(run.cfg.problem);
    json doc{{"x_star", to_json(kkt.x_star)},
             {"mu_star", to_json(kkt.mu_star)},
             {"residual", kkt.kkt_residual}};
    write_json_file(run.manifest, "kkt.json", doc);
    run.manifest.set_summary({{"residual", kkt.kkt_residual}});
    run.manifest.finalize();
    if (!ctx.quiet) {
      std::cout << "x* = " << kkt.x_star.transpose() << "\nmu* = " << kkt.mu_star.transpose()
                << "\nresidual = " << kkt.kkt_residual << '\n';
    }
    return kExitOk;
  });
}

int run_equilibrium(const CommandContext& ctx, std::optional<double> eps,
                    const std::string& method) {
  return guarded([&] {
    Run run = open_run(ctx, "equilibrium");
    if (run.cfg.algorithm != AlgorithmKind::Suboptimal && !eps) {
      throw ValidationError("equilibrium: --eps is required unless the config algorithm is "
                            "suboptimal");
    }
    const double e = eps ? *eps : run.cfg.eps;
    if (!(e > 0)) throw ValidationError("equilibrium: eps must be positive");

    const Laplacian<double> l = laplacian(run.cfg.graph);
    const KktSolution<double> kkt = solve_kkt(run.cfg.problem);
    Equilibrium<double> eq;
    if (method == "newton") {
      eq = solve_equilibrium_newton(run.cfg.problem, l, e);
    } else if (method == "phi") {
      eq = solve_equilibrium_phi(run.cfg.problem, l, e, kkt);
    } else {
      throw ValidationError("equilibrium: unknown method '" + method + "' (newton|phi)");
    }
    const GapReport<double> gap = suboptimality_gap(eq, kkt);

    json doc{{"eps", eq.eps},
             {"method", to_string(eq.method)},
             {"iterations", eq.iterations},
             {"x_bar", to_json(eq.x_bar)},
             {"lambda_bar", to_json(eq.lambda_bar)},
             {"residual", eq.residual},
             {"x_gap", gap.x_gap},
             {"lambda_gap", gap.lambda_gap}};
    if (!std::isnan(eq.contraction_ratio)) doc["contraction_ratio"] = eq.contraction_ratio;
    write_json_file(run.manifest, "equilibrium.json", doc);
    run.manifest.set_summary(
        {{"eps", eq.eps}, {"residual", eq.residual}, {"x_gap", gap.x_gap}});
    run.manifest.finalize();
    if (!ctx.quiet) {
      std::cout << "x_bar = " << eq.x_bar.transpose() << "\nresidual = " << eq.residual
                << ", x_gap = " << gap.x_gap << '\n';
    }
    return kExitOk;
  });
}

int run_simulate(const CommandContext& ctx) {
  return guarded([&] {
    Run run = open_run(ctx, "simulate");
    const ExperimentConfig& cfg = run.cfg;
    const Eigen::Index nn = cfg.problem.stacked_dim();
    const Eigen::Index n = cfg.problem.dim();
    const Eigen::Index n_nodes = cfg.graph.nodes();
    const Laplacian<double> l = laplacian(cfg.graph);
    const Eigen::VectorXd d = cfg.problem.total_resource();

    // Reference points for the monitors.
    const KktSolution<double> kkt = solve_kkt(cfg.problem);
    std::optional<Equilibrium<double>> eq;
    if (cfg.algorithm == AlgorithmKind::Suboptimal) {
      eq = solve_equilibrium_newton(cfg.problem, l, cfg.eps);
    }
    std::optional<ConsensusTransform<double>> tr;
    if (n_nodes >= 2 && cfg.algorithm != AlgorithmKind::PrimalDual) {
      tr = build_consensus_transform<double>(n_nodes);
    }

    auto constraint_residual = [&](const Eigen::VectorXd& x) {
      Eigen::VectorXd sum = -d;
      for (Eigen::Index i = 0; i < n_nodes; ++i) sum += x.segment(i * n, n);
      return sum.norm();
    };
    auto theta_norm = [&](const Eigen::VectorXd& lambda) {
      if (!tr) return 0.0;
      return kron_identity_apply(tr->t_fwd, lambda, n).tail(n * (n_nodes - 1)).norm();
    };

    // Flat state layout, monitor set and vector field per algorithm.
    OdeSystem<double> sys;
    MonitorSet<double> monitors;
    Eigen::VectorXd y0;
    const Eigen::VectorXd x0 = initial_x(cfg);
    switch (cfg.algorithm) {
      case AlgorithmKind::Suboptimal: {
        const double eps = cfg.eps;
        sys = OdeSystem<double>{[&cfg, &l, eps](double, const Eigen::VectorXd& y) {
                                  return pack(suboptimal_rhs(cfg.problem, l, unpack_network(y), eps));
                                },
                                eps};
        Eigen::VectorXd lam0 = cfg.initial.kind == InitialKind::Explicit
                                   ? *cfg.initial.lambda
                                   : Eigen::VectorXd::Zero(nn);
        y0 = pack(NetworkState<double>{x0, lam0});
        monitors.emplace_back("V", [&, nn](double, const Eigen::VectorXd& y) {
          return (y.head(nn) - eq->x_bar).squaredNorm() +
                 (y.tail(nn) - eq->lambda_bar).squaredNorm();
        });
        monitors.emplace_back("constraint_residual", [&, nn](double, const Eigen::VectorXd& y) {
          return constraint_residual(y.head(nn));
        });
        monitors.emplace_back("theta_norm", [&, nn](double, const Eigen::VectorXd& y) {
          return theta_norm(y.tail(nn));
        });
        break;
      }
      case AlgorithmKind::Pi: {
        const PiConfig<double> gains = cfg.pi;
        sys = OdeSystem<double>{[&cfg, &l, gains](double, const Eigen::VectorXd& y) {
                                  return pack(pi_rhs(cfg.problem, l, unpack_pi(y), gains));
                                },
                                std::nullopt};
        Eigen::VectorXd lam0 = cfg.initial.kind == InitialKind::Explicit
                                   ? *cfg.initial.lambda
                                   : Eigen::VectorXd::Zero(nn);
        Eigen::VectorXd z0 = cfg.initial.kind == InitialKind::Explicit
                                 ? *cfg.initial.z
                                 : Eigen::VectorXd::Zero(nn);
        y0 = pack(PiState<double>{x0, lam0, z0});
        // For the baseline, V measures distance to the optimum.
        monitors.emplace_back("V", [&, nn](double, const Eigen::VectorXd& y) {
          return (y.head(nn) - kkt.x_star).squaredNorm() +
                 (y.segment(nn, nn) - kkt.lambda_star).squaredNorm();
        });
        monitors.emplace_back("constraint_residual", [&, nn](double, const Eigen::VectorXd& y) {
          return constraint_residual(y.head(nn));
        });
        monitors.emplace_back("theta_norm", [&, nn](double, const Eigen::VectorXd& y) {
          return theta_norm(y.segment(nn, nn));
        });
        break;
      }
      case AlgorithmKind::PrimalDual: {
        sys = OdeSystem<double>{[&cfg, n](double, const Eigen::VectorXd& y) {
                                  return pack(primal_dual_rhs(cfg.problem, unpack_reduced<double>(y, n)));
                                },
                                std::nullopt};
        Eigen::VectorXd mu0 = cfg.initial.kind == InitialKind::Explicit
                                  ? *cfg.initial.mu
                                  : Eigen::VectorXd::Zero(n);
        y0 = pack(ReducedState<double>{x0, mu0});
        monitors.emplace_back("V", [&, nn, n](double, const Eigen::VectorXd& y) {
          return (y.head(nn) - kkt.x_star).squaredNorm() +
                 (y.tail(n) - kkt.mu_star).squaredNorm();
        });
        monitors.emplace_back("constraint_residual", [&, nn](double, const Eigen::VectorXd& y) {
          return constraint_residual(y.head(nn));
        });
        break;
      }
    }

    Trajectory<double> traj;
    if (cfg.t_end > 0) {
      IntegratorOptions<double> opts = cfg.integrator;
      opts.t_end = cfg.t_end;
      traj = integrate(sys, y0, opts, monitors);
    } else {
      // Zero horizon: header plus the initial row.
      traj.times.push_back(0.0);
      traj.states.push_back(y0);
      for (const auto& m : monitors) {
        traj.monitors.emplace_back(m.first, std::vector<double>{m.second(0.0, y0)});
      }
    }

    const std::string csv_name = "trajectory.csv";
    {
      std::ofstream out(run.manifest.dir() / csv_name);
      if (!out) throw ValidationError("cannot write '" + csv_name + "'");
      CsvWriter csv(out);
      csv.write_header(state_headers(cfg));
      std::vector<double> row;
      for (size_t k = 0; k < traj.size(); ++k) {
        row.clear();
        row.push_back(traj.times[k]);
        for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) row.push_back(traj.states[k][i]);
        for (const auto& m : traj.monitors) row.push_back(m.second[k]);
        csv.write_row(row);
      }
    }
    run.manifest.add_file(csv_name);

    json summary{{"samples", traj.size()}, {"final_t", traj.times.back()}};
    for (const auto& m : traj.monitors) summary["final_" + m.first] = m.second.back();
    run.manifest.set_summary(summary);
    run.manifest.finalize();
    if (!ctx.quiet) {
      std::cout << "wrote " << traj.size() << " samples to "
                << (run.manifest.dir() / csv_name).string() << '\n';
    }
    return kExitOk;
  });
}

int run_sweep(const CommandContext& ctx, const std::vector<double>& grid, int workers) {
  return guarded([&] {
    Run run = open_run(ctx, "sweep");
    if (grid.empty()) throw ValidationError("sweep: empty eps grid");
    const Laplacian<double> l = laplacian(run.cfg.graph);
    const SweepReport<double> rep =
        epsilon_sweep(run.cfg.problem, l, grid, EquilibriumMethod::Newton, workers);

    json per_eps = json::array();
    for (size_t k = 0; k < rep.eps_grid.size(); ++k) {
      json row{{"eps", rep.eps_grid[k]}, {"solved", static_cast<bool>(rep.solved[k])}};
      if (rep.solved[k]) {
        row["x_gap"] = rep.x_gaps[k];
        row["lambda_gap"] = rep.lambda_gaps[k];
        row["constraint_residual"] = rep.constraint_residuals[k];
      } else {
        row["error"] = rep.failures[k];
      }
      per_eps.push_back(row);
    }
    json doc{{"eps_grid", rep.eps_grid},
             {"per_eps", per_eps},
             {"gamma1_hat", rep.gamma1_hat},
             {"gamma2_hat", rep.gamma2_hat},
             {"exact_case", rep.exact_case}};
    if (rep.slope_valid) doc["loglog_slope"] = rep.loglog_slope;
    write_json_file(run.manifest, "sweep.json", doc);

    {
      std::ofstream out(run.manifest.dir() / "sweep.csv");
      if (!out) throw ValidationError("cannot write 'sweep.csv'");
      CsvWriter csv(out);
      csv.write_header({"eps", "x_gap", "lambda_gap"});
      for (size_t k = 0; k < rep.eps_grid.size(); ++k) {
        if (rep.solved[k]) {
          csv.write_row({rep.eps_grid[k], rep.x_gaps[k], rep.lambda_gaps[k]});
        }
      }
    }
    run.manifest.add_file("sweep.csv");

    run.manifest.set_summary({{"gamma1_hat", rep.gamma1_hat},
                              {"exact_case", rep.exact_case},
                              {"slope",
                               rep.slope_valid ? json(rep.loglog_slope) : json(nullptr)}});
    run.manifest.finalize();
    if (!ctx.quiet) {
      if (rep.exact_case) {
        std::cout << "exact case (b = x*): all gaps below 1e-9; slope fit skipped\n";
      } else if (rep.slope_valid) {
        std::cout << "loglog slope = " << rep.loglog_slope << ", gamma1_hat = " << rep.gamma1_hat
                  << '\n';
      }
    }
    return kExitOk;
  });
}

int run_compare(const CommandContext& ctx, std::optional<double> eps,
                std::optional<double> horizon, std::optional<double> cutoff) {
  return guarded([&] {
    Run run = open_run(ctx, "compare");
    const ExperimentConfig& cfg = run.cfg;
    if (cfg.algorithm != AlgorithmKind::Suboptimal && !eps) {
      throw ValidationError("compare: --eps is required unless the config algorithm is "
                            "suboptimal");
    }
    const double e = eps ? *eps : cfg.eps;
    const double t_end = horizon ? *horizon : cfg.t_end;
    const double t_b = cutoff ? *cutoff : 20.0 * e;

    const Eigen::Index nn = cfg.problem.stacked_dim();
    const Eigen::Index n = cfg.problem.dim();
    const Laplacian<double> l = laplacian(cfg.graph);
    const ConsensusTransform<double> tr = build_consensus_transform<double>(cfg.graph.nodes());

    NetworkState<double> s0;
    s0.x = initial_x(cfg);
    s0.lambda = cfg.initial.kind == InitialKind::Explicit && cfg.initial.lambda
                    ? *cfg.initial.lambda
                    : Eigen::VectorXd::Zero(nn);

    DeviationTraces<double> traces;
    const DeviationReport<double> rep = trajectory_deviation(
        cfg.problem, l, tr, e, s0, t_end, t_b, cfg.integrator, &traces);

    json doc{{"eps", rep.eps},
             {"sup_x_mu_dev", rep.sup_x_mu_dev},
             {"sup_theta_tail", rep.sup_theta_tail},
             {"boundary_cutoff", rep.boundary_cutoff},
             {"horizon", rep.horizon}};
    write_json_file(run.manifest, "compare.json", doc);

    {
      std::ofstream out(run.manifest.dir() / "compare_full.csv");
      CsvWriter csv(out);
      std::vector<std::string> h{"t"};
      for (Eigen::Index k = 1; k <= nn; ++k) h.push_back("x_" + std::to_string(k));
      for (Eigen::Index k = 1; k <= nn; ++k) h.push_back("lambda_" + std::to_string(k));
      for (Eigen::Index k = 1; k <= n; ++k) h.push_back("mu_" + std::to_string(k));
      h.push_back("theta_norm");
      csv.write_header(h);
      std::vector<double> row;
      for (size_t k = 0; k < traces.times.size(); ++k) {
        row.clear();
        row.push_back(traces.times[k]);
        const auto& sf = traces.full[k];
        const SingularState<double> sing = to_singular_coords(sf, tr);
        for (Eigen::Index i = 0; i < nn; ++i) row.push_back(sf.x[i]);
        for (Eigen::Index i = 0; i < nn; ++i) row.push_back(sf.lambda[i]);
        for (Eigen::Index i = 0; i < n; ++i) row.push_back(sing.mu[i]);
        row.push_back(traces.theta_norms[k]);
        csv.write_row(row);
      }
    }
    run.manifest.add_file("compare_full.csv");

    {
      std::ofstream out(run.manifest.dir() / "compare_reduced.csv");
      CsvWriter csv(out);
      std::vector<std::string> h{"t"};
      for (Eigen::Index k = 1; k <= nn; ++k) h.push_back("x_" + std::to_string(k));
      for (Eigen::Index k = 1; k <= n; ++k) h.push_back("mu_" + std::to_string(k));
      csv.write_header(h);
      std::vector<double> row;
      for (size_t k = 0; k < traces.times.size(); ++k) {
        row.clear();
        row.push_back(traces.times[k]);
        for (Eigen::Index i = 0; i < nn; ++i) row.push_back(traces.reduced[k].x[i]);
        for (Eigen::Index i = 0; i < n; ++i) row.push_back(traces.reduced[k].mu[i]);
        csv.write_row(row);
      }
    }
    run.manifest.add_file("compare_reduced.csv");

    run.manifest.set_summary(doc);
    run.manifest.finalize();
    if (!ctx.quiet) {
      std::cout << "sup |(x,mu) - (x~,mu~)| = " << rep.sup_x_mu_dev
                << ", sup |theta| after t=" << t_b << ": " << rep.sup_theta_tail << '\n';
    }
    return kExitOk;
  });
}

}  // namespace dra::cli
