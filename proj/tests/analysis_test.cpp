#include <doctest.h>

#include <cmath>

#include "dra/analysis.hpp"
#include "support.hpp"

using namespace dra;
using namespace testsupport;

namespace {

Trajectory<double> simulate_reference(double eps, double t_end, int record_every = 1) {
  static const auto p = three_agent_problem();
  static const auto l = laplacian(three_cycle_graph());
  OdeSystem<double> sys{[eps](double, const Eigen::VectorXd& y) {
                          return pack(suboptimal_rhs(p, l, unpack_network(y), eps));
                        },
                        eps};
  Eigen::VectorXd y0(6);
  y0 << p.stacked_reference(), Eigen::VectorXd::Zero(3);
  IntegratorOptions<double> opts;
  opts.t_end = t_end;
  opts.record_every = record_every;
  return integrate(sys, y0, opts);
}

}  // namespace

TEST_CASE("lyapunov trace") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const Equilibrium<double> eq = solve_equilibrium_newton(p, l, 0.1);

  SUBCASE("zero at the equilibrium") {
    Trajectory<double> traj;
    Eigen::VectorXd y(6);
    y << eq.x_bar, eq.lambda_bar;
    traj.times = {0.0, 1.0};
    traj.states = {y, y};
    const LyapunovSeries<double> series = lyapunov_trace(traj, eq);
    CHECK(series.values[0] < 1e-16);
    CHECK(series.values[1] < 1e-16);
    CHECK(series.max_uptick == 0.0);
  }

  SUBCASE("strictly decreasing along the reference run") {
    const Trajectory<double> traj = simulate_reference(0.1, 120.0);
    const LyapunovSeries<double> series = lyapunov_trace(traj, eq);
    CHECK(series.values.front() > 0.1);
    CHECK(series.values.back() < 1e-10);
    CHECK(series.max_uptick < 1e-9);
  }

  SUBCASE("single sample has no uptick") {
    Trajectory<double> traj;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(6);
    traj.times = {0.0};
    traj.states = {y};
    CHECK(lyapunov_trace(traj, eq).max_uptick == 0.0);
  }

  SUBCASE("dimension mismatch") {
    Trajectory<double> traj;
    traj.times = {0.0};
    traj.states = {Eigen::VectorXd::Zero(4)};
    CHECK_THROWS_AS(lyapunov_trace(traj, eq), ValidationError);
  }
}

TEST_CASE("exponential rate fit") {
  SUBCASE("synthetic exact exponential") {
    LyapunovSeries<double> series;
    for (int k = 0; k <= 200; ++k) {
      const double t = 0.05 * k;
      series.times.push_back(t);
      series.values.push_back(std::exp(-2.0 * t));
    }
    const RateFit<double> fit = fit_exponential_rate(series, 1.0);
    CHECK(fit.status == FitStatus::Ok);
    CHECK(fit.rate == doctest::Approx(-2.0).epsilon(1e-6));
    CHECK(fit.r_squared > 0.9999);
  }

  SUBCASE("reference run tail") {
    const auto p = three_agent_problem();
    const auto l = laplacian(three_cycle_graph());
    const Equilibrium<double> eq = solve_equilibrium_newton(p, l, 0.1);
    const LyapunovSeries<double> series = lyapunov_trace(simulate_reference(0.1, 120.0), eq);
    const RateFit<double> fit = fit_exponential_rate(series, 0.5);
    CHECK(fit.status == FitStatus::Ok);
    CHECK(fit.rate < 0.0);
    CHECK(fit.r_squared > 0.99);
  }

  SUBCASE("constant series is flagged non-convergent") {
    LyapunovSeries<double> series;
    for (int k = 0; k < 50; ++k) {
      series.times.push_back(0.1 * k);
      series.values.push_back(0.5);
    }
    const RateFit<double> fit = fit_exponential_rate(series, 1.0);
    CHECK(fit.status == FitStatus::NonConvergent);
    CHECK(std::abs(fit.rate) < 1e-10);
  }

  SUBCASE("underflow everywhere signals already-converged") {
    LyapunovSeries<double> series;
    for (int k = 0; k < 50; ++k) {
      series.times.push_back(0.1 * k);
      series.values.push_back(1e-16);
    }
    CHECK(fit_exponential_rate(series, 1.0).status == FitStatus::AlreadyConverged);
  }

  SUBCASE("too few usable samples") {
    LyapunovSeries<double> series;
    for (int k = 0; k < 5; ++k) {
      series.times.push_back(0.1 * k);
      series.values.push_back(1.0);
    }
    CHECK_THROWS_AS(fit_exponential_rate(series, 1.0), ValidationError);
  }

  SUBCASE("window fraction validated") {
    LyapunovSeries<double> series;
    CHECK_THROWS_AS(fit_exponential_rate(series, 0.0), ValidationError);
    CHECK_THROWS_AS(fit_exponential_rate(series, 1.5), ValidationError);
  }
}

TEST_CASE("epsilon sweep on the reference problem") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const std::vector<double> grid{0.2, 0.1, 0.05, 0.02, 0.01};
  const SweepReport<double> rep = epsilon_sweep(p, l, grid);

  CHECK(rep.slope_valid);
  CHECK(rep.loglog_slope > 0.9);
  CHECK(rep.loglog_slope < 1.1);
  CHECK_FALSE(rep.exact_case);
  for (size_t k = 0; k < grid.size(); ++k) {
    CHECK(rep.solved[k]);
    CHECK(rep.constraint_residuals[k] < 1e-9);
    // oracle: gaps from the closed-form equilibrium
    const double expected =
        (three_agent_x_bar(grid[k]) - Eigen::Vector3d(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)).norm();
    CHECK(rep.x_gaps[k] == doctest::Approx(expected).epsilon(1e-9));
  }

  // gamma1 stable under 2x grid refinement (geometric midpoints inserted)
  std::vector<double> fine;
  for (size_t k = 0; k + 1 < grid.size(); ++k) {
    fine.push_back(grid[k]);
    fine.push_back(std::sqrt(grid[k] * grid[k + 1]));
  }
  fine.push_back(grid.back());
  const SweepReport<double> rep2 = epsilon_sweep(p, l, fine);
  CHECK(std::abs(rep2.gamma1_hat - rep.gamma1_hat) < 0.2 * rep.gamma1_hat);
}

TEST_CASE("sweep flags the exact case") {
  const auto p = three_agent_problem(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0);
  const auto l = laplacian(three_cycle_graph());
  const SweepReport<double> rep = epsilon_sweep(p, l, {1.0, 0.1, 0.01});
  CHECK(rep.exact_case);
  CHECK_FALSE(rep.slope_valid);
  for (size_t k = 0; k < 3; ++k) CHECK(rep.x_gaps[k] < 1e-9);
}

TEST_CASE("sweep validates its grid") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  CHECK_THROWS_AS(epsilon_sweep(p, l, {0.2, 0.1}), ValidationError);
  CHECK_THROWS_AS(epsilon_sweep(p, l, {0.1, 0.2, 0.3}), ValidationError);
  CHECK_THROWS_AS(epsilon_sweep(p, l, {0.2, 0.1, 0.0}), ValidationError);
}

TEST_CASE("sweep runs identically serial and parallel") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const std::vector<double> grid{0.2, 0.1, 0.05, 0.02, 0.01};
  const SweepReport<double> serial = epsilon_sweep(p, l, grid, EquilibriumMethod::Newton, 1);
  const SweepReport<double> parallel = epsilon_sweep(p, l, grid, EquilibriumMethod::Newton, 4);
  for (size_t k = 0; k < grid.size(); ++k) {
    CHECK(serial.x_gaps[k] == parallel.x_gaps[k]);
  }
}

TEST_CASE("trajectory deviation halving band") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const auto tr = build_consensus_transform<double>(3);
  const NetworkState<double> s0{p.stacked_reference(), Eigen::VectorXd::Zero(3)};

  const DeviationReport<double> a = trajectory_deviation(p, l, tr, 0.1, s0, 40.0, 2.0);
  const DeviationReport<double> b = trajectory_deviation(p, l, tr, 0.05, s0, 40.0, 1.0);
  const double ratio = a.sup_x_mu_dev / b.sup_x_mu_dev;
  CHECK(ratio > 2.0 / 3.0);
  CHECK(ratio < 6.0);
  CHECK(b.sup_theta_tail < a.sup_theta_tail);
}

TEST_CASE("fast-manifold start keeps theta small") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const auto tr = build_consensus_transform<double>(3);
  // consensual lambda: theta(0) = 0
  const NetworkState<double> s0{p.stacked_reference(), Eigen::Vector3d::Constant(-0.1)};
  const DeviationReport<double> rep = trajectory_deviation(p, l, tr, 0.05, s0, 20.0, 0.0);
  CHECK(rep.sup_theta_tail < 0.05);
}

TEST_CASE("deviation input validation") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const auto tr = build_consensus_transform<double>(3);
  const NetworkState<double> s0{p.stacked_reference(), Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(trajectory_deviation(p, l, tr, 0.1, s0, 0.0, 0.0), ValidationError);
  CHECK_THROWS_AS(trajectory_deviation(p, l, tr, -0.1, s0, 10.0, 0.0), ValidationError);
  CHECK_THROWS_AS(trajectory_deviation(p, l, tr, 0.1, s0, 10.0, 20.0), ValidationError);
}

TEST_CASE("reduced model converges to the optimum") {
  const auto p = three_agent_problem();
  const KktSolution<double> kkt = solve_kkt(p);
  OdeSystem<double> sys{[&](double, const Eigen::VectorXd& y) {
                          return pack(primal_dual_rhs(p, unpack_reduced<double>(y, 1)));
                        },
                        std::nullopt};
  Eigen::VectorXd y0(4);
  y0 << p.stacked_reference(), 0.0;
  IntegratorOptions<double> opts;
  opts.t_end = 100.0;
  opts.record_every = 100;
  const Trajectory<double> traj = integrate(sys, y0, opts);
  const double dist = std::sqrt((traj.states.back().head(3) - kkt.x_star).squaredNorm() +
                                std::pow(traj.states.back()[3] - kkt.mu_star[0], 2));
  CHECK(dist < 1e-6);
}

TEST_CASE("lyapunov floor after convergence") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const double eps = 0.1;
  const Equilibrium<double> eq = solve_equilibrium_newton(p, l, eps);
  OdeSystem<double> sys{[&](double, const Eigen::VectorXd& y) {
                          return pack(suboptimal_rhs(p, l, unpack_network(y), eps));
                        },
                        eps};
  Eigen::VectorXd y0(6);
  y0 << p.stacked_reference(), Eigen::VectorXd::Zero(3);
  ConvergenceCriterion<double> crit{1e-8, 500.0};
  const Trajectory<double> traj = integrate_until_converged(sys, y0, crit, {});
  CHECK(traj.converged);
  const LyapunovSeries<double> series = lyapunov_trace(traj, eq);
  CHECK(series.values.back() < 1e-10);
}

TEST_CASE("boundary layer decay (advisory)") {
  Rng rng(42);
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const auto tr = build_consensus_transform<double>(3);
  const double eps = 0.1;

  const Eigen::VectorXd lam0 = random_vector(rng, 3);
  const NetworkState<double> s0{p.stacked_reference(), lam0};
  const double theta0 = to_singular_coords(s0, tr).theta.norm();

  OdeSystem<double> sys{[&](double, const Eigen::VectorXd& y) {
                          return pack(suboptimal_rhs(p, l, unpack_network(y), eps));
                        },
                        eps};
  IntegratorOptions<double> opts;
  opts.t_end = 10.0 * eps * 3;
  const Trajectory<double> traj = integrate(sys, pack(s0), opts);
  double first_below = -1.0;
  for (size_t k = 0; k < traj.size(); ++k) {
    const double tn =
        to_singular_coords(unpack_network(traj.states[k]), tr).theta.norm();
    if (tn < eps * theta0) {
      first_below = traj.times[k];
      break;
    }
  }
  // loose engineering bound on the boundary-layer timescale, advisory only
  WARN(first_below >= 0.0);
  WARN(first_below <= 10.0 * eps * 3);
}
