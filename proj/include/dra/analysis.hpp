#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dra/dynamics.hpp"
#include "dra/equilibrium.hpp"
#include "dra/errors.hpp"
#include "dra/graph.hpp"
#include "dra/integrate.hpp"
#include "dra/problem.hpp"

namespace dra {

/// V(t) = ||x(t) - x_bar||^2 + ||lambda(t) - lambda_bar||^2 sampled along a
/// trajectory, plus the largest positive increment between samples.
template <class Scalar>
struct LyapunovSeries {
  std::vector<Scalar> times;
  std::vector<Scalar> values;
  Scalar max_uptick = 0;
};

enum class FitStatus { Ok, NonConvergent, AlreadyConverged };

template <class Scalar>
struct RateFit {
  Scalar rate = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar r_squared = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar window_begin = 0;
  Scalar window_end = 0;
  FitStatus status = FitStatus::Ok;
};

template <class Scalar>
struct SweepReport {
  std::vector<Scalar> eps_grid;
  std::vector<Scalar> x_gaps;
  std::vector<Scalar> lambda_gaps;
  std::vector<Scalar> constraint_residuals;
  std::vector<bool> solved;
  std::vector<std::string> failures;  // empty string when solved
  Scalar loglog_slope = std::numeric_limits<Scalar>::quiet_NaN();
  bool slope_valid = false;
  Scalar gamma1_hat = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar gamma2_hat = std::numeric_limits<Scalar>::quiet_NaN();
  bool exact_case = false;  // all gaps below 1e-9: b coincides with x*
};

template <class Scalar>
struct DeviationReport {
  Scalar eps;
  Scalar sup_x_mu_dev;    // sup_t ||(x, mu) - (x~, mu~)|| over the shared grid
  Scalar sup_theta_tail;  // sup_{t >= boundary_cutoff} ||theta(t)||
  Scalar boundary_cutoff;
  Scalar horizon;
};

/// Aligned sample grids of the full and reduced runs, for serialization.
template <class Scalar>
struct DeviationTraces {
  std::vector<Scalar> times;
  std::vector<NetworkState<Scalar>> full;
  std::vector<ReducedState<Scalar>> reduced;
  std::vector<Scalar> theta_norms;
};

/// Evaluates the convergence Lyapunov function along a trajectory whose
/// states are flat [x; lambda] vectors.
template <class Scalar>
LyapunovSeries<Scalar> lyapunov_trace(const Trajectory<Scalar>& traj,
                                      const Equilibrium<Scalar>& eq) {
  const Eigen::Index nn = eq.x_bar.size();
  LyapunovSeries<Scalar> out;
  out.times = traj.times;
  out.values.reserve(traj.size());
  for (const auto& y : traj.states) {
    if (y.size() != 2 * nn) {
      throw ValidationError("lyapunov_trace: state length does not match the equilibrium");
    }
    out.values.push_back((y.head(nn) - eq.x_bar).squaredNorm() +
                         (y.tail(nn) - eq.lambda_bar).squaredNorm());
  }
  for (size_t k = 1; k < out.values.size(); ++k) {
    out.max_uptick = std::max(out.max_uptick, out.values[k] - out.values[k - 1]);
  }
  out.max_uptick = std::max(out.max_uptick, Scalar(0));
  return out;
}

/// Least-squares line on (t, ln V) over the trailing window_fraction of the
/// usable samples (V > 1e-14). A series that never rises above the floor is
/// reported as AlreadyConverged; a non-negative slope as NonConvergent.
template <class Scalar>
RateFit<Scalar> fit_exponential_rate(const LyapunovSeries<Scalar>& series,
                                     Scalar window_fraction) {
  if (!(window_fraction > Scalar(0)) || window_fraction > Scalar(1)) {
    throw ValidationError("fit_exponential_rate: window_fraction must be in (0, 1]");
  }
  std::vector<Scalar> ts, ls;
  for (size_t k = 0; k < series.values.size(); ++k) {
    if (series.values[k] > Scalar(1e-14)) {
      ts.push_back(series.times[k]);
      ls.push_back(std::log(series.values[k]));
    }
  }
  RateFit<Scalar> fit;
  if (ts.empty()) {
    fit.status = FitStatus::AlreadyConverged;
    return fit;
  }
  const size_t window = std::max<size_t>(
      1, static_cast<size_t>(std::ceil(window_fraction * static_cast<Scalar>(ts.size()))));
  if (window < 10) {
    throw ValidationError("fit_exponential_rate: fewer than 10 usable samples in the window");
  }
  const size_t begin = ts.size() - window;

  Scalar st = 0, sl = 0;
  for (size_t k = begin; k < ts.size(); ++k) {
    st += ts[k];
    sl += ls[k];
  }
  const Scalar mt = st / static_cast<Scalar>(window);
  const Scalar ml = sl / static_cast<Scalar>(window);
  Scalar stt = 0, stl = 0, sll = 0;
  for (size_t k = begin; k < ts.size(); ++k) {
    stt += (ts[k] - mt) * (ts[k] - mt);
    stl += (ts[k] - mt) * (ls[k] - ml);
    sll += (ls[k] - ml) * (ls[k] - ml);
  }
  if (stt == Scalar(0)) {
    throw ValidationError("fit_exponential_rate: degenerate time window");
  }
  fit.rate = stl / stt;
  const Scalar ss_res = sll - fit.rate * stl;
  fit.r_squared = sll > Scalar(0) ? std::max(Scalar(0), 1 - ss_res / sll) : Scalar(0);
  fit.window_begin = ts[begin];
  fit.window_end = ts.back();
  fit.status = fit.rate < Scalar(-1e-12) ? FitStatus::Ok : FitStatus::NonConvergent;
  return fit;
}

/// Solves the equilibrium across a decreasing eps grid and summarizes the
/// sub-optimality scaling: per-eps gaps and constraint residuals, the log-log
/// slope of x_gap against eps, and gamma_hat = max gap/eps. Iterations are
/// independent and fan out to a bounded worker pool.
template <class Scalar>
SweepReport<Scalar> epsilon_sweep(const ResourceProblem<Scalar>& p, const Laplacian<Scalar>& l,
                                  const std::vector<Scalar>& eps_grid,
                                  EquilibriumMethod method = EquilibriumMethod::Newton,
                                  int workers = 0) {
  if (eps_grid.size() < 3) {
    throw ValidationError("epsilon_sweep: grid must have at least 3 entries");
  }
  for (size_t k = 0; k < eps_grid.size(); ++k) {
    if (!(eps_grid[k] > Scalar(0)) || (k > 0 && eps_grid[k] >= eps_grid[k - 1])) {
      throw ValidationError("epsilon_sweep: grid must be positive and strictly decreasing");
    }
  }
  const KktSolution<Scalar> kkt = solve_kkt(p);

  SweepReport<Scalar> rep;
  rep.eps_grid = eps_grid;
  const size_t m = eps_grid.size();
  rep.x_gaps.assign(m, std::numeric_limits<Scalar>::quiet_NaN());
  rep.lambda_gaps.assign(m, std::numeric_limits<Scalar>::quiet_NaN());
  rep.constraint_residuals.assign(m, std::numeric_limits<Scalar>::quiet_NaN());
  rep.solved.assign(m, false);
  rep.failures.assign(m, "");

  auto solve_one = [&](size_t k) {
    const Scalar eps = eps_grid[k];
    try {
      Equilibrium<Scalar> eq = method == EquilibriumMethod::PhiIteration
                                   ? solve_equilibrium_phi(p, l, eps, kkt)
                                   : solve_equilibrium_newton<Scalar>(p, l, eps);
      const GapReport<Scalar> gap = suboptimality_gap(eq, kkt);
      rep.x_gaps[k] = gap.x_gap;
      rep.lambda_gaps[k] = gap.lambda_gap;
      rep.constraint_residuals[k] = detail::max_abs_constraint_violation(p, eq.x_bar);
      rep.solved[k] = true;
    } catch (const Error& e) {
      rep.failures[k] = e.what();
    }
  };

  int pool = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
  pool = std::max(1, std::min<int>(pool, static_cast<int>(m)));
  if (pool == 1) {
    for (size_t k = 0; k < m; ++k) solve_one(k);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(pool));
    for (int w = 0; w < pool; ++w) {
      threads.emplace_back([&] {
        for (size_t k = next.fetch_add(1); k < m; k = next.fetch_add(1)) solve_one(k);
      });
    }
    for (auto& th : threads) th.join();
  }

  Scalar g1 = 0, g2 = 0;
  std::vector<Scalar> log_eps, log_gap;
  bool any_solved = false;
  bool all_exact = true;
  for (size_t k = 0; k < m; ++k) {
    if (!rep.solved[k]) continue;
    any_solved = true;
    g1 = std::max(g1, rep.x_gaps[k] / eps_grid[k]);
    g2 = std::max(g2, rep.lambda_gaps[k] / eps_grid[k]);
    if (rep.x_gaps[k] >= Scalar(1e-9)) {
      all_exact = false;
      log_eps.push_back(std::log(eps_grid[k]));
      log_gap.push_back(std::log(rep.x_gaps[k]));
    }
  }
  if (any_solved) {
    rep.gamma1_hat = g1;
    rep.gamma2_hat = g2;
  }
  rep.exact_case = any_solved && all_exact;
  if (log_eps.size() >= 2) {
    Scalar me = 0, mg = 0;
    for (size_t k = 0; k < log_eps.size(); ++k) {
      me += log_eps[k];
      mg += log_gap[k];
    }
    me /= static_cast<Scalar>(log_eps.size());
    mg /= static_cast<Scalar>(log_eps.size());
    Scalar see = 0, seg = 0;
    for (size_t k = 0; k < log_eps.size(); ++k) {
      see += (log_eps[k] - me) * (log_eps[k] - me);
      seg += (log_eps[k] - me) * (log_gap[k] - mg);
    }
    if (see > Scalar(0)) {
      rep.loglog_slope = seg / see;
      rep.slope_valid = true;
    }
  }
  return rep;
}

/// Measures how closely the distributed dynamics shadow the centralized
/// primal-dual reference model. Both systems start from matched initial
/// conditions (the reduced model takes x(0) and the consensus component of
/// lambda(0)); the reduced model is integrated adaptively and the full model
/// is re-integrated to the same sample times. mu of the full model is the
/// consensus component of lambda; theta its disagreement component.
template <class Scalar>
DeviationReport<Scalar> trajectory_deviation(const ResourceProblem<Scalar>& p,
                                             const Laplacian<Scalar>& l,
                                             const ConsensusTransform<Scalar>& tr, Scalar eps,
                                             const NetworkState<Scalar>& s0, Scalar horizon,
                                             Scalar boundary_cutoff,
                                             IntegratorOptions<Scalar> opts = {},
                                             DeviationTraces<Scalar>* traces = nullptr) {
  detail::check_positive_eps(eps, "trajectory_deviation");
  detail::check_dynamics_dims(p, l, "trajectory_deviation");
  if (!(horizon > Scalar(0))) throw ValidationError("trajectory_deviation: horizon must be > 0");
  if (boundary_cutoff < Scalar(0) || boundary_cutoff >= horizon) {
    throw ValidationError("trajectory_deviation: boundary cutoff must lie in [0, horizon)");
  }
  const Eigen::Index n = p.dim();

  OdeSystem<Scalar> reduced_sys{
      [&p, n](Scalar, const VecX<Scalar>& y) {
        return pack(primal_dual_rhs(p, unpack_reduced<Scalar>(y, n)));
      },
      std::nullopt};
  OdeSystem<Scalar> full_sys{[&p, &l, eps](Scalar, const VecX<Scalar>& y) {
                               return pack(suboptimal_rhs(p, l, unpack_network(y), eps));
                             },
                             eps};

  const SingularState<Scalar> s0_sing = to_singular_coords(s0, tr);
  opts.method = StepMethod::AdaptiveRkf45;
  opts.t_end = horizon;
  const Trajectory<Scalar> reduced =
      integrate(reduced_sys, pack(ReducedState<Scalar>{s0.x, s0_sing.mu}), opts);
  const Trajectory<Scalar> full =
      integrate_to_times(full_sys, pack(s0), reduced.times, opts);

  DeviationReport<Scalar> rep;
  rep.eps = eps;
  rep.boundary_cutoff = boundary_cutoff;
  rep.horizon = horizon;
  rep.sup_x_mu_dev = 0;
  rep.sup_theta_tail = 0;
  if (traces) {
    traces->times = reduced.times;
    traces->full.clear();
    traces->reduced.clear();
    traces->theta_norms.clear();
  }
  for (size_t k = 0; k < reduced.size(); ++k) {
    const NetworkState<Scalar> sf = unpack_network(full.states[k]);
    const ReducedState<Scalar> sr = unpack_reduced<Scalar>(reduced.states[k], n);
    const SingularState<Scalar> sing = to_singular_coords(sf, tr);
    const Scalar dev = std::sqrt((sf.x - sr.x).squaredNorm() + (sing.mu - sr.mu).squaredNorm());
    rep.sup_x_mu_dev = std::max(rep.sup_x_mu_dev, dev);
    const Scalar theta_norm = sing.theta.norm();
    if (reduced.times[k] >= boundary_cutoff) {
      rep.sup_theta_tail = std::max(rep.sup_theta_tail, theta_norm);
    }
    if (traces) {
      traces->full.push_back(sf);
      traces->reduced.push_back(sr);
      traces->theta_norms.push_back(theta_norm);
    }
  }
  return rep;
}

}  // namespace dra
