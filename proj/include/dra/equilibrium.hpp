#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "dra/dynamics.hpp"
#include "dra/errors.hpp"
#include "dra/graph.hpp"
#include "dra/kron.hpp"
#include "dra/problem.hpp"

namespace dra {

/// Optimality system solution: grad f_i(x*_i) + mu* = 0 for all i and
/// sum_i x*_i = d, with lambda* = mu* replicated across agents.
template <class Scalar>
struct KktSolution {
  VecX<Scalar> x_star;
  VecX<Scalar> mu_star;
  VecX<Scalar> lambda_star;
  Scalar kkt_residual;
};

enum class EquilibriumMethod { Newton, PhiIteration, ClosedFormQuadratic };

inline const char* to_string(EquilibriumMethod m) {
  switch (m) {
    case EquilibriumMethod::Newton:
      return "newton";
    case EquilibriumMethod::PhiIteration:
      return "phi-iteration";
    case EquilibriumMethod::ClosedFormQuadratic:
      return "closed-form-quadratic";
  }
  return "unknown";
}

/// Rest point of the sub-optimal dynamics at a given eps, with the residual
/// of its defining equations and the provenance of the solve.
template <class Scalar>
struct Equilibrium {
  Scalar eps;
  VecX<Scalar> x_bar;
  VecX<Scalar> lambda_bar;
  Scalar residual;
  EquilibriumMethod method;
  int iterations = 0;
  // Last observed ||dz_{k+1}|| / ||dz_k|| of the fixed-point iteration
  // (NaN for other methods or when fewer than two steps were taken).
  Scalar contraction_ratio = std::numeric_limits<Scalar>::quiet_NaN();
};

template <class Scalar>
struct GapReport {
  Scalar eps;
  Scalar x_gap;
  Scalar lambda_gap;
};

namespace detail {

// The solvers only see the Laplacian, so the standing assumptions are
// re-checked from it: balance as vanishing column sums, connectivity by
// search on the off-diagonal pattern.
template <class Scalar>
void require_assumptions(const Laplacian<Scalar>& l, const char* who) {
  const Eigen::Index n = l.nodes();
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar scale = std::max(Scalar(1), Scalar(2) * l.matrix(j, j));
    if (std::abs(l.matrix.col(j).sum()) > Scalar(1e-10) * scale) {
      throw AssumptionError(std::string(who) +
                            ": graph is not weight-balanced (nonzero column sum at node " +
                            std::to_string(j) + ")");
    }
  }
  MatX<Scalar> adj = (-l.matrix).cwiseMax(Scalar(0));
  adj.diagonal().setZero();
  if (!all_reachable_from_zero(adj, false) || !all_reachable_from_zero(adj, true)) {
    throw AssumptionError(std::string(who) + ": graph is not strongly connected");
  }
}

template <class Scalar>
Scalar max_abs_constraint_violation(const ResourceProblem<Scalar>& p, const VecX<Scalar>& x) {
  VecX<Scalar> sum = -p.total_resource();
  for (Eigen::Index i = 0; i < p.agent_count(); ++i) sum += x.segment(i * p.dim(), p.dim());
  return sum.cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Norm of the equilibrium equations at (x, lambda):
/// ||[grad f(x) + lambda; -eps (x - b) + (L (x) I) lambda]||.
template <class Scalar>
Scalar equilibrium_residual(const ResourceProblem<Scalar>& p, const Laplacian<Scalar>& l,
                            Scalar eps, const VecX<Scalar>& x, const VecX<Scalar>& lambda) {
  const VecX<Scalar> r1 = total_gradient(p, x) + lambda;
  const VecX<Scalar> r2 =
      -eps * (x - p.stacked_reference()) + kron_identity_apply(l.matrix, lambda, p.dim());
  return std::sqrt(r1.squaredNorm() + r2.squaredNorm());
}

/// Solves the optimality system. Quadratic families get a direct solve of
/// the (nN + n) saddle-point system; general costs get damped Newton from
/// x_i = b_i, mu = -mean_i grad f_i(b_i), tolerance 1e-11.
template <class Scalar>
KktSolution<Scalar> solve_kkt(const ResourceProblem<Scalar>& p) {
  const Eigen::Index n = p.dim();
  const Eigen::Index nn = p.stacked_dim();
  const VecX<Scalar> d = p.total_resource();

  auto kkt_rhs = [&](const VecX<Scalar>& x, const VecX<Scalar>& mu) {
    VecX<Scalar> f(nn + n);
    f.head(nn) = total_gradient(p, x);
    for (Eigen::Index i = 0; i < p.agent_count(); ++i) f.segment(i * n, n) += mu;
    VecX<Scalar> sum = -d;
    for (Eigen::Index i = 0; i < p.agent_count(); ++i) sum += x.segment(i * n, n);
    f.tail(n) = sum;
    return f;
  };
  auto kkt_matrix = [&](const VecX<Scalar>& x) {
    MatX<Scalar> m = MatX<Scalar>::Zero(nn + n, nn + n);
    m.topLeftCorner(nn, nn) = total_hessian(p, x);
    for (Eigen::Index i = 0; i < p.agent_count(); ++i) {
      m.block(i * n, nn, n, n) = MatX<Scalar>::Identity(n, n);
      m.block(nn, i * n, n, n) = MatX<Scalar>::Identity(n, n);
    }
    return m;
  };

  VecX<Scalar> x(nn), mu(n);
  if (p.all_quadratic()) {
    VecX<Scalar> rhs(nn + n);
    rhs.head(nn) = -total_gradient(p, VecX<Scalar>::Zero(nn).eval());
    rhs.tail(n) = d;
    Eigen::FullPivLU<MatX<Scalar>> lu(kkt_matrix(VecX<Scalar>::Zero(nn).eval()));
    if (!lu.isInvertible()) {
      throw NumericalError("solve_kkt: singular saddle-point system (degenerate problem)");
    }
    const VecX<Scalar> sol = lu.solve(rhs);
    x = sol.head(nn);
    mu = sol.tail(n);
  } else {
    x = p.stacked_reference();
    mu = VecX<Scalar>::Zero(n);
    for (Eigen::Index i = 0; i < p.agent_count(); ++i) {
      mu -= p.agent(i).cost->gradient(p.agent(i).b);
    }
    mu /= static_cast<Scalar>(p.agent_count());

    const Scalar tol = Scalar(1e-11);
    Scalar res = kkt_rhs(x, mu).norm();
    for (int iter = 0; iter < 100 && res > tol; ++iter) {
      Eigen::FullPivLU<MatX<Scalar>> lu(kkt_matrix(x));
      if (!lu.isInvertible()) {
        throw NumericalError("solve_kkt: singular saddle-point system (degenerate problem)");
      }
      const VecX<Scalar> step = lu.solve(-kkt_rhs(x, mu));
      Scalar alpha = 1;
      for (int halvings = 0; halvings < 60; ++halvings) {
        const VecX<Scalar> xt = x + alpha * step.head(nn);
        const VecX<Scalar> mt = mu + alpha * step.tail(n);
        const Scalar rt = kkt_rhs(xt, mt).norm();
        if (rt < res) {
          x = xt;
          mu = mt;
          res = rt;
          break;
        }
        alpha /= 2;
      }
    }
    if (res > tol) {
      throw NumericalError("solve_kkt: Newton did not converge, last residual " +
                           std::to_string(static_cast<double>(res)));
    }
  }

  KktSolution<Scalar> out;
  out.x_star = x;
  out.mu_star = mu;
  out.lambda_star = VecX<Scalar>(nn);
  for (Eigen::Index i = 0; i < p.agent_count(); ++i) out.lambda_star.segment(i * n, n) = mu;
  out.kkt_residual = kkt_rhs(x, mu).norm();
  if ((total_gradient(p, x) + out.lambda_star).norm() > Scalar(1e-9) ||
      detail::max_abs_constraint_violation(p, x) > Scalar(1e-10)) {
    throw NumericalError("solve_kkt: solution fails the optimality tolerances");
  }
  return out;
}

/// Damped Newton on the equilibrium equations; the default initial guess is
/// the optimality-system solution, which lies within O(eps) of the target.
/// Refuses graphs that are not balanced and strongly connected.
template <class Scalar>
Equilibrium<Scalar> solve_equilibrium_newton(
    const ResourceProblem<Scalar>& p, const Laplacian<Scalar>& l, Scalar eps,
    std::optional<NetworkState<Scalar>> guess = std::nullopt) {
  detail::check_positive_eps(eps, "solve_equilibrium_newton");
  detail::check_dynamics_dims(p, l, "solve_equilibrium_newton");
  detail::require_assumptions(l, "solve_equilibrium_newton");

  const Eigen::Index n = p.dim();
  const Eigen::Index nn = p.stacked_dim();
  const VecX<Scalar> b = p.stacked_reference();
  const MatX<Scalar> l_kron = kron_identity_matrix(l.matrix, n);

  VecX<Scalar> x, lambda;
  if (guess) {
    detail::check_stacked(p, guess->x, "solve_equilibrium_newton");
    detail::check_stacked(p, guess->lambda, "solve_equilibrium_newton");
    x = guess->x;
    lambda = guess->lambda;
  } else {
    const KktSolution<Scalar> kkt = solve_kkt(p);
    x = kkt.x_star;
    lambda = kkt.lambda_star;
  }

  auto residual_vec = [&](const VecX<Scalar>& xx, const VecX<Scalar>& ll) {
    VecX<Scalar> f(2 * nn);
    f.head(nn) = total_gradient(p, xx) + ll;
    f.tail(nn) = -eps * (xx - b) + l_kron * ll;
    return f;
  };

  const Scalar tol = Scalar(1e-11);
  Scalar res = residual_vec(x, lambda).norm();
  int iterations = 0;
  MatX<Scalar> jac = MatX<Scalar>::Zero(2 * nn, 2 * nn);
  jac.topRightCorner(nn, nn) = MatX<Scalar>::Identity(nn, nn);
  jac.bottomLeftCorner(nn, nn) = -eps * MatX<Scalar>::Identity(nn, nn);
  jac.bottomRightCorner(nn, nn) = l_kron;
  for (; iterations < 100 && res > tol; ++iterations) {
    jac.topLeftCorner(nn, nn) = total_hessian(p, x);
    Eigen::FullPivLU<MatX<Scalar>> lu(jac);
    if (!lu.isInvertible()) {
      throw NumericalError("solve_equilibrium_newton: singular Jacobian at eps = " +
                           std::to_string(static_cast<double>(eps)));
    }
    const VecX<Scalar> step = lu.solve(-residual_vec(x, lambda));
    Scalar alpha = 1;
    bool improved = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      const VecX<Scalar> xt = x + alpha * step.head(nn);
      const VecX<Scalar> lt = lambda + alpha * step.tail(nn);
      const Scalar rt = residual_vec(xt, lt).norm();
      if (rt < res) {
        x = xt;
        lambda = lt;
        res = rt;
        improved = true;
        break;
      }
      alpha /= 2;
    }
    if (!improved) break;
  }
  if (res > tol) {
    throw NumericalError("solve_equilibrium_newton: did not converge, last residual " +
                         std::to_string(static_cast<double>(res)));
  }

  Equilibrium<Scalar> eq;
  eq.eps = eps;
  eq.x_bar = x;
  eq.lambda_bar = lambda;
  eq.residual = res;
  eq.method = EquilibriumMethod::Newton;
  eq.iterations = iterations;
  if (detail::max_abs_constraint_violation(p, x) > Scalar(1e-9)) {
    throw NumericalError("solve_equilibrium_newton: equilibrium violates the resource constraint");
  }
  return eq;
}

/// One application of the fixed-point map on the deviation z = x - x*:
///   Phi(z, eps) = (eps I + (L (x) I) H)^{-1} (eps (b - x*) + (L (x) I) r(z))
/// with H the Hessian at x* and r(z) = grad f(x*) + H z - grad f(x* + z).
/// For quadratic costs r vanishes identically, so Phi is constant in z.
template <class Scalar>
VecX<Scalar> phi_map(const ResourceProblem<Scalar>& p, const Laplacian<Scalar>& l, Scalar eps,
                     const KktSolution<Scalar>& kkt,
                     const std::type_identity_t<VecX<Scalar>>& z) {
  detail::check_positive_eps(eps, "phi_map");
  detail::check_dynamics_dims(p, l, "phi_map");
  detail::check_stacked(p, z, "phi_map");
  const MatX<Scalar> l_kron = kron_identity_matrix(l.matrix, p.dim());
  const MatX<Scalar> hess = total_hessian(p, kkt.x_star);
  const VecX<Scalar> grad_star = total_gradient(p, kkt.x_star);
  const VecX<Scalar> r_z = grad_star + hess * z - total_gradient(p, (kkt.x_star + z).eval());

  MatX<Scalar> lhs = l_kron * hess;
  lhs.diagonal().array() += eps;
  Eigen::FullPivLU<MatX<Scalar>> lu(lhs);
  if (!lu.isInvertible()) {
    throw NumericalError(
        "phi_map: eps I + L H is singular; eps is outside the validity range or the graph "
        "is not weight-balanced");
  }
  const VecX<Scalar> forcing = eps * (p.stacked_reference() - kkt.x_star) + l_kron * r_z;
  return lu.solve(forcing);
}

/// Fixed-point iteration z <- Phi(z, eps) from z = 0. Stops when the
/// equilibrium residual at x* + z drops below tol (quadratic problems land
/// there after one application) or when the step difference does. Reports
/// the observed contraction ratio; three consecutive non-contracting steps
/// abort with a diagnostic that eps is likely above the validity threshold.
template <class Scalar>
Equilibrium<Scalar> solve_equilibrium_phi(const ResourceProblem<Scalar>& p,
                                          const Laplacian<Scalar>& l, Scalar eps,
                                          const KktSolution<Scalar>& kkt,
                                          Scalar tol = Scalar(1e-11), int max_iter = 200) {
  detail::check_positive_eps(eps, "solve_equilibrium_phi");
  detail::check_dynamics_dims(p, l, "solve_equilibrium_phi");
  detail::require_assumptions(l, "solve_equilibrium_phi");
  if (max_iter < 1) throw ValidationError("solve_equilibrium_phi: max_iter must be >= 1");

  VecX<Scalar> z = VecX<Scalar>::Zero(p.stacked_dim());
  Scalar prev_step = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar ratio = std::numeric_limits<Scalar>::quiet_NaN();
  int expanding_streak = 0;
  int iterations = 0;
  Scalar res = std::numeric_limits<Scalar>::infinity();
  VecX<Scalar> x_bar, lambda_bar;

  for (; iterations < max_iter; ) {
    const VecX<Scalar> z_next = phi_map(p, l, eps, kkt, z);
    ++iterations;
    const Scalar step = (z_next - z).norm();
    if (!std::isnan(prev_step) && prev_step > Scalar(0)) {
      ratio = step / prev_step;
      expanding_streak = (ratio >= Scalar(1)) ? expanding_streak + 1 : 0;
      if (expanding_streak >= 3) {
        throw NumericalError(
            "solve_equilibrium_phi: no contraction after 3 iterations; eps = " +
            std::to_string(static_cast<double>(eps)) +
            " is likely above the validity threshold for this problem");
      }
    }
    prev_step = step;
    z = z_next;

    x_bar = kkt.x_star + z;
    lambda_bar = -total_gradient(p, x_bar);
    res = equilibrium_residual(p, l, eps, x_bar, lambda_bar);
    if (res < tol || step < tol) break;
  }
  if (!(res < tol) && !(prev_step < tol)) {
    throw NumericalError("solve_equilibrium_phi: no convergence after " +
                         std::to_string(iterations) + " iterations, residual " +
                         std::to_string(static_cast<double>(res)));
  }

  Equilibrium<Scalar> eq;
  eq.eps = eps;
  eq.x_bar = x_bar;
  eq.lambda_bar = lambda_bar;
  eq.residual = res;
  eq.method = EquilibriumMethod::PhiIteration;
  eq.iterations = iterations;
  eq.contraction_ratio = ratio;
  if (detail::max_abs_constraint_violation(p, x_bar) > Scalar(1e-9)) {
    throw NumericalError("solve_equilibrium_phi: equilibrium violates the resource constraint");
  }
  return eq;
}

/// Distance of the eps-equilibrium from the true optimizer.
template <class Scalar>
GapReport<Scalar> suboptimality_gap(const Equilibrium<Scalar>& eq, const KktSolution<Scalar>& kkt) {
  if (eq.x_bar.size() != kkt.x_star.size()) {
    throw ValidationError("suboptimality_gap: mismatched problem sizes");
  }
  return GapReport<Scalar>{eq.eps, (eq.x_bar - kkt.x_star).norm(),
                           (eq.lambda_bar - kkt.lambda_star).norm()};
}

}  // namespace dra
