#pragma once

#include <Eigen/Dense>
#include <string>

#include "dra/errors.hpp"
#include "dra/graph.hpp"
#include "dra/kron.hpp"
#include "dra/problem.hpp"

namespace dra {

/// State of the epsilon-parameterized allocation dynamics: stacked primal
/// vector x and stacked multiplier vector lambda, both of length n*N.
template <class Scalar>
struct NetworkState {
  VecX<Scalar> x;
  VecX<Scalar> lambda;
};

/// State of the PI consensus baseline (adds the integral variable z).
template <class Scalar>
struct PiState {
  VecX<Scalar> x;
  VecX<Scalar> lambda;
  VecX<Scalar> z;
};

template <class Scalar>
struct PiConfig {
  Scalar k_p{1};
  Scalar k_i{1};
};

/// State of the centralized primal-dual reference model: x of length n*N and
/// a single shared multiplier mu of length n.
template <class Scalar>
struct ReducedState {
  VecX<Scalar> x;
  VecX<Scalar> mu;
};

/// Two-timescale coordinates: mu is the consensus component of lambda
/// (its mean), theta the disagreement component of length n*(N-1).
template <class Scalar>
struct SingularState {
  VecX<Scalar> x;
  VecX<Scalar> mu;
  VecX<Scalar> theta;
};

namespace detail {

template <class Scalar>
void check_dynamics_dims(const ResourceProblem<Scalar>& p, const Laplacian<Scalar>& l,
                         const char* who) {
  if (l.nodes() != p.agent_count()) {
    throw ValidationError(std::string(who) + ": graph has " + std::to_string(l.nodes()) +
                          " nodes but problem has " + std::to_string(p.agent_count()) +
                          " agents");
  }
}

template <class Scalar>
void check_positive_eps(Scalar eps, const char* who) {
  if (!(eps > Scalar(0))) {
    throw ValidationError(std::string(who) + ": eps must be positive");
  }
}

}  // namespace detail

/// Vector field of the distributed sub-optimal dynamics:
///   x'      = -grad f(x) - lambda
///   lambda' = (1/eps) * (-(L (x) I_n) lambda) + (x - b)
/// The division by eps happens here, so the integrator sees the stiff field
/// explicitly; the Kronecker action is evaluated block-wise.
template <class Scalar>
NetworkState<Scalar> suboptimal_rhs(const ResourceProblem<Scalar>& p, const Laplacian<Scalar>& l,
                                    const NetworkState<Scalar>& s, Scalar eps) {
  detail::check_positive_eps(eps, "suboptimal_rhs");
  detail::check_dynamics_dims(p, l, "suboptimal_rhs");
  detail::check_stacked(p, s.x, "suboptimal_rhs");
  detail::check_stacked(p, s.lambda, "suboptimal_rhs");
  NetworkState<Scalar> ds;
  ds.x = -total_gradient(p, s.x) - s.lambda;
  ds.lambda = -kron_identity_apply(l.matrix, s.lambda, p.dim()) / eps +
              (s.x - p.stacked_reference());
  return ds;
}

/// Vector field of the PI consensus baseline:
///   x_i'      = -grad f_i(x_i) - lambda_i
///   lambda_i' = -k_p sum_j a_ij (lambda_i - lambda_j)
///               - k_i sum_j a_ij (z_i - z_j) + x_i - b_i
///   z_i'      = sum_j a_ij (lambda_i - lambda_j)
/// The weighted disagreement sums are exactly the Laplacian action.
template <class Scalar>
PiState<Scalar> pi_rhs(const ResourceProblem<Scalar>& p, const Laplacian<Scalar>& l,
                       const PiState<Scalar>& s, const PiConfig<Scalar>& cfg) {
  detail::check_dynamics_dims(p, l, "pi_rhs");
  detail::check_stacked(p, s.x, "pi_rhs");
  detail::check_stacked(p, s.lambda, "pi_rhs");
  detail::check_stacked(p, s.z, "pi_rhs");
  if (!(cfg.k_p > Scalar(0)) || !(cfg.k_i > Scalar(0))) {
    throw ValidationError("pi_rhs: gains must be positive");
  }
  const VecX<Scalar> l_lambda = kron_identity_apply(l.matrix, s.lambda, p.dim());
  const VecX<Scalar> l_z = kron_identity_apply(l.matrix, s.z, p.dim());
  PiState<Scalar> ds;
  ds.x = -total_gradient(p, s.x) - s.lambda;
  ds.lambda = -cfg.k_p * l_lambda - cfg.k_i * l_z + (s.x - p.stacked_reference());
  ds.z = l_lambda;
  return ds;
}

/// Vector field of the centralized primal-dual reference model:
///   x'  = -grad f(x) - (1_N (x) I_n) mu
///   mu' = (1_N^T (x) I_n) x - d
template <class Scalar>
ReducedState<Scalar> primal_dual_rhs(const ResourceProblem<Scalar>& p,
                                     const ReducedState<Scalar>& s) {
  detail::check_stacked(p, s.x, "primal_dual_rhs");
  if (s.mu.size() != p.dim()) {
    throw ValidationError("primal_dual_rhs: mu must have the per-agent dimension");
  }
  ReducedState<Scalar> ds;
  ds.x = -total_gradient(p, s.x);
  VecX<Scalar> residual = -p.total_resource();
  for (Eigen::Index i = 0; i < p.agent_count(); ++i) {
    ds.x.segment(i * p.dim(), p.dim()) -= s.mu;
    residual += s.x.segment(i * p.dim(), p.dim());
  }
  ds.mu = residual;
  return ds;
}

/// (mu, theta) = (T (x) I_n) lambda, split into the first n and the remaining
/// n*(N-1) coordinates. x passes through unchanged.
template <class Scalar>
SingularState<Scalar> to_singular_coords(const NetworkState<Scalar>& s,
                                         const ConsensusTransform<Scalar>& tr) {
  const Eigen::Index n_nodes = tr.nodes();
  if (s.lambda.size() % n_nodes != 0 || s.x.size() != s.lambda.size()) {
    throw ValidationError("to_singular_coords: state does not match transform size");
  }
  const Eigen::Index n = s.lambda.size() / n_nodes;
  const VecX<Scalar> w = kron_identity_apply(tr.t_fwd, s.lambda, n);
  SingularState<Scalar> out;
  out.x = s.x;
  out.mu = w.head(n);
  out.theta = w.tail(n * (n_nodes - 1));
  return out;
}

/// Inverse of to_singular_coords: lambda = (T^{-1} (x) I_n) col{mu, theta}.
template <class Scalar>
NetworkState<Scalar> from_singular_coords(const SingularState<Scalar>& s,
                                          const ConsensusTransform<Scalar>& tr) {
  const Eigen::Index n = s.mu.size();
  if (s.theta.size() != n * (tr.nodes() - 1) || s.x.size() != n * tr.nodes()) {
    throw ValidationError("from_singular_coords: state does not match transform size");
  }
  VecX<Scalar> w(n * tr.nodes());
  w.head(n) = s.mu;
  w.tail(s.theta.size()) = s.theta;
  NetworkState<Scalar> out;
  out.x = s.x;
  out.lambda = kron_identity_apply(tr.t_inv, w, n);
  return out;
}

/// The sub-optimal dynamics written in two-timescale coordinates, for a
/// weight-balanced graph:
///   x'     = -grad f(x) - (1_N (x) I_n) mu - (M2 (x) I_n) theta
///   mu'    = (1/N) ((1_N^T (x) I_n) x - d)
///   theta' = (1/eps) (-(M1^T L M2 (x) I_n) theta) + (M1^T (x) I_n) (x - b)
/// This is the exact image of suboptimal_rhs under the module's transform
/// normalization (the chain-rule identity test guards that), so the mu
/// equation carries the 1/N factor of the mean coordinate.
template <class Scalar>
SingularState<Scalar> singular_rhs(const ResourceProblem<Scalar>& p, const Laplacian<Scalar>& l,
                                   const ConsensusTransform<Scalar>& tr,
                                   const SingularState<Scalar>& s, Scalar eps) {
  detail::check_positive_eps(eps, "singular_rhs");
  detail::check_dynamics_dims(p, l, "singular_rhs");
  detail::check_stacked(p, s.x, "singular_rhs");
  const Eigen::Index n = p.dim();
  const Eigen::Index n_nodes = l.nodes();
  if (s.mu.size() != n || s.theta.size() != n * (n_nodes - 1) || tr.nodes() != n_nodes) {
    throw ValidationError("singular_rhs: state does not match transform size");
  }
  const VecX<Scalar> xb = s.x - p.stacked_reference();

  SingularState<Scalar> ds;
  ds.x = -total_gradient(p, s.x) - kron_identity_apply(tr.m2, s.theta, n);
  VecX<Scalar> sum_xb = VecX<Scalar>::Zero(n);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    ds.x.segment(i * n, n) -= s.mu;
    sum_xb += xb.segment(i * n, n);
  }
  ds.mu = sum_xb / static_cast<Scalar>(n_nodes);
  const MatX<Scalar> fast = tr.m1.transpose() * l.matrix * tr.m2;
  ds.theta = -kron_identity_apply(fast, s.theta, n) / eps +
             kron_identity_apply(tr.m1.transpose(), xb, n);
  return ds;
}

// -- flat packing for the integrator ----------------------------------------

template <class Scalar>
VecX<Scalar> pack(const NetworkState<Scalar>& s) {
  VecX<Scalar> y(s.x.size() + s.lambda.size());
  y << s.x, s.lambda;
  return y;
}

template <class Scalar>
NetworkState<Scalar> unpack_network(const VecX<Scalar>& y) {
  if (y.size() % 2 != 0) throw ValidationError("unpack_network: odd flat length");
  const Eigen::Index m = y.size() / 2;
  return NetworkState<Scalar>{y.head(m), y.tail(m)};
}

template <class Scalar>
VecX<Scalar> pack(const PiState<Scalar>& s) {
  VecX<Scalar> y(s.x.size() + s.lambda.size() + s.z.size());
  y << s.x, s.lambda, s.z;
  return y;
}

template <class Scalar>
PiState<Scalar> unpack_pi(const VecX<Scalar>& y) {
  if (y.size() % 3 != 0) throw ValidationError("unpack_pi: flat length not divisible by 3");
  const Eigen::Index m = y.size() / 3;
  return PiState<Scalar>{y.head(m), y.segment(m, m), y.tail(m)};
}

template <class Scalar>
VecX<Scalar> pack(const ReducedState<Scalar>& s) {
  VecX<Scalar> y(s.x.size() + s.mu.size());
  y << s.x, s.mu;
  return y;
}

template <class Scalar>
ReducedState<Scalar> unpack_reduced(const VecX<Scalar>& y, Eigen::Index n) {
  if (y.size() <= n) throw ValidationError("unpack_reduced: flat length too short");
  return ReducedState<Scalar>{y.head(y.size() - n), y.tail(n)};
}

template <class Scalar>
VecX<Scalar> pack(const SingularState<Scalar>& s) {
  VecX<Scalar> y(s.x.size() + s.mu.size() + s.theta.size());
  y << s.x, s.mu, s.theta;
  return y;
}

template <class Scalar>
SingularState<Scalar> unpack_singular(const VecX<Scalar>& y, Eigen::Index n,
                                      Eigen::Index n_nodes) {
  if (y.size() != n * (2 * n_nodes)) {
    throw ValidationError("unpack_singular: flat length does not match n, N");
  }
  return SingularState<Scalar>{y.head(n * n_nodes), y.segment(n * n_nodes, n),
                               y.tail(n * (n_nodes - 1))};
}

}  // namespace dra
