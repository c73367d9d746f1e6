#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "dra/errors.hpp"
#include "dra/kron.hpp"

namespace dra {

/// Local cost with analytic derivatives. Implementations must be reentrant:
/// evaluations carry no mutable state so concurrent callers are safe.
template <class Scalar>
class CostFunction {
 public:
  virtual ~CostFunction() = default;

  virtual Eigen::Index dim() const = 0;
  virtual Scalar value(const VecX<Scalar>& x) const = 0;
  virtual VecX<Scalar> gradient(const VecX<Scalar>& x) const = 0;
  virtual MatX<Scalar> hessian(const VecX<Scalar>& x) const = 0;

  /// True when the Hessian is constant, enabling direct linear solves.
  virtual bool is_quadratic() const { return false; }
};

/// f(x) = 1/2 x^T Q x + r^T x + c with Q symmetric positive definite.
template <class Scalar>
class QuadraticCost final : public CostFunction<Scalar> {
 public:
  QuadraticCost(MatX<Scalar> q, VecX<Scalar> r, Scalar c = Scalar(0))
      : q_(std::move(q)), r_(std::move(r)), c_(c) {
    if (q_.rows() != q_.cols() || q_.rows() != r_.size()) {
      throw ValidationError("QuadraticCost: q must be square and match r");
    }
    const Scalar asym = (q_ - q_.transpose()).cwiseAbs().maxCoeff();
    if (asym > Scalar(1e-10) * std::max(Scalar(1), q_.cwiseAbs().maxCoeff())) {
      throw ValidationError("QuadraticCost: q is not symmetric");
    }
    q_ = ((q_ + q_.transpose()) / Scalar(2)).eval();
    Eigen::SelfAdjointEigenSolver<MatX<Scalar>> es(q_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= Scalar(0)) {
      throw ValidationError("QuadraticCost: q must be positive definite");
    }
  }

  Eigen::Index dim() const override { return r_.size(); }
  Scalar value(const VecX<Scalar>& x) const override {
    return Scalar(0.5) * x.dot(q_ * x) + r_.dot(x) + c_;
  }
  VecX<Scalar> gradient(const VecX<Scalar>& x) const override { return q_ * x + r_; }
  MatX<Scalar> hessian(const VecX<Scalar>&) const override { return q_; }
  bool is_quadratic() const override { return true; }

  const MatX<Scalar>& q() const { return q_; }
  const VecX<Scalar>& r() const { return r_; }
  Scalar c() const { return c_; }

 private:
  MatX<Scalar> q_;
  VecX<Scalar> r_;
  Scalar c_;
};

template <class Scalar>
struct Agent {
  std::shared_ptr<const CostFunction<Scalar>> cost;
  VecX<Scalar> b;  // reference allocation
};

/// The allocation problem: minimize sum_i f_i(x_i) subject to
/// sum_i x_i = d, where d is derived as sum_i b_i and never stored.
template <class Scalar>
class ResourceProblem {
 public:
  ResourceProblem(Eigen::Index dim, std::vector<Agent<Scalar>> agents)
      : dim_(dim), agents_(std::move(agents)) {
    if (dim_ < 1) throw ValidationError("ResourceProblem: decision dimension must be >= 1");
    if (agents_.empty()) throw ValidationError("ResourceProblem: at least one agent required");
    for (size_t i = 0; i < agents_.size(); ++i) {
      if (!agents_[i].cost) throw ValidationError("ResourceProblem: missing cost function");
      if (agents_[i].cost->dim() != dim_ || agents_[i].b.size() != dim_) {
        throw ValidationError("ResourceProblem: agent " + std::to_string(i) +
                              " does not match dimension " + std::to_string(dim_));
      }
    }
  }

  Eigen::Index dim() const { return dim_; }
  Eigen::Index agent_count() const { return static_cast<Eigen::Index>(agents_.size()); }
  Eigen::Index stacked_dim() const { return dim_ * agent_count(); }
  const Agent<Scalar>& agent(Eigen::Index i) const { return agents_[static_cast<size_t>(i)]; }

  /// Total resource d = sum_i b_i (always derived).
  VecX<Scalar> total_resource() const {
    VecX<Scalar> d = VecX<Scalar>::Zero(dim_);
    for (const auto& a : agents_) d += a.b;
    return d;
  }

  /// col{b_1, ..., b_N}.
  VecX<Scalar> stacked_reference() const {
    VecX<Scalar> b(stacked_dim());
    for (Eigen::Index i = 0; i < agent_count(); ++i) b.segment(i * dim_, dim_) = agent(i).b;
    return b;
  }

  bool all_quadratic() const {
    for (const auto& a : agents_)
      if (!a.cost->is_quadratic()) return false;
    return true;
  }

 private:
  Eigen::Index dim_;
  std::vector<Agent<Scalar>> agents_;
};

namespace detail {

template <class Scalar>
void check_stacked(const ResourceProblem<Scalar>& p, const VecX<Scalar>& x, const char* who) {
  if (x.size() != p.stacked_dim()) {
    throw ValidationError(std::string(who) + ": expected stacked vector of length " +
                          std::to_string(p.stacked_dim()) + ", got " + std::to_string(x.size()));
  }
}

}  // namespace detail

/// sum_i f_i(x_i) on the stacked vector.
template <class Scalar>
Scalar total_cost(const ResourceProblem<Scalar>& p,
                  const std::type_identity_t<VecX<Scalar>>& x) {
  detail::check_stacked(p, x, "total_cost");
  Scalar v = 0;
  for (Eigen::Index i = 0; i < p.agent_count(); ++i) {
    v += p.agent(i).cost->value(x.segment(i * p.dim(), p.dim()));
  }
  return v;
}

/// Stacked gradient: block i is grad f_i(x_i).
template <class Scalar>
VecX<Scalar> total_gradient(const ResourceProblem<Scalar>& p,
                            const std::type_identity_t<VecX<Scalar>>& x) {
  detail::check_stacked(p, x, "total_gradient");
  VecX<Scalar> g(p.stacked_dim());
  for (Eigen::Index i = 0; i < p.agent_count(); ++i) {
    g.segment(i * p.dim(), p.dim()) = p.agent(i).cost->gradient(x.segment(i * p.dim(), p.dim()));
  }
  return g;
}

/// Block-diagonal stacked Hessian.
template <class Scalar>
MatX<Scalar> total_hessian(const ResourceProblem<Scalar>& p,
                           const std::type_identity_t<VecX<Scalar>>& x) {
  detail::check_stacked(p, x, "total_hessian");
  MatX<Scalar> h = MatX<Scalar>::Zero(p.stacked_dim(), p.stacked_dim());
  for (Eigen::Index i = 0; i < p.agent_count(); ++i) {
    h.block(i * p.dim(), i * p.dim(), p.dim(), p.dim()) =
        p.agent(i).cost->hessian(x.segment(i * p.dim(), p.dim()));
  }
  return h;
}

/// Max over coordinates of |analytic gradient - central difference|.
/// Guards user-supplied analytic derivatives.
template <class Scalar>
Scalar check_gradient(const CostFunction<Scalar>& f,
                      const std::type_identity_t<VecX<Scalar>>& x, Scalar h) {
  if (!(h > Scalar(0))) throw ValidationError("check_gradient: step must be positive");
  if (x.size() != f.dim()) throw ValidationError("check_gradient: point has wrong dimension");
  const VecX<Scalar> g = f.gradient(x);
  Scalar worst = 0;
  VecX<Scalar> xp = x, xm = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    const Scalar fd = (f.value(xp) - f.value(xm)) / (Scalar(2) * h);
    worst = std::max(worst, std::abs(g[k] - fd));
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return worst;
}

/// Estimate of the strong-convexity modulus c0: minimum over the sample
/// points of the smallest eigenvalue of the stacked Hessian. Exact and
/// sample-independent for quadratic families.
template <class Scalar>
Scalar estimate_strong_convexity(const ResourceProblem<Scalar>& p,
                                 const std::vector<VecX<Scalar>>& sample_points) {
  if (sample_points.empty()) {
    throw ValidationError("estimate_strong_convexity: need at least one sample point");
  }
  Scalar c0 = std::numeric_limits<Scalar>::infinity();
  for (const auto& x : sample_points) {
    detail::check_stacked(p, x, "estimate_strong_convexity");
    for (Eigen::Index i = 0; i < p.agent_count(); ++i) {
      const MatX<Scalar> h = p.agent(i).cost->hessian(x.segment(i * p.dim(), p.dim()));
      Eigen::SelfAdjointEigenSolver<MatX<Scalar>> es(h, Eigen::EigenvaluesOnly);
      c0 = std::min(c0, es.eigenvalues().minCoeff());
    }
  }
  return c0;
}

}  // namespace dra
