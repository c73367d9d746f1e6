#pragma once

// Shared fixtures for the test suites: seeded generators, independent
// oracles, and the three-agent reference problem with its closed-form
// equilibrium.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "dra/dynamics.hpp"
#include "dra/graph.hpp"
#include "dra/problem.hpp"

namespace testsupport {

using dra::Agent;
using dra::CostFunction;
using dra::GraphEdge;
using dra::MatX;
using dra::QuadraticCost;
using dra::ResourceProblem;
using dra::VecX;
using dra::WeightedDigraph;

using Rng = std::mt19937_64;

inline Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline Eigen::MatrixXd random_spd(Rng& rng, Eigen::Index n, double min_eig = 0.5) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = dist(rng);
  return a * a.transpose() + min_eig * Eigen::MatrixXd::Identity(n, n);
}

inline ResourceProblem<double> random_quadratic_problem(Rng& rng, Eigen::Index n,
                                                        Eigen::Index agents) {
  std::vector<Agent<double>> list;
  for (Eigen::Index i = 0; i < agents; ++i) {
    list.push_back(Agent<double>{
        std::make_shared<QuadraticCost<double>>(random_spd(rng, n), random_vector(rng, n), 0.0),
        random_vector(rng, n)});
  }
  return ResourceProblem<double>(n, std::move(list));
}

// Sum of directed cycles over all nodes: weight-balanced by construction and
// strongly connected (the first cycle visits every node).
inline WeightedDigraph<double> random_balanced_graph(Rng& rng, Eigen::Index nodes,
                                                     int extra_cycles = 2) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(nodes, nodes);
  std::uniform_real_distribution<double> weight(0.2, 2.0);
  std::vector<Eigen::Index> order(static_cast<size_t>(nodes));
  for (Eigen::Index i = 0; i < nodes; ++i) order[static_cast<size_t>(i)] = i;

  auto add_cycle = [&](const std::vector<Eigen::Index>& cyc) {
    const double cw = weight(rng);
    for (size_t k = 0; k < cyc.size(); ++k) {
      const Eigen::Index from = cyc[k];
      const Eigen::Index to = cyc[(k + 1) % cyc.size()];
      w(to, from) += cw;
    }
  };

  std::shuffle(order.begin(), order.end(), rng);
  add_cycle(order);
  for (int c = 0; c < extra_cycles; ++c) {
    std::shuffle(order.begin(), order.end(), rng);
    const size_t len = 2 + rng() % static_cast<size_t>(nodes - 1);
    add_cycle(std::vector<Eigen::Index>(order.begin(), order.begin() + std::min(len, order.size())));
  }
  return WeightedDigraph<double>(w);
}

// Arbitrary digraph with the given edge probability; usually unbalanced,
// possibly disconnected.
inline WeightedDigraph<double> random_digraph(Rng& rng, Eigen::Index nodes, double density) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> weight(0.1, 3.0);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(nodes, nodes);
  for (Eigen::Index i = 0; i < nodes; ++i)
    for (Eigen::Index j = 0; j < nodes; ++j)
      if (i != j && coin(rng) < density) w(i, j) = weight(rng);
  return WeightedDigraph<double>(w);
}

// Reachability oracle: boolean transitive closure over all pairs.
inline bool brute_force_strongly_connected(const WeightedDigraph<double>& g) {
  const Eigen::Index n = g.nodes();
  std::vector<std::vector<bool>> reach(static_cast<size_t>(n),
                                       std::vector<bool>(static_cast<size_t>(n), false));
  for (Eigen::Index i = 0; i < n; ++i) {
    reach[static_cast<size_t>(i)][static_cast<size_t>(i)] = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (g.weights()(i, j) > 0) reach[static_cast<size_t>(j)][static_cast<size_t>(i)] = true;
    }
  }
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (reach[static_cast<size_t>(i)][static_cast<size_t>(k)] &&
            reach[static_cast<size_t>(k)][static_cast<size_t>(j)])
          reach[static_cast<size_t>(i)][static_cast<size_t>(j)] = true;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (!reach[static_cast<size_t>(i)][static_cast<size_t>(j)]) return false;
  return true;
}

// Central-difference oracles, independent of the analytic derivative paths.
inline Eigen::VectorXd fd_gradient(const CostFunction<double>& f, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
  Eigen::VectorXd g(x.size()), xp = x, xm = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    g[k] = (f.value(xp) - f.value(xm)) / (2 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return g;
}

inline Eigen::MatrixXd fd_hessian(const CostFunction<double>& f, const Eigen::VectorXd& x,
                                  double h = 1e-5) {
  Eigen::MatrixXd m(x.size(), x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    m.col(k) = (f.gradient(xp) - f.gradient(xm)) / (2 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return m;
}

// Orthogonal projection onto the feasible subspace sum_i x_i = d.
inline Eigen::VectorXd project_feasible(const ResourceProblem<double>& p,
                                        const Eigen::VectorXd& x) {
  const Eigen::Index n = p.dim();
  const Eigen::Index agents = p.agent_count();
  Eigen::VectorXd gap = p.total_resource();
  for (Eigen::Index i = 0; i < agents; ++i) gap -= x.segment(i * n, n);
  Eigen::VectorXd out = x;
  for (Eigen::Index i = 0; i < agents; ++i) {
    out.segment(i * n, n) += gap / static_cast<double>(agents);
  }
  return out;
}

// f(x) = exp(x) on R, for the derivative-check examples.
class ExpCost final : public CostFunction<double> {
 public:
  Eigen::Index dim() const override { return 1; }
  double value(const VecX<double>& x) const override { return std::exp(x[0]); }
  VecX<double> gradient(const VecX<double>& x) const override {
    return VecX<double>::Constant(1, std::exp(x[0]));
  }
  MatX<double> hessian(const VecX<double>& x) const override {
    return MatX<double>::Constant(1, 1, std::exp(x[0]));
  }
};

// f(x) = sum_k (a/2) x_k^2 + q x_k^4: strongly convex, smooth, nonquadratic.
class QuarticCost final : public CostFunction<double> {
 public:
  QuarticCost(Eigen::Index n, double a, double q) : n_(n), a_(a), q_(q) {}
  Eigen::Index dim() const override { return n_; }
  double value(const VecX<double>& x) const override {
    return 0.5 * a_ * x.squaredNorm() + q_ * x.array().pow(4).sum();
  }
  VecX<double> gradient(const VecX<double>& x) const override {
    return a_ * x + 4.0 * q_ * x.array().pow(3).matrix();
  }
  MatX<double> hessian(const VecX<double>& x) const override {
    MatX<double> h = MatX<double>::Zero(n_, n_);
    h.diagonal() = a_ + 12.0 * q_ * x.array().square();
    return h;
  }

 private:
  Eigen::Index n_;
  double a_, q_;
};

// -- the three-agent reference system ---------------------------------------
// costs (1/2)x_1^2, (1/8)x_2^2... i.e. Hessians 1, 1/4, 1; b_i = 1/3;
// directed unit cycle 1 -> 2 -> 3 -> 1.

inline ResourceProblem<double> three_agent_problem(double b1 = 1.0 / 3.0, double b2 = 1.0 / 3.0,
                                                   double b3 = 1.0 / 3.0) {
  auto quad = [](double h) {
    return std::make_shared<QuadraticCost<double>>(MatX<double>::Constant(1, 1, h),
                                                   VecX<double>::Zero(1), 0.0);
  };
  std::vector<Agent<double>> agents{{quad(1.0), VecX<double>::Constant(1, b1)},
                                    {quad(0.25), VecX<double>::Constant(1, b2)},
                                    {quad(1.0), VecX<double>::Constant(1, b3)}};
  return ResourceProblem<double>(1, std::move(agents));
}

inline WeightedDigraph<double> three_cycle_graph() {
  return WeightedDigraph<double>::from_edges(
      3, {GraphEdge<double>{0, 1, 1.0}, GraphEdge<double>{1, 2, 1.0}, GraphEdge<double>{2, 0, 1.0}});
}

// Closed-form equilibrium of the reference system.
inline Eigen::Vector3d three_agent_x_bar(double eps) {
  const double den = 6.0 * (4.0 * eps * eps + 9.0 * eps + 6.0);
  return Eigen::Vector3d(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0) +
         (eps / den) * Eigen::Vector3d(4.0 * eps + 9.0, -8.0 * eps - 12.0, 4.0 * eps + 3.0);
}

inline Eigen::Vector3d three_agent_lambda_bar(double eps) {
  const double den = 6.0 * (4.0 * eps * eps + 9.0 * eps + 6.0);
  return Eigen::Vector3d::Constant(-1.0 / 6.0) +
         (eps / den) * Eigen::Vector3d(-(4.0 * eps + 9.0), 2.0 * eps + 3.0, -(4.0 * eps + 3.0));
}

}  // namespace testsupport
