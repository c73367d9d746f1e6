#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dra/errors.hpp"
#include "dra/kron.hpp"

namespace dra {

template <class Scalar>
struct GraphEdge {
  Eigen::Index from;
  Eigen::Index to;
  Scalar weight;
};

/// Weighted directed graph on N nodes. Entry weights(i, j) = a_ij > 0 means
/// node j sends information to node i (edge j -> i). The diagonal is zero.
template <class Scalar>
class WeightedDigraph {
 public:
  explicit WeightedDigraph(MatX<Scalar> weights) : weights_(std::move(weights)) {
    if (weights_.rows() < 1 || weights_.rows() != weights_.cols()) {
      throw ValidationError("WeightedDigraph: weight matrix must be square with N >= 1");
    }
    for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
      if (weights_(i, i) != Scalar(0)) {
        throw ValidationError("WeightedDigraph: diagonal entries must be zero (node " +
                              std::to_string(i) + ")");
      }
      for (Eigen::Index j = 0; j < weights_.cols(); ++j) {
        if (!(weights_(i, j) >= Scalar(0))) {
          throw ValidationError("WeightedDigraph: negative or non-finite weight at (" +
                                std::to_string(i) + ", " + std::to_string(j) + ")");
        }
      }
    }
  }

  /// Builds from a 0-indexed edge list; every edge weight must be positive
  /// and each ordered pair may appear once.
  static WeightedDigraph from_edges(Eigen::Index n_nodes,
                                    const std::vector<GraphEdge<Scalar>>& edges) {
    if (n_nodes < 1) throw ValidationError("WeightedDigraph: N >= 1 required");
    MatX<Scalar> w = MatX<Scalar>::Zero(n_nodes, n_nodes);
    for (const auto& e : edges) {
      if (e.from < 0 || e.from >= n_nodes || e.to < 0 || e.to >= n_nodes) {
        throw ValidationError("WeightedDigraph: edge endpoint out of range");
      }
      if (e.from == e.to) throw ValidationError("WeightedDigraph: self-loops are not allowed");
      if (!(e.weight > Scalar(0))) {
        throw ValidationError("WeightedDigraph: edge weight must be positive");
      }
      if (w(e.to, e.from) != Scalar(0)) {
        throw ValidationError("WeightedDigraph: duplicate edge");
      }
      w(e.to, e.from) = e.weight;
    }
    return WeightedDigraph(std::move(w));
  }

  Eigen::Index nodes() const { return weights_.rows(); }
  const MatX<Scalar>& weights() const { return weights_; }

  VecX<Scalar> in_degrees() const { return weights_.rowwise().sum(); }
  VecX<Scalar> out_degrees() const { return weights_.colwise().sum().transpose(); }

  /// (A + A^T)/2 companion graph; used when a baseline needs an undirected topology.
  WeightedDigraph symmetrized() const {
    return WeightedDigraph((weights_ + weights_.transpose()) / Scalar(2));
  }

 private:
  MatX<Scalar> weights_;
};

/// In-degree Laplacian L = D_in - A. Row sums are zero by construction.
template <class Scalar>
struct Laplacian {
  MatX<Scalar> matrix;

  Eigen::Index nodes() const { return matrix.rows(); }
};

template <class Scalar>
Laplacian<Scalar> laplacian(const WeightedDigraph<Scalar>& g) {
  MatX<Scalar> l = -g.weights();
  l.diagonal() = g.in_degrees();
  return Laplacian<Scalar>{std::move(l)};
}

namespace detail {

// Reachability of every node from node 0 along the given out-neighbor relation.
// out_neighbors(j, i) != 0 encodes an edge j -> i when transpose == false.
template <class Scalar>
bool all_reachable_from_zero(const MatX<Scalar>& a, bool transpose) {
  const Eigen::Index n = a.rows();
  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::vector<Eigen::Index> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const Eigen::Index j = stack.back();
    stack.pop_back();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar w = transpose ? a(j, i) : a(i, j);
      if (w > Scalar(0) && !seen[static_cast<size_t>(i)]) {
        seen[static_cast<size_t>(i)] = 1;
        stack.push_back(i);
      }
    }
  }
  for (char s : seen)
    if (!s) return false;
  return true;
}

}  // namespace detail

/// True iff a directed path exists between every ordered pair of nodes.
/// Decided by graph search; see zero_eigenvalue_multiplicity for the
/// spectral characterization this is cross-checked against.
template <class Scalar>
bool is_strongly_connected(const WeightedDigraph<Scalar>& g) {
  const auto& a = g.weights();
  return detail::all_reachable_from_zero(a, false) && detail::all_reachable_from_zero(a, true);
}

/// True iff weighted in-degree equals weighted out-degree at every node.
template <class Scalar>
bool is_weight_balanced(const WeightedDigraph<Scalar>& g, Scalar rel_tol = Scalar(1e-10)) {
  const VecX<Scalar> din = g.in_degrees();
  const VecX<Scalar> dout = g.out_degrees();
  for (Eigen::Index i = 0; i < g.nodes(); ++i) {
    const Scalar scale = std::max(Scalar(1), din[i] + dout[i]);
    if (std::abs(din[i] - dout[i]) > rel_tol * scale) return false;
  }
  return true;
}

/// Algebraic multiplicity of the zero eigenvalue of L (|eig| < tol).
/// Equals 1 exactly when the graph is strongly connected.
template <class Scalar>
int zero_eigenvalue_multiplicity(const Laplacian<Scalar>& l, Scalar tol = Scalar(1e-8)) {
  Eigen::EigenSolver<MatX<Scalar>> es(l.matrix, /*computeEigenvectors=*/false);
  int count = 0;
  for (Eigen::Index i = 0; i < l.nodes(); ++i) {
    if (std::abs(es.eigenvalues()[i]) < tol) ++count;
  }
  return count;
}

/// Smallest eigenvalue of L + L^T; nonnegative (within rounding) exactly when
/// the graph is weight-balanced.
template <class Scalar>
Scalar min_symmetric_part_eigenvalue(const Laplacian<Scalar>& l) {
  MatX<Scalar> s = l.matrix + l.matrix.transpose();
  Eigen::SelfAdjointEigenSolver<MatX<Scalar>> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Change of coordinates separating the consensus direction from the
/// disagreement subspace.
///
/// t_fwd has first row (1/N)·1^T, so the first transformed coordinate of any
/// vector is its mean; the remaining rows are an orthonormal basis of the
/// subspace orthogonal to 1 (m1 == m2 with this normalization, which makes
/// t_fwd · t_inv = I exact up to rounding). t_inv = [1_N, m2].
template <class Scalar>
struct ConsensusTransform {
  MatX<Scalar> t_fwd;
  MatX<Scalar> t_inv;
  MatX<Scalar> m1;
  MatX<Scalar> m2;

  Eigen::Index nodes() const { return t_fwd.rows(); }
};

template <class Scalar>
ConsensusTransform<Scalar> build_consensus_transform(Eigen::Index n_nodes) {
  if (n_nodes < 2) {
    throw ValidationError("build_consensus_transform: need at least 2 nodes");
  }
  const Scalar n = static_cast<Scalar>(n_nodes);

  // Orthonormal completion of 1/sqrt(N): QR of the single column, then drop it.
  MatX<Scalar> ones_col = MatX<Scalar>::Constant(n_nodes, 1, Scalar(1) / std::sqrt(n));
  Eigen::HouseholderQR<MatX<Scalar>> qr(ones_col);
  MatX<Scalar> q = qr.householderQ() * MatX<Scalar>::Identity(n_nodes, n_nodes);
  if (q(0, 0) < Scalar(0)) q.col(0) = -q.col(0);
  MatX<Scalar> m2 = q.rightCols(n_nodes - 1);

  ConsensusTransform<Scalar> tr;
  tr.m2 = m2;
  tr.m1 = m2;
  tr.t_fwd = MatX<Scalar>(n_nodes, n_nodes);
  tr.t_fwd.row(0) = MatX<Scalar>::Constant(1, n_nodes, Scalar(1) / n);
  tr.t_fwd.bottomRows(n_nodes - 1) = m2.transpose();
  tr.t_inv = MatX<Scalar>(n_nodes, n_nodes);
  tr.t_inv.col(0) = MatX<Scalar>::Constant(n_nodes, 1, Scalar(1));
  tr.t_inv.rightCols(n_nodes - 1) = m2;
  return tr;
}

}  // namespace dra
