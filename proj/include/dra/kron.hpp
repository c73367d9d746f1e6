#pragma once

#include <Eigen/Dense>

#include "dra/errors.hpp"

namespace dra {

template <class Scalar>
using VecX = Eigen::Vector<Scalar, Eigen::Dynamic>;
template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Computes (M ⊗ I_block) * v without materializing the Kronecker product.
///
/// v is read as block-sized chunks v_1..v_C stacked column-wise; chunk i of
/// the result is sum_j M(i,j) * v_j. Cost is O(R*C*block) flops and no
/// (R*block)x(C*block) temporary.
template <class Derived>
VecX<typename Derived::Scalar> kron_identity_apply(
    const Eigen::MatrixBase<Derived>& m,
    const Eigen::Ref<const VecX<typename Derived::Scalar>>& v, Eigen::Index block) {
  using Scalar = typename Derived::Scalar;
  if (block <= 0 || v.size() != m.cols() * block) {
    throw ValidationError("kron_identity_apply: vector length " + std::to_string(v.size()) +
                          " does not match " + std::to_string(m.cols()) + " blocks of size " +
                          std::to_string(block));
  }
  Eigen::Map<const MatX<Scalar>> chunks(v.data(), block, m.cols());
  MatX<Scalar> out = chunks * m.derived().transpose();
  return Eigen::Map<const VecX<Scalar>>(out.data(), out.size());
}

/// Dense M ⊗ I_block, for solvers that factor the full operator.
template <class Derived, class Scalar = typename Derived::Scalar>
MatX<Scalar> kron_identity_matrix(const Eigen::MatrixBase<Derived>& m, Eigen::Index block) {
  if (block <= 0) throw ValidationError("kron_identity_matrix: block size must be positive");
  MatX<Scalar> out = MatX<Scalar>::Zero(m.rows() * block, m.cols() * block);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out.block(i * block, j * block, block, block) =
          m(i, j) * MatX<Scalar>::Identity(block, block);
  return out;
}

}  // namespace dra
