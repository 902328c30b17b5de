#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "zfa/data.hpp"
#include "zfa/errors.hpp"
#include "zfa/types.hpp"

namespace zfa {

/// Leading part of the SVD of the rescaled data matrix Z (n x p). Only the
/// first k triplets are materialized; the discarded spectrum enters through
/// tail_sum_sq = |Z|_F^2 - sum(d1^2) = tr(D2^2). rank_bound = min(n-1, p) is
/// the largest number of positive singular values centered data can carry.
template <class Scalar = double>
struct TruncatedSvd {
  Matrix<Scalar> u1;
  Vector<Scalar> d1;
  Matrix<Scalar> v1;
  Scalar tail_sum_sq = Scalar(0);
  Index rank_bound = 0;
};

/// Which Gram matrix the decomposition goes through. automatic picks the
/// smaller side: Z Z^T (n x n) when p >= n, else Z^T Z (p x p). A p x p
/// matrix is never formed when p > n.
enum class GramSide { automatic, rows, cols };

/// Z = X Psi^{-1}: scale column j by 1/sqrt(psi2_j).
template <class DerivedX, class DerivedP>
Matrix<typename DerivedX::Scalar> scaled_data(const Eigen::MatrixBase<DerivedX>& x,
                                              const Eigen::MatrixBase<DerivedP>& psi2) {
  using Scalar = typename DerivedX::Scalar;
  if (psi2.size() != x.cols() || psi2.cols() != 1)
    throw InvalidInputError("scaled_data: psi2 must be a vector of length p");
  if (!psi2.derived().allFinite() || !(psi2.derived().array() > Scalar(0)).all())
    throw DomainError("scaled_data: psi2 must be strictly positive and finite");
  if (!x.derived().allFinite())
    throw InvalidInputError("scaled_data: x contains non-finite values");
  const Vector<Scalar> inv_psi = psi2.derived().cwiseSqrt().cwiseInverse();
  return x.derived() * inv_psi.asDiagonal();
}

template <class Scalar, class DerivedP>
Matrix<Scalar> scaled_data(const DataMatrix<Scalar>& x, const Eigen::MatrixBase<DerivedP>& psi2) {
  if (!x.centered) throw InvalidInputError("scaled_data: data must be centered");
  return scaled_data(x.values, psi2);
}

namespace detail {

/// Fill column `col` of M with a unit vector orthogonal to all other columns,
/// chosen deterministically from the canonical basis. Needed when a retained
/// singular value is (numerically) zero and the paired vector cannot be
/// recovered by division.
template <class Scalar>
void complete_orthonormal_column(Matrix<Scalar>& m, Index col) {
  const Index dim = m.rows();
  for (Index cand = 0; cand < dim; ++cand) {
    Vector<Scalar> w = Vector<Scalar>::Zero(dim);
    w(cand) = Scalar(1);
    for (int sweep = 0; sweep < 2; ++sweep)
      for (Index c = 0; c < m.cols(); ++c)
        if (c != col) w -= m.col(c).dot(w) * m.col(c);
    const Scalar norm = w.norm();
    if (norm > Scalar(0.5)) {
      m.col(col) = w / norm;
      return;
    }
  }
  throw NumericalError("truncated_svd: orthonormal completion failed");
}

}  // namespace detail

/**
 * Truncated SVD of z via an eigendecomposition of the smaller Gram matrix.
 * For p > n this is the n x n matrix Z Z^T; the right vectors are recovered as
 * V1 = Z^T U1 D1^{-1}, so the cost is O(n^2 p) and no p x p matrix ever
 * exists. Retained singular values are reported in decreasing order with a
 * deterministic sign convention (largest-magnitude entry of each v1 column
 * positive). Zero singular values among the retained k are allowed; their
 * paired vectors are completed to an orthonormal set.
 */
template <class Derived>
TruncatedSvd<typename Derived::Scalar> truncated_svd(const Eigen::MatrixBase<Derived>& z,
                                                     Index k,
                                                     GramSide side = GramSide::automatic) {
  using Scalar = typename Derived::Scalar;
  const Index n = z.rows();
  const Index p = z.cols();
  if (k < 1 || k >= std::min(n, p))
    throw InvalidInputError("truncated_svd: k must satisfy 1 <= k < min(n, p)");
  if (!z.derived().allFinite())
    throw InvalidInputError("truncated_svd: input contains non-finite values");
  if (side == GramSide::automatic) side = (n <= p) ? GramSide::rows : GramSide::cols;

  const Matrix<Scalar> zd = z.derived();
  const bool rows_side = (side == GramSide::rows);
  const Matrix<Scalar> gram =
      rows_side ? Matrix<Scalar>(zd * zd.transpose()) : Matrix<Scalar>(zd.transpose() * zd);

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(gram);
  if (es.info() != Eigen::Success)
    throw NumericalError("truncated_svd: Gram eigendecomposition did not converge (" +
                         std::to_string(gram.rows()) + " x " + std::to_string(gram.rows()) + ")");

  const Index m = gram.rows();
  TruncatedSvd<Scalar> out;
  out.rank_bound = std::min(n - 1, p);
  out.d1.resize(k);
  Matrix<Scalar> basis(m, k);
  for (Index l = 0; l < k; ++l) {
    out.d1(l) = std::sqrt(std::max(es.eigenvalues()(m - 1 - l), Scalar(0)));
    basis.col(l) = es.eigenvectors().col(m - 1 - l);
  }
  out.tail_sum_sq = std::max(zd.squaredNorm() - out.d1.squaredNorm(), Scalar(0));

  const Scalar recover_tol = std::numeric_limits<Scalar>::epsilon() *
                             Scalar(std::max(n, p)) * out.d1(0);
  Matrix<Scalar> paired = Matrix<Scalar>::Zero(rows_side ? p : n, k);
  for (Index l = 0; l < k; ++l) {
    if (out.d1(l) > recover_tol) {
      paired.col(l) = (rows_side ? Vector<Scalar>(zd.transpose() * basis.col(l))
                                 : Vector<Scalar>(zd * basis.col(l))) /
                      out.d1(l);
      paired.col(l).normalize();
    }
  }
  for (Index l = 0; l < k; ++l)
    if (!(out.d1(l) > recover_tol)) detail::complete_orthonormal_column(paired, l);

  if (rows_side) {
    out.u1 = std::move(basis);
    out.v1 = std::move(paired);
  } else {
    out.v1 = std::move(basis);
    out.u1 = std::move(paired);
  }

  // Shared sign convention across both Gram sides: keyed to v1 columns.
  for (Index l = 0; l < k; ++l) {
    Index best = 0;
    Scalar best_mag = Scalar(-1);
    for (Index r = 0; r < p; ++r) {
      const Scalar mag = std::abs(out.v1(r, l));
      if (mag > best_mag) {
        best_mag = mag;
        best = r;
      }
    }
    if (out.v1(best, l) < Scalar(0)) {
      out.v1.col(l) = -out.v1.col(l);
      out.u1.col(l) = -out.u1.col(l);
    }
  }
  return out;
}

}  // namespace zfa
