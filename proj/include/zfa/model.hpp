#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "zfa/config.hpp"
#include "zfa/errors.hpp"
#include "zfa/types.hpp"

namespace zfa {

/// Per-iteration diagnostics of the fixed-point iteration.
template <class Scalar = double>
struct IterationRecord {
  int iter = 0;
  /// tr(D2^2)/(n-1): discarded spectrum mass; equals p-k at the solution.
  Scalar tail_sum = Scalar(0);
  Scalar min_psi2 = Scalar(0);
  Scalar max_psi2 = Scalar(0);
  /// max_j |psi2_new - psi2_old| / psi2_old.
  Scalar psi2_rel_change = Scalar(0);
  /// Smallest retained eigenvalue of the rescaled covariance this iteration.
  Scalar omega_min = Scalar(0);
};

template <class Scalar = double>
using IterationTrace = std::vector<IterationRecord<Scalar>>;

/// Fitted random-factor model. lambda is p x k with Lambda^T Psi^{-2} Lambda
/// diagonal (canonical form: decreasing omega, deterministic column signs);
/// omega holds the k retained eigenvalues of the rescaled covariance.
template <class Scalar = double>
struct FaModel {
  Matrix<Scalar> lambda;
  Vector<Scalar> psi2;
  Vector<Scalar> omega;
  Index n_used = 0;
  bool converged = false;
  IterationTrace<Scalar> trace;
  std::vector<std::string> warnings;
  std::vector<std::string> column_names;
  Vector<Scalar> column_scales;
  FaConfig<Scalar> config;

  Index p() const { return lambda.rows(); }
  Index k() const { return lambda.cols(); }
};

namespace detail {

/// Deterministic sign fix: make the largest-magnitude entry of each column of
/// inv_psi.asDiagonal() * lambda positive; ties resolved by lowest row index.
/// Flips are applied to lambda in place.
template <class Scalar>
void fix_column_signs(Matrix<Scalar>& lambda, const Vector<Scalar>& inv_psi) {
  for (Index c = 0; c < lambda.cols(); ++c) {
    Index best = 0;
    Scalar best_mag = Scalar(-1);
    for (Index r = 0; r < lambda.rows(); ++r) {
      const Scalar mag = std::abs(inv_psi(r) * lambda(r, c));
      if (mag > best_mag) {
        best_mag = mag;
        best = r;
      }
    }
    if (best_mag > Scalar(0) && inv_psi(best) * lambda(best, c) < Scalar(0))
      lambda.col(c) = -lambda.col(c);
  }
}

}  // namespace detail

/**
 * Rotate a loading matrix into the canonical frame of the model: columns of
 * Psi^{-1} Lambda orthogonal, ordered by decreasing squared norm (equivalently
 * decreasing omega), with a deterministic sign per column. The returned matrix
 * spans the same column space and leaves Lambda Lambda^T unchanged.
 *
 * Inputs already in canonical order and sign are returned bit-identically, so
 * the operation is exactly idempotent. Ties in the ordering keep the original
 * column order; exactly equal omega values leave a genuine rotational
 * ambiguity that no convention can remove, and the result is then merely
 * deterministic for identical inputs.
 */
template <class DerivedL, class DerivedP>
Matrix<typename DerivedL::Scalar> canonicalize(const Eigen::MatrixBase<DerivedL>& lambda,
                                               const Eigen::MatrixBase<DerivedP>& psi2) {
  using Scalar = typename DerivedL::Scalar;
  const Index p = lambda.rows();
  const Index k = lambda.cols();
  if (psi2.size() != p || psi2.cols() != 1)
    throw InvalidInputError("canonicalize: psi2 must be a length-p vector");
  if (!lambda.derived().allFinite())
    throw InvalidInputError("canonicalize: lambda contains non-finite values");
  if (!psi2.derived().allFinite() || !(psi2.derived().array() > Scalar(0)).all())
    throw DomainError("canonicalize: psi2 must be strictly positive");
  if (k < 1) throw InvalidInputError("canonicalize: lambda needs at least one column");

  const Vector<Scalar> inv_psi = psi2.derived().cwiseSqrt().cwiseInverse();
  Matrix<Scalar> lz = inv_psi.asDiagonal() * lambda.derived();
  Matrix<Scalar> m = lz.transpose() * lz;

  Scalar max_diag = Scalar(0);
  Scalar max_off = Scalar(0);
  for (Index i = 0; i < k; ++i) {
    max_diag = std::max(max_diag, std::abs(m(i, i)));
    for (Index j = i + 1; j < k; ++j) max_off = std::max(max_off, std::abs(m(i, j)));
  }

  Matrix<Scalar> out(p, k);
  if (max_off <= Scalar(1e-12) * (max_diag + Scalar(1e-300))) {
    // Already orthogonal in the Psi^{-1} metric: only reorder and fix signs.
    std::vector<Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return m(a, a) > m(b, b); });
    for (Index c = 0; c < k; ++c) out.col(c) = lambda.derived().col(order[static_cast<std::size_t>(c)]);
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(m);
    if (es.info() != Eigen::Success)
      throw NumericalError("canonicalize: eigendecomposition of the k x k normal matrix failed");
    Matrix<Scalar> q(k, k);
    for (Index c = 0; c < k; ++c) q.col(c) = es.eigenvectors().col(k - 1 - c);
    out = lambda.derived() * q;
  }
  detail::fix_column_signs(out, inv_psi);
  return out;
}

}  // namespace zfa
