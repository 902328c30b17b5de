#pragma once

#include <cmath>
#include <optional>

#include "zfa/data.hpp"
#include "zfa/errors.hpp"
#include "zfa/model.hpp"
#include "zfa/svd.hpp"
#include "zfa/types.hpp"

namespace zfa {

enum class ScoreKind { bartlett, thomson };

/// Factor scores for one data set, with the per-row residuals in the rescaled
/// metric, E_z = Z - F Lz^T, and their per-variable mean squares
/// (residual_msq_j = |E_z col j|^2 / (n-1); the sum over j is p - k at a
/// converged fit, not p).
template <class Scalar = double>
struct ScoreSet {
  Matrix<Scalar> scores;
  ScoreKind kind = ScoreKind::bartlett;
  Matrix<Scalar> residuals_z;
  Vector<Scalar> residual_msq;
};

/// Residual matrix plus its degrees-of-freedom-corrected summary. The raw mean
/// squares sum to p - k rather than p, so the honest per-variable average is
/// total / (p - k); that corrected mean is the headline number.
template <class Scalar = double>
struct ResidualSummary {
  Matrix<Scalar> residuals;
  Vector<Scalar> msq;
  Scalar total = Scalar(0);
  Index dof = 0;
  Scalar mean_corrected = Scalar(0);
};

/// Conditional score covariance (Lz^T Lz)^{-1}, diagonal in the canonical
/// frame, plus the inflation bound max_j psi2_true_j / psi2_hat_j when the
/// true uniquenesses are supplied.
template <class Scalar = double>
struct ScoreCovariance {
  Matrix<Scalar> covariance;
  std::optional<Scalar> inflation_bound;
};

namespace detail {

template <class Scalar>
void check_scoring_inputs(const FaModel<Scalar>& model, const DataMatrix<Scalar>& x) {
  if (!model.converged)
    throw InvalidInputError("scores: model is not converged");
  if (x.p() != model.p())
    throw InvalidInputError("scores: data has " + std::to_string(x.p()) +
                            " columns but the model expects " + std::to_string(model.p()));
  validate(x);
  if (model.omega.size() != model.k() || !(model.omega.array() > Scalar(1)).all())
    throw DegenerateFactorError("scores: a retained eigenvalue is at or below 1");
  if (!(model.psi2.array() > Scalar(0)).all())
    throw DomainError("scores: model psi2 must be strictly positive");
}

}  // namespace detail

/**
 * Bartlett (conditionally unbiased) scores F = Z Lz (Lz^T Lz)^{-1} with
 * Lz = Psi^{-1} Lambda. This closed form is valid for the fitted sample and
 * for new centered data alike; on the fitted sample it coincides with the
 * SVD expression U1 D1 (Omega - I)^{-1/2}, and F Lz^T reproduces U1 D1 V1^T,
 * so the residuals are the discarded part of the decomposition without V2
 * ever being formed.
 */
template <class Scalar>
ScoreSet<Scalar> bartlett_scores(const FaModel<Scalar>& model, const DataMatrix<Scalar>& x) {
  detail::check_scoring_inputs(model, x);
  const Matrix<Scalar> z = scaled_data(x, model.psi2);
  const Matrix<Scalar> lz = model.psi2.cwiseSqrt().cwiseInverse().asDiagonal() * model.lambda;
  const Matrix<Scalar> gram = lz.transpose() * lz;
  Eigen::LDLT<Matrix<Scalar>> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw DegenerateFactorError("bartlett_scores: Lz^T Lz is not positive definite");

  ScoreSet<Scalar> out;
  out.kind = ScoreKind::bartlett;
  out.scores = ldlt.solve((z * lz).transpose()).transpose();
  out.residuals_z = z - out.scores * lz.transpose();
  out.residual_msq =
      out.residuals_z.colwise().squaredNorm().transpose() / Scalar(x.n() - 1);
  return out;
}

/// Thomson (regression, shrunken) scores: the Bartlett scores scaled per
/// column by (omega - 1)/omega. Residuals are taken against the shrunken
/// scores, so they are kind-specific.
template <class Scalar>
ScoreSet<Scalar> thomson_scores(const FaModel<Scalar>& model, const DataMatrix<Scalar>& x) {
  ScoreSet<Scalar> out = bartlett_scores(model, x);
  const Matrix<Scalar> z = scaled_data(x, model.psi2);
  const Matrix<Scalar> lz = model.psi2.cwiseSqrt().cwiseInverse().asDiagonal() * model.lambda;
  const Vector<Scalar> shrink =
      ((model.omega.array() - Scalar(1)) / model.omega.array()).matrix();
  out.kind = ScoreKind::thomson;
  out.scores = out.scores * shrink.asDiagonal();
  out.residuals_z = z - out.scores * lz.transpose();
  out.residual_msq =
      out.residuals_z.colwise().squaredNorm().transpose() / Scalar(x.n() - 1);
  return out;
}

/// Standardized residual matrix with the p - k normalization made explicit.
/// Requires Bartlett scores: only those leave the residual orthogonal to the
/// retained directions.
template <class Scalar>
ResidualSummary<Scalar> standardized_residuals(const FaModel<Scalar>& model,
                                               const DataMatrix<Scalar>& x,
                                               const ScoreSet<Scalar>& scores) {
  if (scores.kind != ScoreKind::bartlett)
    throw InvalidInputError("standardized_residuals: Bartlett scores required");
  detail::check_scoring_inputs(model, x);
  if (scores.residuals_z.rows() != x.n() || scores.residuals_z.cols() != x.p())
    throw InvalidInputError("standardized_residuals: score set does not match the data");
  ResidualSummary<Scalar> out;
  out.residuals = scores.residuals_z;
  out.msq = scores.residual_msq;
  out.total = out.msq.sum();
  out.dof = x.p() - model.k();
  out.mean_corrected = out.total / Scalar(out.dof);
  return out;
}

/// Var(F_hat | F) = (Lz^T Lz)^{-1} for Bartlett scores; entries shrink like
/// 1/p as variables accumulate. With the true psi2 supplied, the factor by
/// which sampling noise can inflate this is bounded by max_j psi2_j/psi2_hat_j.
template <class Scalar>
ScoreCovariance<Scalar> score_covariance(const FaModel<Scalar>& model,
                                         std::optional<Vector<Scalar>> psi2_true = {}) {
  if (!(model.psi2.array() > Scalar(0)).all())
    throw DomainError("score_covariance: model psi2 must be strictly positive");
  const Matrix<Scalar> lz = model.psi2.cwiseSqrt().cwiseInverse().asDiagonal() * model.lambda;
  const Matrix<Scalar> gram = lz.transpose() * lz;
  Eigen::LDLT<Matrix<Scalar>> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      gram.diagonal().minCoeff() <= std::numeric_limits<Scalar>::min())
    throw DegenerateFactorError("score_covariance: Lz^T Lz is singular");
  ScoreCovariance<Scalar> out;
  out.covariance = ldlt.solve(Matrix<Scalar>::Identity(model.k(), model.k()));
  if (psi2_true) {
    if (psi2_true->size() != model.p())
      throw InvalidInputError("score_covariance: psi2_true must have length p");
    if (!(psi2_true->array() > Scalar(0)).all())
      throw DomainError("score_covariance: psi2_true must be strictly positive");
    out.inflation_bound = (psi2_true->cwiseQuotient(model.psi2)).maxCoeff();
  }
  return out;
}

/// Orthogonal (rotation + reflection) alignment of an estimated score matrix
/// to a reference: returns estimate * Q with Q minimizing |estimate Q - truth|_F.
template <class DerivedA, class DerivedB>
Matrix<typename DerivedA::Scalar> procrustes_align(const Eigen::MatrixBase<DerivedA>& estimate,
                                                   const Eigen::MatrixBase<DerivedB>& truth) {
  using Scalar = typename DerivedA::Scalar;
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw InvalidInputError("procrustes_align: shape mismatch");
  const Matrix<Scalar> cross = estimate.derived().transpose() * truth.derived();
  Eigen::JacobiSVD<Matrix<Scalar>> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix<Scalar> q = svd.matrixU() * svd.matrixV().transpose();
  return estimate.derived() * q;
}

}  // namespace zfa
