#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "zfa/config.hpp"
#include "zfa/data.hpp"
#include "zfa/errors.hpp"
#include "zfa/model.hpp"
#include "zfa/svd.hpp"
#include "zfa/types.hpp"

namespace zfa {

/// How far a (lambda, psi2) pair is from solving the two estimating equations.
/// lambda_residual is a normalized Frobenius distance between canonical forms;
/// psi_residual is the max relative defect of the uniqueness equation.
template <class Scalar = double>
struct EstimatingResidual {
  Scalar lambda_residual = Scalar(0);
  Scalar psi_residual = Scalar(0);
};

/// Summary of uniqueness positivity over a fit.
template <class Scalar = double>
struct HeywoodReport {
  Scalar min_psi2 = Scalar(0);
  bool nonpositive = false;
  int iterations = 0;
};

namespace detail {

/// Retained eigenvalues omega_l = d1_l^2 / (n-1) of the rescaled covariance,
/// with the two admissibility checks every update step relies on: at least k
/// positive singular values must exist, and every omega must exceed 1.
template <class Scalar>
Vector<Scalar> retained_omega_checked(const TruncatedSvd<Scalar>& svd, Index n_used) {
  const Index k = svd.d1.size();
  if (k < 1 || n_used < 2)
    throw InvalidInputError("retained_omega: empty decomposition or n < 2");
  const Scalar rank_tol = std::numeric_limits<Scalar>::epsilon() *
                          Scalar(std::max(svd.u1.rows(), svd.v1.rows())) * svd.d1(0);
  Vector<Scalar> omega(k);
  for (Index l = 0; l < k; ++l) {
    if (!(svd.d1(l) > rank_tol))
      throw RankAnomalyError("estimator: fewer than k positive singular values (value " +
                             std::to_string(l + 1) + " of " + std::to_string(k) +
                             " is numerically zero)");
    omega(l) = svd.d1(l) * svd.d1(l) / Scalar(n_used - 1);
    if (!(omega(l) > Scalar(1)))
      throw EigenvalueDeficitError(
          "estimator: retained eigenvalue " + std::to_string(l + 1) + " of " +
              std::to_string(k) + " is " + std::to_string(omega(l)) +
              " <= 1; no real loading exists (k too large for these data)",
          l);
  }
  return omega;
}

/// diag(Lz Lz^T): per-variable explained mass in the rescaled metric,
/// g_j = sum_l v1_{jl}^2 (omega_l - 1).
template <class Scalar>
Vector<Scalar> explained_diag(const TruncatedSvd<Scalar>& svd, const Vector<Scalar>& omega) {
  return svd.v1.cwiseProduct(svd.v1) * (omega.array() - Scalar(1)).matrix();
}

}  // namespace detail

/**
 * Loading update: Lambda = Psi V1 (D1^2/(n-1) - I)^{1/2}. Every retained
 * eigenvalue must exceed 1; values at or below 1 raise EigenvalueDeficitError
 * (zero singular values raise RankAnomalyError first). Eigenvalues within
 * 1e-12 above 1 are admissible and simply produce near-zero loading columns.
 */
template <class Scalar, class DerivedP>
Matrix<Scalar> lambda_from_svd(const Eigen::MatrixBase<DerivedP>& psi2,
                               const TruncatedSvd<Scalar>& svd, Index n_used) {
  if (psi2.size() != svd.v1.rows() || psi2.cols() != 1)
    throw InvalidInputError("lambda_from_svd: psi2 must be a length-p vector");
  if (!(psi2.derived().array() > Scalar(0)).all())
    throw DomainError("lambda_from_svd: psi2 must be strictly positive");
  const Vector<Scalar> omega = detail::retained_omega_checked(svd, n_used);
  return psi2.derived().cwiseSqrt().asDiagonal() * svd.v1 *
         (omega.array() - Scalar(1)).sqrt().matrix().asDiagonal();
}

/// Uniqueness update psi2_j <- sxx_jj - (Lambda Lambda^T)_jj, evaluated through
/// the decomposition as sxx_jj - psi2_j sum_l v1_{jl}^2 (omega_l - 1). The
/// result is positive for every admissible input: the subtracted mass never
/// exceeds the part of sxx_jj the retained spectrum accounts for.
template <class Scalar, class DerivedS, class DerivedP>
Vector<Scalar> psi_step_subtract(const Eigen::MatrixBase<DerivedS>& sxx_diag,
                                 const Eigen::MatrixBase<DerivedP>& psi2,
                                 const TruncatedSvd<Scalar>& svd, Index n_used) {
  const Index p = svd.v1.rows();
  if (sxx_diag.size() != p || psi2.size() != p)
    throw InvalidInputError("psi_step_subtract: sxx_diag and psi2 must have length p");
  if (!(sxx_diag.derived().array() > Scalar(0)).all())
    throw DomainError("psi_step_subtract: sxx_diag must be strictly positive");
  if (!(psi2.derived().array() > Scalar(0)).all())
    throw DomainError("psi_step_subtract: psi2 must be strictly positive");
  const Vector<Scalar> omega = detail::retained_omega_checked(svd, n_used);
  const Vector<Scalar> g = detail::explained_diag(svd, omega);
  return sxx_diag.derived() - psi2.derived().cwiseProduct(g);
}

/// Uniqueness update psi2_j <- sxx_jj / (1 + (Lz Lz^T)_jj). Positive for any
/// current loading, but contracts more slowly than the subtract rule.
template <class Scalar, class DerivedS>
Vector<Scalar> psi_step_rescale(const Eigen::MatrixBase<DerivedS>& sxx_diag,
                                const TruncatedSvd<Scalar>& svd, Index n_used) {
  const Index p = svd.v1.rows();
  if (sxx_diag.size() != p)
    throw InvalidInputError("psi_step_rescale: sxx_diag must have length p");
  if (!(sxx_diag.derived().array() > Scalar(0)).all())
    throw DomainError("psi_step_rescale: sxx_diag must be strictly positive");
  const Vector<Scalar> omega = detail::retained_omega_checked(svd, n_used);
  const Vector<Scalar> g = detail::explained_diag(svd, omega);
  return (sxx_diag.derived().array() / (Scalar(1) + g.array())).matrix();
}

/**
 * Residuals of the two estimating equations at an arbitrary (lambda, psi2).
 * Both the given lambda and the one the data imply at this psi2 are put in
 * canonical form first, so the loading residual ignores column sign and
 * rotation conventions and is zero exactly at a fixed point. Eigenvalues of
 * the rescaled covariance at or below 1 are clamped in the reconstruction,
 * which keeps the residual finite (and large) instead of failing.
 */
template <class Scalar, class DerivedL, class DerivedP>
EstimatingResidual<Scalar> estimating_residual(const DataMatrix<Scalar>& x,
                                               const Eigen::MatrixBase<DerivedL>& lambda,
                                               const Eigen::MatrixBase<DerivedP>& psi2) {
  validate(x);
  const Index p = x.p();
  const Index k = lambda.cols();
  if (lambda.rows() != p) throw InvalidInputError("estimating_residual: lambda must be p x k");
  if (psi2.size() != p) throw InvalidInputError("estimating_residual: psi2 must have length p");
  if (k < 1 || k >= std::min(x.n(), p))
    throw InvalidInputError("estimating_residual: need 1 <= k < min(n, p)");
  if (!lambda.derived().allFinite())
    throw InvalidInputError("estimating_residual: lambda contains non-finite values");
  if (!(psi2.derived().array() > Scalar(0)).all())
    throw DomainError("estimating_residual: psi2 must be strictly positive");

  const Vector<Scalar> sxx = sample_variance_diag(x);
  if (!(sxx.array() > Scalar(0)).all())
    throw DomainError("estimating_residual: a column has zero sample variance");

  EstimatingResidual<Scalar> out;
  const Vector<Scalar> row_mass = lambda.derived().cwiseProduct(lambda.derived()).rowwise().sum();
  out.psi_residual =
      ((psi2.derived() - (sxx - row_mass)).cwiseQuotient(sxx)).cwiseAbs().maxCoeff();

  const TruncatedSvd<Scalar> svd = truncated_svd(scaled_data(x, psi2), k);
  Vector<Scalar> shifted(k);
  for (Index l = 0; l < k; ++l) {
    const Scalar omega = svd.d1(l) * svd.d1(l) / Scalar(x.n() - 1);
    shifted(l) = std::sqrt(std::max(omega - Scalar(1), Scalar(0)));
  }
  const Matrix<Scalar> implied =
      psi2.derived().cwiseSqrt().asDiagonal() * svd.v1 * shifted.asDiagonal();
  const Matrix<Scalar> lhs = canonicalize(lambda, psi2);
  const Matrix<Scalar> rhs = canonicalize(implied, psi2);
  out.lambda_residual = (lhs - rhs).norm() / (Scalar(1) + lambda.derived().norm());
  return out;
}

/**
 * Fit the random-factor model by fixed-point iteration on the estimating
 * equations. Each pass rescales the data by the current uniquenesses, takes
 * the truncated SVD through the smaller Gram matrix, rebuilds the loadings,
 * and updates psi2 by the configured rule. Convergence requires both the
 * relative psi2 change to drop below tol_psi and the discarded spectrum mass
 * tr(D2^2)/(n-1) to sit within tol_trace * p of p - k. The returned loadings
 * are always rebuilt from the returned psi2, so the pair is exactly
 * self-consistent, and are canonicalized. On max_iter exhaustion the last
 * iterate is returned with converged unset.
 */
template <class Scalar>
FaModel<Scalar> fit(const DataMatrix<Scalar>& x, const FaConfig<Scalar>& config) {
  validate(x);
  validate(config);
  const Index n = x.n();
  const Index p = x.p();
  const Index k = config.k;
  if (k >= std::min(n, p))
    throw InvalidInputError("fit: k must satisfy k < min(n, p); got k = " + std::to_string(k) +
                            " with n = " + std::to_string(n) + ", p = " + std::to_string(p));

  const Vector<Scalar> sxx = sample_variance_diag(x);
  for (Index j = 0; j < p; ++j)
    if (!(sxx(j) > Scalar(0)))
      throw DomainError("fit: column " + std::to_string(j + 1) + " (" + x.column_names[j] +
                        ") has zero sample variance");

  Vector<Scalar> psi2;
  if (config.psi2_init.size() > 0) {
    if (config.psi2_init.size() != p)
      throw InvalidInputError("fit: psi2_init must have length p");
    psi2 = config.psi2_init;
  } else {
    psi2 = config.psi2_init_fraction * sxx;
  }

  FaModel<Scalar> model;
  model.n_used = n;
  model.config = config;
  model.column_names = x.column_names;
  model.column_scales = x.column_scales;

  bool boundary_warned = false;
  Vector<Scalar> omega;
  TruncatedSvd<Scalar> svd;
  auto decompose = [&](const Vector<Scalar>& current, int iter) {
    try {
      svd = truncated_svd(scaled_data(x, current), k);
      omega = detail::retained_omega_checked(svd, n);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (fit iteration " + std::to_string(iter) +
                           ")");
    }
    if (!boundary_warned && ((omega.array() - Scalar(1)) <= Scalar(1e-12)).any()) {
      model.warnings.push_back(
          "a retained eigenvalue is within 1e-12 of the admissibility boundary 1; the "
          "corresponding loading column is near zero");
      boundary_warned = true;
    }
  };

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    decompose(psi2, iter);
    const Vector<Scalar> psi2_next =
        (config.rule == UpdateRule::subtract)
            ? Vector<Scalar>(psi_step_subtract(sxx, psi2, svd, n))
            : Vector<Scalar>(psi_step_rescale(sxx, svd, n));

    IterationRecord<Scalar> rec;
    rec.iter = iter;
    rec.tail_sum = svd.tail_sum_sq / Scalar(n - 1);
    rec.min_psi2 = psi2_next.minCoeff();
    rec.max_psi2 = psi2_next.maxCoeff();
    rec.psi2_rel_change =
        ((psi2_next - psi2).cwiseQuotient(psi2)).cwiseAbs().maxCoeff();
    rec.omega_min = omega.minCoeff();
    model.trace.push_back(rec);

    const bool trace_ok =
        std::abs(rec.tail_sum - Scalar(p - k)) <= config.tol_trace * Scalar(p);
    if (rec.psi2_rel_change < config.tol_psi && trace_ok) {
      model.converged = true;
      break;
    }
    psi2 = psi2_next;
  }

  if (!model.converged) decompose(psi2, config.max_iter + 1);
  model.psi2 = psi2;
  model.omega = omega;
  model.lambda = canonicalize(lambda_from_svd(psi2, svd, n), psi2);
  return model;
}

/// Positivity summary over an iteration trace.
template <class Scalar>
HeywoodReport<Scalar> heywood_report(const IterationTrace<Scalar>& trace) {
  if (trace.empty()) throw InvalidInputError("heywood_report: empty trace");
  HeywoodReport<Scalar> out;
  out.min_psi2 = trace.front().min_psi2;
  for (const auto& rec : trace) out.min_psi2 = std::min(out.min_psi2, rec.min_psi2);
  out.nonpositive = !(out.min_psi2 > Scalar(0));
  out.iterations = static_cast<int>(trace.size());
  return out;
}

}  // namespace zfa
