#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "zfa/data.hpp"
#include "zfa/errors.hpp"
#include "zfa/model.hpp"
#include "zfa/types.hpp"

namespace zfa {

enum class DistKind { gaussian, uniform_scaled, student_t };

/// Sampling distribution, always standardized to mean 0 and variance 1:
/// gaussian N(0,1); uniform on (-sqrt(3), sqrt(3)); Student t with df >= 3
/// divided by sqrt(df/(df-2)).
struct Dist {
  DistKind kind = DistKind::gaussian;
  double df = 5.0;
};

template <class Scalar = double>
struct SimSpec {
  Matrix<Scalar> lambda_true;
  Vector<Scalar> psi2_true;
  Index n = 0;
  Dist factor_dist;
  Dist noise_dist;
  std::uint64_t seed = 0;
};

/// Simulated data together with the factor scores that generated it.
template <class Scalar = double>
struct SimResult {
  DataMatrix<Scalar> data;
  Matrix<Scalar> factors;
};

namespace detail {

template <class Scalar>
class StandardizedSampler {
 public:
  StandardizedSampler(Dist dist, std::mt19937_64& rng)
      : dist_(dist), rng_(rng), student_(dist.df >= 3.0 ? dist.df : 3.0) {
    if (dist.kind == DistKind::student_t) {
      if (!(dist.df >= 3.0))
        throw InvalidInputError("simulate: student_t requires df >= 3 to standardize");
      t_scale_ = Scalar(1) / std::sqrt(Scalar(dist.df / (dist.df - 2.0)));
    }
  }

  Scalar operator()() {
    switch (dist_.kind) {
      case DistKind::gaussian:
        return Scalar(normal_(rng_));
      case DistKind::uniform_scaled:
        return Scalar(uniform_(rng_));
      case DistKind::student_t:
        return Scalar(student_(rng_)) * t_scale_;
    }
    throw InvalidInputError("simulate: unknown distribution");
  }

 private:
  Dist dist_;
  std::mt19937_64& rng_;
  Scalar t_scale_ = Scalar(1);
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{-std::numbers::sqrt3, std::numbers::sqrt3};
  std::student_t_distribution<double> student_;
};

template <class Scalar>
Matrix<Scalar> draw_matrix(Index rows, Index cols, Dist dist, std::mt19937_64& rng) {
  StandardizedSampler<Scalar> sampler(dist, rng);
  Matrix<Scalar> out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = sampler();
  return out;
}

}  // namespace detail

/// Draw X = F Lambda^T + E with i.i.d. standardized factors and noise column j
/// scaled by sqrt(psi2_j), then center the columns. Deterministic given the
/// seed. The generating factor scores are returned alongside the data.
template <class Scalar>
SimResult<Scalar> simulate_with_factors(const SimSpec<Scalar>& spec) {
  const Index p = spec.lambda_true.rows();
  const Index k = spec.lambda_true.cols();
  if (p < 1 || k < 1) throw InvalidInputError("simulate: lambda_true must be p x k, p,k >= 1");
  if (spec.n < 2) throw InvalidInputError("simulate: n must be at least 2");
  if (spec.psi2_true.size() != p)
    throw InvalidInputError("simulate: psi2_true must have length p");
  if (!(spec.psi2_true.array() > Scalar(0)).all())
    throw DomainError("simulate: psi2_true must be strictly positive");
  if (!spec.lambda_true.allFinite())
    throw InvalidInputError("simulate: lambda_true contains non-finite values");

  std::mt19937_64 rng(spec.seed);
  SimResult<Scalar> out;
  out.factors = detail::draw_matrix<Scalar>(spec.n, k, spec.factor_dist, rng);
  Matrix<Scalar> noise = detail::draw_matrix<Scalar>(spec.n, p, spec.noise_dist, rng);
  noise = noise * spec.psi2_true.cwiseSqrt().asDiagonal();
  const Matrix<Scalar> x = out.factors * spec.lambda_true.transpose() + noise;
  out.data = center_columns(x);
  return out;
}

template <class Scalar>
DataMatrix<Scalar> simulate(const SimSpec<Scalar>& spec) {
  return simulate_with_factors(spec).data;
}

/**
 * Gaussian log-likelihood of a centered sample under N(0, Lambda Lambda^T + Psi^2),
 * weighted by the n-1 effective observations of centered data so that its
 * stationary points are exactly the estimating equations of the fit:
 *
 *   l = -((n-1)/2) (p log 2 pi + log det Sigma) - (1/2) tr(X Sigma^{-1} X^T).
 *
 * Evaluated through the k x k capacitance matrix I + Lz^T Lz, cost O(npk + k^3),
 * no p x p matrix is formed.
 */
template <class Scalar, class DerivedL, class DerivedP>
Scalar gaussian_loglik(const DataMatrix<Scalar>& x, const Eigen::MatrixBase<DerivedL>& lambda,
                       const Eigen::MatrixBase<DerivedP>& psi2) {
  validate(x);
  const Index n = x.n();
  const Index p = x.p();
  if (lambda.rows() != p) throw InvalidInputError("gaussian_loglik: lambda must be p x k");
  if (psi2.size() != p) throw InvalidInputError("gaussian_loglik: psi2 must have length p");
  if (!lambda.derived().allFinite())
    throw InvalidInputError("gaussian_loglik: lambda contains non-finite values");
  if (!(psi2.derived().array() > Scalar(0)).all())
    throw DomainError("gaussian_loglik: psi2 must be strictly positive");

  const Index k = lambda.cols();
  const Vector<Scalar> inv_psi = psi2.derived().cwiseSqrt().cwiseInverse();
  const Matrix<Scalar> z = x.values * inv_psi.asDiagonal();
  const Matrix<Scalar> lz = inv_psi.asDiagonal() * lambda.derived();
  const Matrix<Scalar> cap =
      Matrix<Scalar>::Identity(k, k) + lz.transpose() * lz;
  Eigen::LLT<Matrix<Scalar>> llt(cap);
  if (llt.info() != Eigen::Success)
    throw NumericalError("gaussian_loglik: capacitance matrix is not positive definite");

  const Matrix<Scalar> chol = llt.matrixL();
  Scalar logdet = psi2.derived().array().log().sum();
  for (Index i = 0; i < k; ++i) logdet += Scalar(2) * std::log(chol(i, i));

  const Matrix<Scalar> b = z * lz;
  const Matrix<Scalar> half =
      chol.template triangularView<Eigen::Lower>().solve(Matrix<Scalar>(b.transpose()));
  const Scalar quad = z.squaredNorm() - half.squaredNorm();

  const Scalar loglik = -Scalar(0.5) * Scalar(n - 1) *
                            (Scalar(p) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
                             logdet) -
                        Scalar(0.5) * quad;
  if (!std::isfinite(loglik))
    throw NumericalError("gaussian_loglik: non-finite result");
  return loglik;
}

/// Size summary of the retained spectrum. theta is the average of sxx_jj over
/// psi2_hat_j; at a converged fit tr(Omega)/k = 1 + (theta - 1) p / k holds to
/// within 1e-8 relative and is verified here. For a non-converged model the
/// identity is skipped and the summary is marked stale instead.
template <class Scalar = double>
struct OmegaSummary {
  Scalar trace_omega = Scalar(0);
  Scalar theta = Scalar(0);
  Scalar mean_omega = Scalar(0);
  Scalar identity_gap_rel = Scalar(0);
  bool stale = false;
};

template <class Scalar, class DerivedS>
OmegaSummary<Scalar> omega_summary(const FaModel<Scalar>& model,
                                   const Eigen::MatrixBase<DerivedS>& sxx_diag) {
  const Index p = model.p();
  const Index k = model.k();
  if (sxx_diag.size() != p)
    throw InvalidInputError("omega_summary: sxx_diag must have length p");
  if (!(sxx_diag.derived().array() > Scalar(0)).all())
    throw DomainError("omega_summary: sxx_diag must be strictly positive");
  if (!(model.psi2.array() > Scalar(0)).all())
    throw DomainError("omega_summary: model psi2 must be strictly positive");
  if (model.omega.size() != k)
    throw InvalidInputError("omega_summary: model omega must have length k");

  OmegaSummary<Scalar> out;
  out.trace_omega = model.omega.sum();
  out.theta = (sxx_diag.derived().cwiseQuotient(model.psi2)).mean();
  out.mean_omega = out.trace_omega / Scalar(k);
  const Scalar implied = Scalar(1) + (out.theta - Scalar(1)) * Scalar(p) / Scalar(k);
  out.identity_gap_rel = std::abs(out.mean_omega - implied) /
                         std::max(std::abs(out.mean_omega), Scalar(1e-300));
  out.stale = !model.converged;
  if (model.converged && out.identity_gap_rel > Scalar(1e-8))
    throw NumericalError(
        "omega_summary: trace identity violated (relative gap " +
        std::to_string(out.identity_gap_rel) +
        "); the variance diagonal does not match the fitted model");
  return out;
}

}  // namespace zfa
