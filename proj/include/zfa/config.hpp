#pragma once

#include <optional>

#include "zfa/errors.hpp"
#include "zfa/types.hpp"

namespace zfa {

/// Uniqueness update rule used inside the fixed-point iteration.
/// subtract: psi2_j <- sxx_jj - (Lambda Lambda^T)_jj   (default; every iterate positive)
/// rescale:  psi2_j <- sxx_jj / (1 + (Lz Lz^T)_jj)     (slower; kept for comparison)
enum class UpdateRule { subtract, rescale };

template <class Scalar = double>
struct FaConfig {
  Index k = 1;
  UpdateRule rule = UpdateRule::subtract;
  /// Explicit per-variable starting uniquenesses; empty means the fraction default.
  Vector<Scalar> psi2_init;
  /// Starting value as a fraction of each sample variance: psi2_j = fraction * sxx_jj.
  Scalar psi2_init_fraction = Scalar(0.5);
  int max_iter = 500;
  /// Convergence tolerance on max_j |psi2 relative change|.
  Scalar tol_psi = Scalar(1e-8);
  /// Tolerance on |tr(D2^2)/(n-1) - (p-k)| / p.
  Scalar tol_trace = Scalar(1e-6);
  std::optional<long> seed;
};

template <class Scalar>
void validate(const FaConfig<Scalar>& config) {
  if (config.k < 1) throw InvalidInputError("FaConfig: k must be at least 1");
  if (config.max_iter < 1) throw InvalidInputError("FaConfig: max_iter must be at least 1");
  if (!(config.tol_psi > Scalar(0)) || !(config.tol_trace > Scalar(0)))
    throw InvalidInputError("FaConfig: tolerances must be strictly positive");
  if (config.psi2_init.size() == 0 && !(config.psi2_init_fraction > Scalar(0)))
    throw InvalidInputError("FaConfig: psi2_init_fraction must be strictly positive");
  if (config.psi2_init.size() > 0 && !(config.psi2_init.array() > Scalar(0)).all())
    throw InvalidInputError("FaConfig: explicit psi2_init must be strictly positive");
}

}  // namespace zfa
