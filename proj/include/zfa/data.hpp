#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "zfa/errors.hpp"
#include "zfa/types.hpp"

namespace zfa {

/// Column-centered observation matrix. Rows are observations, columns are variables.
/// column_scales records any variance standardization applied on load (1 = untouched),
/// column_means the mean vector removed by centering.
template <class Scalar = double>
struct DataMatrix {
  Matrix<Scalar> values;
  std::vector<std::string> column_names;
  Vector<Scalar> column_means;
  Vector<Scalar> column_scales;
  bool centered = false;

  Index n() const { return values.rows(); }
  Index p() const { return values.cols(); }
};

namespace detail {

inline std::vector<std::string> default_column_names(Index p) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

}  // namespace detail

/// Center columns of raw observations; optionally rescale each column to unit
/// sample variance (divisor n-1). A column with zero variance cannot be
/// standardized and raises a DomainError naming the column.
template <class Derived>
DataMatrix<typename Derived::Scalar> center_columns(const Eigen::MatrixBase<Derived>& raw,
                                                    std::vector<std::string> names = {},
                                                    bool standardize = false) {
  using Scalar = typename Derived::Scalar;
  const Index n = raw.rows();
  const Index p = raw.cols();
  if (n < 2) throw InvalidInputError("center_columns: at least 2 observations required");
  if (p < 1) throw InvalidInputError("center_columns: at least 1 variable required");
  if (!raw.derived().allFinite())
    throw InvalidInputError("center_columns: input contains non-finite values");
  if (names.empty()) names = detail::default_column_names(p);
  if (static_cast<Index>(names.size()) != p)
    throw InvalidInputError("center_columns: column name count does not match column count");

  DataMatrix<Scalar> out;
  out.column_means = raw.derived().colwise().mean();
  out.values = raw.derived().rowwise() - out.column_means.transpose();
  out.column_scales = Vector<Scalar>::Ones(p);
  if (standardize) {
    for (Index j = 0; j < p; ++j) {
      const Scalar sd = std::sqrt(out.values.col(j).squaredNorm() / Scalar(n - 1));
      if (sd <= Scalar(1e-12) * (Scalar(1) + std::abs(out.column_means(j))))
        throw DomainError("center_columns: column " + std::to_string(j + 1) + " (" + names[j] +
                          ") is constant and cannot be standardized");
      out.values.col(j) /= sd;
      out.column_scales(j) = sd;
    }
  }
  out.column_names = std::move(names);
  out.centered = true;
  return out;
}

/// Throws unless the invariants of a centered DataMatrix hold.
template <class Scalar>
void validate(const DataMatrix<Scalar>& x) {
  const Index n = x.n();
  const Index p = x.p();
  if (n < 2 || p < 1) throw InvalidInputError("DataMatrix: need n >= 2 and p >= 1");
  if (!x.values.allFinite()) throw InvalidInputError("DataMatrix: non-finite values");
  if (!x.centered) throw InvalidInputError("DataMatrix: values are not centered");
  if (x.column_scales.size() != p || !(x.column_scales.array() > Scalar(0)).all())
    throw InvalidInputError("DataMatrix: column_scales must be length p and positive");
  if (static_cast<Index>(x.column_names.size()) != p)
    throw InvalidInputError("DataMatrix: column_names must have length p");
  for (Index j = 0; j < p; ++j) {
    const Scalar mean = x.values.col(j).mean();
    const Scalar sd = std::sqrt(x.values.col(j).squaredNorm() / Scalar(n - 1));
    if (std::abs(mean) > Scalar(1e-12) * (sd + Scalar(1)))
      throw InvalidInputError("DataMatrix: column " + std::to_string(j + 1) +
                              " is not centered");
  }
}

/// diag(S_xx): per-column sample variance of centered data, divisor n-1.
template <class Scalar>
Vector<Scalar> sample_variance_diag(const DataMatrix<Scalar>& x) {
  return x.values.colwise().squaredNorm().transpose() / Scalar(x.n() - 1);
}

}  // namespace zfa
