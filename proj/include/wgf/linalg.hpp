/// @file linalg.hpp Small dense helpers templated on the scalar.

#pragma once

#include "wgf/types.hpp"

#include <limits>
#include <numbers>
#include <optional>

namespace wgf {

/// Lower Cholesky factor of a symmetric matrix; empty when not positive definite.
template <class Scalar>
std::optional<Matrix<Scalar>> cholesky(const Matrix<Scalar>& P) {
  using std::sqrt;
  const Eigen::Index n = P.rows();
  Matrix<Scalar> L = Matrix<Scalar>::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Scalar diag = P(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= L(j, k) * L(j, k);
    if (!(value_of(diag) > 0.0)) return std::nullopt;
    L(j, j) = sqrt(diag);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      Scalar s = P(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  return L;
}

/// Solves L Lᵀ x = b given the lower factor.
template <class Scalar, class Rhs>
Rhs cholesky_solve(const Matrix<Scalar>& L, Rhs b) {
  const Eigen::Index n = L.rows();
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < i; ++k) b(i, c) -= L(i, k) * b(k, c);
      b(i, c) /= L(i, i);
    }
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      for (Eigen::Index k = i + 1; k < n; ++k) b(i, c) -= L(k, i) * b(k, c);
      b(i, c) /= L(i, i);
    }
  }
  return b;
}

template <class Scalar>
Matrix<Scalar> cholesky_inverse(const Matrix<Scalar>& L) {
  return cholesky_solve<Scalar>(L, Matrix<Scalar>(Matrix<Scalar>::Identity(L.rows(), L.rows())));
}

template <class Scalar>
Scalar log_det_from_cholesky(const Matrix<Scalar>& L) {
  using std::log;
  Scalar s(0.0);
  for (Eigen::Index i = 0; i < L.rows(); ++i) s += log(L(i, i));
  return Scalar(2.0) * s;
}

template <class Derived>
void symmetrize(Eigen::MatrixBase<Derived>& P) {
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      auto avg = (P(i, j) + P(j, i)) * 0.5;
      P(i, j) = avg;
      P(j, i) = avg;
    }
}

inline double min_eigenvalue(const Mat& P) {
  if (P.rows() == 1) return P(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> es(P, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Symmetric square root factor of a PSD matrix (eigenvalues clamped at zero).
inline Mat psd_sqrt(const Mat& P) {
  Eigen::SelfAdjointEigenSolver<Mat> es(P);
  Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal();
}

/// Gaussian log-density log N(x | mean, cov) from a precomputed Cholesky factor.
template <class Scalar>
Scalar gaussian_log_density(const Vector<Scalar>& x, const Vector<Scalar>& mean,
                            const Matrix<Scalar>& chol) {
  Vector<Scalar> r = x - mean;
  // forward substitution only: ‖L⁻¹ r‖²
  const Eigen::Index n = r.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < i; ++k) r(i) -= chol(i, k) * r(k);
    r(i) /= chol(i, i);
  }
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return Scalar(-0.5) * (r.squaredNorm() + log_det_from_cholesky(chol) +
                         Scalar(static_cast<double>(n) * log2pi));
}

/// log Σ exp(a_i) with max-shift; −∞ when every term is −∞.
template <class Scalar>
Scalar log_sum_exp(const std::vector<Scalar>& terms) {
  using std::exp;
  using std::log;
  double max_value = -std::numeric_limits<double>::infinity();
  for (const auto& t : terms) max_value = std::max(max_value, value_of(t));
  if (!std::isfinite(max_value)) return Scalar(max_value);
  Scalar acc(0.0);
  for (const auto& t : terms)
    if (value_of(t) > -std::numeric_limits<double>::infinity()) acc += exp(t - max_value);
  return log(acc) + max_value;
}

inline Eigen::Index packed_size(Eigen::Index d) { return d * (d + 1) / 2; }

}  // namespace wgf
