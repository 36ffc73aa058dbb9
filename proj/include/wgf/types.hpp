/// @file types.hpp Dense types shared by every filter in the toolkit.
///
/// All state-space quantities are small dense Eigen objects whose storage is
/// inline (bounded by kMaxDim) so that the quadrature inner loops never touch
/// the heap. Everything numerical is templated on the scalar so the same code
/// path runs on `double` and on the forward-mode dual number used for
/// likelihood gradients.

#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wgf {

/// Largest state or observation dimension supported by the inline storage.
inline constexpr int kMaxDim = 6;

/// Largest number of simultaneous directional derivatives carried by Dual.
inline constexpr int kMaxDerivatives = 32;

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

using Vec = Vector<double>;
using Mat = Matrix<double>;

using Derivatives = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDerivatives, 1>;

/// Forward-mode dual number (value plus gradient w.r.t. a fixed seed set).
using Dual = Eigen::AutoDiffScalar<Derivatives>;

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }

template <class Derived>
auto values_of(const Eigen::MatrixBase<Derived>& m) {
  using Plain = Eigen::Matrix<double, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime, 0,
                              Derived::MaxRowsAtCompileTime, Derived::MaxColsAtCompileTime>;
  Plain out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = value_of(m(i, j));
  return out;
}

inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(const Dual& x) { return std::isfinite(x.value()) && x.derivatives().allFinite(); }

template <class Derived>
bool is_finite(const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!is_finite(m(i, j))) return false;
  return true;
}

/// Mean/covariance pair describing a filtering or predictive marginal.
template <class Scalar>
struct GaussianBelief {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;

  [[nodiscard]] Eigen::Index dim() const { return mean.size(); }
};

using Belief = GaussianBelief<double>;

/// Named, ordered parameter vector θ.
struct ParameterVector {
  std::vector<std::string> names;
  Eigen::VectorXd values;

  [[nodiscard]] double at(const std::string& name) const;
  [[nodiscard]] std::ptrdiff_t index_of(const std::string& name) const;
};

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model or run configuration (dimension mismatch, bad parameter range).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed; `step()` is the 1-based filter step or -1.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long step = -1)
      : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what), step_(step) {}
  [[nodiscard]] long step() const { return step_; }

 private:
  long step_;
};

class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A quadrature integrand returned a non-finite value.
class EvaluationFailure : public NumericalError {
 public:
  EvaluationFailure(const std::string& what, Vec node)
      : NumericalError(what), node_(std::move(node)) {}
  [[nodiscard]] const Vec& node() const { return node_; }

 private:
  Vec node_;
};

/// The gradient-flow right-hand side or its iteration diverged.
class FlowBlowUp : public NumericalError {
 public:
  FlowBlowUp(const std::string& what, Belief belief, long step = -1, int component = -1)
      : NumericalError(what, step), belief_(std::move(belief)), component_(component) {}
  [[nodiscard]] const Belief& belief() const { return belief_; }
  [[nodiscard]] int component() const { return component_; }

 private:
  Belief belief_;
  int component_;
};

/// Covariance step halving exhausted without restoring positive definiteness.
class StepFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace wgf
