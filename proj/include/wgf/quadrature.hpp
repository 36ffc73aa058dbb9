/// @file quadrature.hpp Expectations under a multivariate Gaussian.
///
/// A UnitNodeSet is a rule for N(0, I_d). Expectations under N(m, P) are taken
/// on the transformed nodes m + L z, with L the lower Cholesky factor of P.
/// Gauss–Hermite rules are tensor products of the 1-D probabilists' rule and
/// are exact for polynomials of per-axis degree ≤ 2·order − 1.

#pragma once

#include "wgf/linalg.hpp"
#include "wgf/types.hpp"

#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>

namespace wgf {

enum class QuadratureKind { gauss_hermite, monte_carlo };

std::string to_string(QuadratureKind kind);
QuadratureKind quadrature_kind_from_string(const std::string& name);

struct QuadratureRule {
  QuadratureKind kind = QuadratureKind::gauss_hermite;
  int order = 5;
  int sample_count = 1000;
  std::uint64_t seed = 0;
};

/// Nodes (one per column, standard-normal coordinates) and their weights.
struct UnitNodeSet {
  Eigen::MatrixXd nodes;
  Eigen::VectorXd weights;
  QuadratureKind kind = QuadratureKind::gauss_hermite;

  [[nodiscard]] Eigen::Index dim() const { return nodes.rows(); }
  [[nodiscard]] Eigen::Index size() const { return nodes.cols(); }
};

/// Raised when a tensor-product rule would exceed the node cap.
class InfeasibleRule : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline constexpr std::size_t kDefaultNodeCap = 1'000'000;

/// 1-D probabilists' Gauss–Hermite rule (weight exp(−x²/2)/√(2π)); weights sum to 1.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite_1d(int order);

UnitNodeSet build_rule(QuadratureKind kind, int order_or_samples, int dimension,
                       std::uint64_t seed = 0, std::size_t node_cap = kDefaultNodeCap);

inline UnitNodeSet build_rule(const QuadratureRule& rule, int dimension,
                              std::size_t node_cap = kDefaultNodeCap) {
  return build_rule(rule.kind,
                    rule.kind == QuadratureKind::gauss_hermite ? rule.order : rule.sample_count,
                    dimension, rule.seed, node_cap);
}

/// Lower Cholesky factor of a belief covariance; throws NotPositiveDefinite.
template <class Scalar>
Matrix<Scalar> belief_factor(const GaussianBelief<Scalar>& belief) {
  auto L = cholesky(belief.cov);
  if (!L) throw NotPositiveDefinite("covariance is not positive definite");
  return *std::move(L);
}

namespace detail {
template <class T, class = void>
struct plain_of {
  using type = T;
};
template <class T>
struct plain_of<T, std::void_t<typename T::PlainObject>> {
  using type = typename T::PlainObject;
};
}  // namespace detail

/// Σ_j w_j f(m + L z_j). `f` may return a scalar or any Eigen dense object.
template <class Scalar, class F>
auto expect(F&& f, const GaussianBelief<Scalar>& belief, const UnitNodeSet& rule) {
  const Matrix<Scalar> L = belief_factor(belief);
  using Result = std::decay_t<decltype(f(std::declval<const Vector<Scalar>&>()))>;
  using Plain = typename detail::plain_of<Result>::type;
  Plain acc;
  Vector<Scalar> x(belief.dim());
  for (Eigen::Index j = 0; j < rule.size(); ++j) {
    x = belief.mean + L * rule.nodes.col(j).cast<Scalar>();
    Plain value = f(x);
    if (!is_finite(value))
      throw EvaluationFailure("non-finite integrand at quadrature node", values_of(x));
    if (j == 0)
      acc = value * Scalar(rule.weights(0));
    else
      acc += value * Scalar(rule.weights(j));
  }
  return acc;
}

}  // namespace wgf
