#include "wgf/quadrature.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace wgf {

std::string to_string(QuadratureKind kind) {
  return kind == QuadratureKind::gauss_hermite ? "gauss_hermite" : "monte_carlo";
}

QuadratureKind quadrature_kind_from_string(const std::string& name) {
  if (name == "gauss_hermite") return QuadratureKind::gauss_hermite;
  if (name == "monte_carlo") return QuadratureKind::monte_carlo;
  throw ConfigError("unknown quadrature kind '" + name + "'");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite_1d(int order) {
  if (order < 1) throw ConfigError("Gauss-Hermite order must be >= 1");
  const int n = order;
  // Golub–Welsch on the Jacobi matrix of the monic probabilists' Hermite recurrence.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    J(i, i - 1) = std::sqrt(static_cast<double>(i));
    J(i - 1, i) = J(i, i - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Eigen::VectorXd x = es.eigenvalues();
  Eigen::VectorXd w = es.eigenvectors().row(0).transpose().array().square();

  // Exact mirror symmetry: odd moments vanish identically.
  for (int i = 0; i < n / 2; ++i) {
    const int k = n - 1 - i;
    const double xs = 0.5 * (x(k) - x(i));
    const double ws = 0.5 * (w(k) + w(i));
    x(i) = -xs;
    x(k) = xs;
    w(i) = ws;
    w(k) = ws;
  }
  if (n % 2 == 1) x(n / 2) = 0.0;
  w /= w.sum();
  return {x, w};
}

UnitNodeSet build_rule(QuadratureKind kind, int order_or_samples, int dimension,
                       std::uint64_t seed, std::size_t node_cap) {
  if (dimension < 1) throw ConfigError("quadrature dimension must be >= 1");
  if (order_or_samples < 1) throw ConfigError("quadrature order/sample count must be >= 1");

  UnitNodeSet set;
  set.kind = kind;
  if (kind == QuadratureKind::monte_carlo) {
    if (static_cast<std::size_t>(order_or_samples) > node_cap)
      throw InfeasibleRule("Monte Carlo sample count exceeds node cap");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    set.nodes.resize(dimension, order_or_samples);
    for (int j = 0; j < order_or_samples; ++j)
      for (int i = 0; i < dimension; ++i) set.nodes(i, j) = normal(rng);
    set.weights = Eigen::VectorXd::Constant(order_or_samples, 1.0 / order_or_samples);
    return set;
  }

  std::size_t total = 1;
  for (int i = 0; i < dimension; ++i) {
    if (total > node_cap / static_cast<std::size_t>(order_or_samples))
      throw InfeasibleRule("Gauss-Hermite rule of order " + std::to_string(order_or_samples) +
                           " in dimension " + std::to_string(dimension) + " exceeds node cap");
    total *= static_cast<std::size_t>(order_or_samples);
  }

  const auto [x, w] = gauss_hermite_1d(order_or_samples);
  const auto count = static_cast<Eigen::Index>(total);
  set.nodes.resize(dimension, count);
  set.weights.resize(count);
  std::vector<int> digit(dimension, 0);
  for (Eigen::Index j = 0; j < count; ++j) {
    double weight = 1.0;
    for (int i = 0; i < dimension; ++i) {
      set.nodes(i, j) = x(digit[i]);
      weight *= w(digit[i]);
    }
    set.weights(j) = weight;
    for (int i = 0; i < dimension; ++i) {
      if (++digit[i] < order_or_samples) break;
      digit[i] = 0;
    }
  }
  set.weights /= set.weights.sum();
  return set;
}

}  // namespace wgf
