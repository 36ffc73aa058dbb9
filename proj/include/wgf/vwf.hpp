/// @file vwf.hpp Uni-modal variational Gaussian filter driven by a Wasserstein gradient flow.
///
/// The innovation step fits N(m, P) to π ∝ exp(−V) with
///
///   V(x) = −log h(y | x) − log N(x | m̄, P̄)
///
/// by integrating the Gaussian flow
///
///   dμ/dt = −E[∇V(Z)],
///   dΣ/dt = 2I − E[∇V(Z) (Z − μ)ᵀ] − E[(Z − μ) ∇V(Z)ᵀ],   Z ~ N(μ, Σ)
///
/// with explicit Euler steps until the map I(m, P) = (m + h F_m, P + h F_P)
/// reaches a fixed point. Expectations come from a UnitNodeSet.

#pragma once

#include "wgf/linalg.hpp"
#include "wgf/quadrature.hpp"
#include "wgf/ssm.hpp"
#include "wgf/types.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace wgf {

enum class CovarianceForm {
  stein,    // 2I − E[∇V ⊗ (Z−μ)] − E[(Z−μ) ⊗ ∇V]
  hessian,  // 2I − E[∇²V] Σ − Σ E[∇²V]
};

struct FlowConfig {
  double step_size = 0.1;
  int max_iters = 500;
  double tol = 1e-8;
  double jitter = 1e-9;
  CovarianceForm form = CovarianceForm::stein;
  /// Restarts of one innovation with a halved step after the iteration diverges.
  int max_step_reductions = 12;
};

/// Negative unnormalized log-posterior of an innovation step.
template <class Scalar>
struct Potential {
  std::function<Scalar(const Vector<Scalar>&)> value;
  std::function<Vector<Scalar>(const Vector<Scalar>&)> grad;
  std::function<Matrix<Scalar>(const Vector<Scalar>&)> hess;
};

template <class Scalar>
struct FlowRhs {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
};

/// Lower Cholesky factor, retrying once with `jitter`·I added.
template <class Scalar>
Matrix<Scalar> jittered_factor(const Matrix<Scalar>& P, double jitter) {
  if (auto L = cholesky(P)) return *std::move(L);
  Matrix<Scalar> Pj = P;
  for (Eigen::Index i = 0; i < P.rows(); ++i) Pj(i, i) += Scalar(std::max(jitter, 1e-300));
  if (auto L = cholesky(Pj)) return *std::move(L);
  throw NotPositiveDefinite("covariance is not positive definite after jitter");
}

/// V = −log h(y | x) − log N(x | m̄, P̄) for one observation.
template <class Scalar>
Potential<Scalar> make_potential(const ModelDefinition<Scalar>& model, const Vec& y,
                                 const GaussianBelief<Scalar>& predictive, double jitter = 1e-9) {
  const Matrix<Scalar> L = jittered_factor(predictive.cov, jitter);
  const Matrix<Scalar> precision = cholesky_inverse<Scalar>(L);
  const Vector<Scalar> mean = predictive.mean;
  const auto obs = model.observation;

  Potential<Scalar> V;
  V.value = [=](const Vector<Scalar>& x) {
    return -obs.log_density(y, x) - gaussian_log_density<Scalar>(x, mean, L);
  };
  V.grad = [=](const Vector<Scalar>& x) -> Vector<Scalar> {
    return precision * (x - mean) - obs.grad_x_log_density(y, x);
  };
  V.hess = [=](const Vector<Scalar>& x) -> Matrix<Scalar> {
    return precision - obs.hess_x_log_density(y, x);
  };
  return V;
}

/// Quadrature approximation (F_m, F_P) of the Gaussian flow at `belief`.
template <class Scalar>
FlowRhs<Scalar> flow_rhs(const GaussianBelief<Scalar>& belief, const Potential<Scalar>& potential,
                         const UnitNodeSet& rule, CovarianceForm form = CovarianceForm::stein) {
  const Eigen::Index d = belief.dim();
  const auto L_opt = cholesky(belief.cov);
  if (!L_opt)
    throw FlowBlowUp("flow_rhs: belief covariance not positive definite",
                     Belief{values_of(belief.mean), values_of(belief.cov)});
  const Matrix<Scalar>& L = *L_opt;

  Vector<Scalar> grad_mean = Vector<Scalar>::Zero(d);
  Matrix<Scalar> moment = Matrix<Scalar>::Zero(d, d);
  Vector<Scalar> dev(d), x(d), g(d);
  for (Eigen::Index j = 0; j < rule.size(); ++j) {
    const Scalar w(rule.weights(j));
    dev.noalias() = L * rule.nodes.col(j).cast<Scalar>();
    x = belief.mean + dev;
    g = potential.grad(x);
    grad_mean += w * g;
    if (form == CovarianceForm::stein) {
      moment.noalias() += (w * g) * dev.transpose();
    } else {
      moment += w * potential.hess(x);
    }
  }

  FlowRhs<Scalar> out;
  out.mean = -grad_mean;
  const Matrix<Scalar> two_identity = Matrix<Scalar>::Identity(d, d) * Scalar(2.0);
  if (form == CovarianceForm::stein)
    out.cov = two_identity - moment - moment.transpose();
  else
    out.cov = two_identity - moment * belief.cov - belief.cov * moment;
  symmetrize(out.cov);
  if (!is_finite(out.mean) || !is_finite(out.cov))
    throw FlowBlowUp("flow_rhs: non-finite expectation",
                     Belief{values_of(belief.mean), values_of(belief.cov)});
  return out;
}

/// One Euler application without safeguards (used for sensitivities).
template <class Scalar>
GaussianBelief<Scalar> euler_map(const GaussianBelief<Scalar>& belief, const FlowRhs<Scalar>& rhs,
                                 double step_size) {
  GaussianBelief<Scalar> out{belief.mean + Scalar(step_size) * rhs.mean,
                             belief.cov + Scalar(step_size) * rhs.cov};
  symmetrize(out.cov);
  return out;
}

/// I(m, P) followed by symmetrization and covariance step halving until
/// the smallest eigenvalue is ≥ jitter (at most 30 halvings, then StepFailure).
Belief fixed_point_step(const Belief& belief, const Potential<double>& potential,
                        const UnitNodeSet& rule, const FlowConfig& config);

/// Sup-norm change ‖Δm‖∞ + ‖ΔP‖∞.
double belief_change(const Belief& a, const Belief& b);

/// Watches an Euler iteration for trouble that more iterations at the current
/// step will not fix. `diverging` reports growth on 5 consecutive iterations or
/// 50 iterations without a new smallest change (a contracting map keeps
/// setting new minima, a bounded oscillation does not). `oscillating` reports a
/// 50-iteration window in which most updates reversed direction while the change
/// shrank by less than 10x: a mode with h·λ near 2, or a chaotic orbit, that
/// will not reach tolerance at this h.
class DivergenceMonitor {
 public:
  enum class Verdict { proceed, oscillating, diverging };

  Verdict observe(double change, const Eigen::VectorXd& delta);
  void reset() { *this = DivergenceMonitor{}; }

 private:
  static constexpr int kGrowthLimit = 5;
  static constexpr int kStallLimit = 50;
  static constexpr int kWindow = 50;
  double previous_ = std::numeric_limits<double>::infinity();
  double best_ = std::numeric_limits<double>::infinity();
  Eigen::VectorXd last_delta_;
  int growth_ = 0;
  int stall_ = 0;
  double window_start_ = std::numeric_limits<double>::infinity();
  int window_length_ = 0;
  int reversals_ = 0;
};

/// Flattened (mean, covariance) difference a − b.
Eigen::VectorXd belief_delta(const Belief& a, const Belief& b);

struct InnovationResult {
  Belief belief;
  int iterations = 0;
  bool converged = false;
  double step_size = 0.0;  // Euler step in effect at termination
};

/// Fixed-point iteration from the predictive (or `warm_start`) until the change drops below tol.
InnovationResult innovate(const Belief& predictive, const Vec& y, const Model& model,
                          const UnitNodeSet& rule, const FlowConfig& config,
                          const std::optional<Belief>& warm_start = std::nullopt);

/// log E_{N(m̄, P̄)}[h(y | x)] written as log E_q[h(y | x) N(x; m̄, P̄) / q(x)] with
/// the nodes placed on `base` = q, and evaluated with a max-shift over nodes.
/// With q the converged Gaussian posterior the integrand is constant for an
/// affine-Gaussian observation, so the rule is exact there and accurate
/// whenever the posterior is close to Gaussian.
template <class Scalar>
Scalar loglik_increment(const GaussianBelief<Scalar>& predictive, const GaussianBelief<Scalar>& base,
                        const Vec& y, const ModelDefinition<Scalar>& model, const UnitNodeSet& rule,
                        double jitter = 1e-9) {
  const Matrix<Scalar> Lp = jittered_factor(predictive.cov, jitter);
  const Matrix<Scalar> Lq = jittered_factor(base.cov, jitter);
  std::vector<Scalar> terms(static_cast<std::size_t>(rule.size()));
  Vector<Scalar> x(predictive.dim());
  for (Eigen::Index j = 0; j < rule.size(); ++j) {
    x = base.mean + Lq * rule.nodes.col(j).cast<Scalar>();
    const Scalar lp = model.observation.log_density(y, x);
    if (std::isnan(value_of(lp)) || value_of(lp) == std::numeric_limits<double>::infinity())
      throw EvaluationFailure("observation log-density is not a number", values_of(x));
    terms[static_cast<std::size_t>(j)] = lp + gaussian_log_density<Scalar>(x, predictive.mean, Lp) -
                                         gaussian_log_density<Scalar>(x, base.mean, Lq) +
                                         Scalar(std::log(rule.weights(j)));
  }
  return log_sum_exp(terms);
}

/// Nodes on the predictive itself.
template <class Scalar>
Scalar loglik_increment(const GaussianBelief<Scalar>& predictive, const Vec& y,
                        const ModelDefinition<Scalar>& model, const UnitNodeSet& rule,
                        double jitter = 1e-9) {
  return loglik_increment(predictive, predictive, y, model, rule, jitter);
}

/// m̄ = A m + b, P̄ = A P Aᵀ + Q.
template <class Scalar>
GaussianBelief<Scalar> predict(const GaussianBelief<Scalar>& belief,
                               const AffineGaussianTransition<Scalar>& transition) {
  GaussianBelief<Scalar> out;
  out.mean = transition.A * belief.mean + transition.b;
  out.cov = transition.A * belief.cov * transition.A.transpose() + transition.Q;
  symmetrize(out.cov);
  return out;
}

/// Per-step beliefs plus the accumulated marginal log-likelihood.
struct FilterRun {
  std::vector<Belief> filtered;
  std::vector<Belief> predicted;
  double loglik = 0.0;
  std::vector<double> increments;
  std::vector<int> iters_per_step;
  std::vector<bool> converged;
  std::vector<double> step_sizes;

  [[nodiscard]] long steps() const { return static_cast<long>(filtered.size()); }
  [[nodiscard]] long converged_steps() const;
};

/// Likelihood increment, innovation, prediction for k = 1..K.
FilterRun filter(const Model& model, const Eigen::MatrixXd& observations, const UnitNodeSet& rule,
                 const FlowConfig& config);

/// Observation row k (1-based) as a vector.
inline Vec observation_at(const Eigen::MatrixXd& observations, long k) {
  return observations.row(k - 1).transpose();
}

}  // namespace wgf
