/// @file mixture.hpp Fixed-weight Gaussian-mixture filter.
///
/// Each component i of q_t = Σ w N(μ⁽ⁱ⁾, Σ⁽ⁱ⁾), w = 1/N, follows
///
///   dμ⁽ⁱ⁾/dt = −E[r(Z⁽ⁱ⁾)],          r = ∇log q_t + ∇V
///   dΣ⁽ⁱ⁾/dt = −E[R(Z⁽ⁱ⁾)] Σ⁽ⁱ⁾ − Σ⁽ⁱ⁾ E[R(Z⁽ⁱ⁾)],   R = ∇²log q_t + ∇²V
///
/// where V is the negative log of (observation density × mixture predictive).

#pragma once

#include "wgf/vwf.hpp"

#include <vector>

namespace wgf {

struct MixtureBelief {
  std::vector<Belief> components;

  [[nodiscard]] std::size_t size() const { return components.size(); }
  [[nodiscard]] double weight() const { return 1.0 / static_cast<double>(components.size()); }
  [[nodiscard]] Eigen::Index dim() const { return components.front().dim(); }
};

/// Throws ConfigError unless the mixture is nonempty with matching dimensions.
void validate(const MixtureBelief& belief);

/// log q, ∇log q and ∇²log q of a uniform-weight Gaussian mixture.
class MixtureDensity {
 public:
  explicit MixtureDensity(const MixtureBelief& belief, double jitter = 1e-9);

  [[nodiscard]] double log_q(const Vec& x) const;
  [[nodiscard]] Vec grad_log_q(const Vec& x) const;
  [[nodiscard]] Mat hess_log_q(const Vec& x) const;

  /// All three at once; `grad`/`hess` may be null.
  double evaluate(const Vec& x, Vec* grad, Mat* hess) const;

 private:
  struct Component {
    Vec mean;
    Mat chol;
    Mat precision;
    double log_norm;
  };
  std::vector<Component> components_;
  double log_weight_;
};

/// V = −log h(y | x) − log p̄(x) with p̄ the mixture predictive.
Potential<double> make_mixture_potential(const Model& model, const Vec& y,
                                         const MixtureBelief& predictive, double jitter = 1e-9);

MixtureBelief mixture_predict(const MixtureBelief& belief, const AffineGaussianTransition<double>& transition);

std::vector<FlowRhs<double>> mixture_flow_rhs(const MixtureBelief& belief, const Potential<double>& potential,
                                              const UnitNodeSet& rule, double jitter = 1e-9);

struct MixtureConfig {
  /// Components i, j collapse when ‖μ⁽ⁱ⁾ − μ⁽ʲ⁾‖ < merge_factor · √tr((Σ⁽ⁱ⁾ + Σ⁽ʲ⁾)/2).
  double merge_factor = 1e-3;
};

struct CollapseEvent {
  long step = 0;
  int first = 0;
  int second = 0;
  double distance = 0.0;
};

struct MixtureInnovation {
  MixtureBelief belief;
  int iterations = 0;
  bool converged = false;
  double step_size = 0.0;
  std::vector<CollapseEvent> collapses;  // step left at 0
};

std::vector<CollapseEvent> detect_collapse(const MixtureBelief& belief, const MixtureConfig& config);

/// Euler fixed-point iteration of all components jointly from the predictive.
MixtureInnovation mixture_innovate(const MixtureBelief& predictive, const Vec& y, const Model& model,
                                   const UnitNodeSet& rule, const FlowConfig& config,
                                   const MixtureConfig& mixture_config = {});

/// log E_{p̄}[h(y | x)] for the mixture predictive p̄, as log E_q[h p̄ / q] with
/// nodes on every component of the mixture `base` = q.
double mixture_loglik_increment(const MixtureBelief& predictive, const MixtureBelief& base, const Vec& y,
                                const Model& model, const UnitNodeSet& rule, double jitter = 1e-9);

/// Nodes on the predictive components: log Σᵢ w E_{N(m̄⁽ⁱ⁾, P̄⁽ⁱ⁾)}[h(y | x)].
double mixture_loglik_increment(const MixtureBelief& predictive, const Vec& y, const Model& model,
                                const UnitNodeSet& rule, double jitter = 1e-9);

struct MixtureFilterRun {
  std::vector<MixtureBelief> filtered;
  std::vector<MixtureBelief> predicted;
  double loglik = 0.0;
  std::vector<double> increments;
  std::vector<int> iters_per_step;
  std::vector<bool> converged;
  std::vector<CollapseEvent> collapses;

  [[nodiscard]] long steps() const { return static_cast<long>(filtered.size()); }
  [[nodiscard]] long converged_steps() const;
};

/// `init` is the belief at time 0; it is predicted forward before the first observation.
MixtureFilterRun mixture_filter(const Model& model, const Eigen::MatrixXd& observations, int n_components,
                                const MixtureBelief& init, const UnitNodeSet& rule, const FlowConfig& config,
                                const MixtureConfig& mixture_config = {});

/// Two components at ±√δ² with variance δ² each (1-D).
MixtureBelief mirrored_init(double delta_sq);

/// Every component equal to `belief`.
MixtureBelief replicate(const Belief& belief, int n_components);

}  // namespace wgf
