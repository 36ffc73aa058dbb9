/// @file estimate.hpp Marginal likelihoods, implicit gradients and maximum likelihood.

#pragma once

#include "wgf/baselines.hpp"
#include "wgf/quadrature.hpp"
#include "wgf/ssm.hpp"
#include "wgf/vwf.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace wgf {

enum class FilterKind { vwf, ekf, pf, kalman };

std::string to_string(FilterKind kind);
FilterKind filter_kind_from_string(const std::string& name);

struct LikelihoodOptions {
  QuadratureRule quadrature;
  FlowConfig flow;
  int n_particles = 500;
  std::uint64_t seed = 0;
};

/// Marginal log-likelihood ℓ(θ) under the chosen filter.
double loglik(const ModelFamily& family, const Eigen::VectorXd& theta, const Eigen::MatrixXd& observations,
              FilterKind kind, const LikelihoodOptions& options);

/// Elementwise bijection between constrained θ and unconstrained u:
/// identity for real parameters, log for positive ones, atanh for (−1, 1).
class ParameterTransform {
 public:
  explicit ParameterTransform(std::vector<Constraint> constraints);

  [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& theta) const;
  [[nodiscard]] Eigen::VectorXd inverse(const Eigen::VectorXd& u) const;
  /// dθ/du (the transform is elementwise, so the Jacobian is diagonal).
  [[nodiscard]] Eigen::VectorXd inverse_derivative(const Eigen::VectorXd& u) const;

 private:
  std::vector<Constraint> constraints_;
};

// ---------------------------------------------------------------------------
// Sweeps

struct SweepResult {
  FilterKind kind = FilterKind::vwf;
  std::string parameter;
  std::vector<double> grid;
  std::vector<double> loglik;  // NaN marks a failed grid point
  /// (ℓ − min)/(max − min) over finite points; absent with < 2 distinct finite values.
  std::optional<std::vector<double>> normalized;

  [[nodiscard]] std::size_t failures() const;
  /// Grid value of the largest finite log-likelihood.
  [[nodiscard]] double argmax() const;
};

std::optional<std::vector<double>> normalize_curve(const std::vector<double>& values);

/// Evaluates ℓ along `grid` for one parameter with the others held at `theta`.
/// Every grid point of a PF curve reuses options.seed.
std::vector<SweepResult> sweep_parameter(const ModelFamily& family, const Eigen::VectorXd& theta,
                                         const std::string& parameter, const std::vector<double>& grid,
                                         const Eigen::MatrixXd& observations, const std::vector<FilterKind>& kinds,
                                         const LikelihoodOptions& options);

/// Leverage sweep; the grid must be strictly increasing inside (−1, 1).
std::vector<SweepResult> sweep_rho(const ModelFamily& family, const Eigen::VectorXd& theta,
                                   const std::vector<double>& rho_grid, const Eigen::MatrixXd& observations,
                                   const std::vector<FilterKind>& kinds, const LikelihoodOptions& options);

/// Inclusive arithmetic grid start, start + step, ... ≤ stop (+ half a step of slack).
std::vector<double> make_grid(double start, double stop, double step);

// ---------------------------------------------------------------------------
// Gradients

enum class GradientMethod { implicit, analytic, finite_difference };

std::string to_string(GradientMethod method);

struct GradientReport {
  Eigen::VectorXd gradient;
  GradientMethod method = GradientMethod::implicit;
  double loglik = 0.0;
  /// max_i |g_i − fd_i| / max(|fd_i|, 1) when a finite-difference check ran.
  std::optional<double> fd_check_error;
  /// Largest spectral radius of the Euler-map Jacobian over all steps.
  double max_spectral_radius = 0.0;
  std::vector<std::string> warnings;
};

/// Central differences of ℓ in θ with step fd_step·max(1, |θ_i|).
Eigen::VectorXd finite_difference_gradient(const ModelFamily& family, const Eigen::VectorXd& theta,
                                           const Eigen::MatrixXd& observations, FilterKind kind,
                                           const LikelihoodOptions& options, double fd_step = 1e-5);

/// ∇_θ ℓ for the uni-modal flow filter, treating every converged innovation as
/// the solution of F(m, P; m̄, P̄, θ) = 0 and differentiating through it.
GradientReport implicit_gradient(const ModelFamily& family, const Eigen::VectorXd& theta,
                                 const Eigen::MatrixXd& observations, const LikelihoodOptions& options,
                                 bool check_with_finite_differences = false);

/// Exact gradient of the (extended) Kalman log-likelihood by forward-mode differentiation.
GradientReport linearized_gradient(const ModelFamily& family, const Eigen::VectorXd& theta,
                                   const Eigen::MatrixXd& observations, FilterKind kind);

// ---------------------------------------------------------------------------
// Maximum likelihood

struct OptimizerConfig {
  int max_iters = 500;
  double grad_tol = 1e-5;  // sup-norm, unconstrained scale
  double armijo = 1e-4;
  int max_backtracks = 30;
  double max_step = 1.0;   // sup-norm cap on one step in u
  double pf_fd_step = 1e-3;
};

struct MleIterate {
  int iteration = 0;
  Eigen::VectorXd theta;
  double loglik = 0.0;
  double grad_norm = 0.0;
};

struct MleResult {
  Eigen::VectorXd theta_hat;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
  std::vector<MleIterate> trace;
};

/// Quasi-Newton (BFGS) ascent on ℓ over the unconstrained parameterization.
MleResult mle(const ModelFamily& family, const Eigen::VectorXd& theta_init, const Eigen::MatrixXd& observations,
              FilterKind kind, const LikelihoodOptions& options, const OptimizerConfig& optimizer = {});

struct TrialStatistics {
  Eigen::VectorXd mean;
  std::optional<Eigen::VectorXd> std;  // sample std (n − 1); absent for a single trial
};

TrialStatistics trial_statistics(const std::vector<Eigen::VectorXd>& estimates);

/// Componentwise median (mean of the two central values for even counts).
Eigen::VectorXd componentwise_median(const std::vector<Eigen::VectorXd>& estimates);

}  // namespace wgf
