/// @file baselines.hpp Reference filters: exact Kalman, extended Kalman, bootstrap particle filter.

#pragma once

#include "wgf/linalg.hpp"
#include "wgf/ssm.hpp"
#include "wgf/vwf.hpp"

#include <cstdint>
#include <vector>

namespace wgf {

template <class Scalar>
struct LinearizedRun {
  std::vector<GaussianBelief<Scalar>> filtered;
  std::vector<GaussianBelief<Scalar>> predicted;
  std::vector<Scalar> increments;
  Scalar loglik = Scalar(0.0);
};

/// Kalman recursion on the linearization of the observation mean at each
/// predicted mean. `jitter` < 0 disables the retry on a singular innovation covariance.
template <class Scalar>
LinearizedRun<Scalar> linearized_filter(const ModelDefinition<Scalar>& model, const Eigen::MatrixXd& observations,
                                        const EKFLinearization<Scalar>& lin, double jitter) {
  const long K = observations.rows();
  if (K < 1) throw ConfigError("filter: observations must be nonempty");
  if (observations.cols() != model.obs_dim)
    throw ConfigError("filter: observation dimension does not match the model");

  LinearizedRun<Scalar> run;
  GaussianBelief<Scalar> predictive = predict(model.prior, model.transition_at(0));
  for (long k = 1; k <= K; ++k) {
    const Vector<Scalar> y = observation_at(observations, k).template cast<Scalar>();
    const Vector<Scalar> y_hat = lin.obs_mean(predictive.mean);
    const Matrix<Scalar> H = lin.obs_mean_jacobian(predictive.mean);
    const Matrix<Scalar> R = lin.obs_noise_cov(predictive.mean);
    Matrix<Scalar> S = H * predictive.cov * H.transpose() + R;
    symmetrize(S);
    auto L = cholesky(S);
    if (!L && jitter >= 0.0) {
      for (Eigen::Index i = 0; i < S.rows(); ++i) S(i, i) += Scalar(jitter);
      L = cholesky(S);
    }
    if (!L) throw NumericalError("innovation covariance is not positive definite", k);

    const Matrix<Scalar> PHt = predictive.cov * H.transpose();
    const Matrix<Scalar> gain = cholesky_solve<Scalar>(*L, Matrix<Scalar>(PHt.transpose())).transpose();
    GaussianBelief<Scalar> posterior;
    posterior.mean = predictive.mean + gain * (y - y_hat);
    posterior.cov = predictive.cov - gain * S * gain.transpose();
    symmetrize(posterior.cov);

    const Scalar inc = gaussian_log_density<Scalar>(y, y_hat, *L);
    run.increments.push_back(inc);
    run.loglik += inc;
    run.predicted.push_back(predictive);
    run.filtered.push_back(posterior);
    predictive = predict(posterior, model.transition_at(k));
  }
  return run;
}

/// Exact filter for affine-Gaussian observation models (throws ConfigError otherwise).
FilterRun kalman_filter(const Model& model, const Eigen::MatrixXd& observations);

/// Extended Kalman filter with the observation noise evaluated at the predicted mean.
FilterRun ekf_filter(const Model& model, const Eigen::MatrixXd& observations,
                     const EKFLinearization<double>& linearization, double jitter = 1e-9);

/// Uses the model's own linearization.
FilterRun ekf_filter(const Model& model, const Eigen::MatrixXd& observations, double jitter = 1e-9);

struct ParticleEnsemble {
  Eigen::VectorXd particles;
  Eigen::VectorXd log_weights;
};

/// Draws `uniforms.size()` particles from the piecewise-linear smoothed CDF of
/// the weighted ensemble. `uniforms` must be sorted ascending in [0, 1).
Eigen::VectorXd continuous_resample(const Eigen::VectorXd& particles, const Eigen::VectorXd& weights,
                                    const Eigen::VectorXd& uniforms);

/// Bootstrap filter with continuous resampling; filtered beliefs are the
/// weighted particle moments. Deterministic in `seed`, and the random inputs
/// do not depend on the model parameters.
FilterRun bootstrap_pf(const ScalarParticleModel& model, const Eigen::MatrixXd& observations,
                       int n_particles, std::uint64_t seed);

FilterRun bootstrap_pf(const SVParameters& params, const Eigen::MatrixXd& observations, int n_particles,
                       std::uint64_t seed);

}  // namespace wgf
