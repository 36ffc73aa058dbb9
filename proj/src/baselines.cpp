#include "wgf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace wgf {

namespace {

FilterRun to_filter_run(LinearizedRun<double>&& lin) {
  FilterRun run;
  run.filtered = std::move(lin.filtered);
  run.predicted = std::move(lin.predicted);
  run.increments = std::move(lin.increments);
  run.loglik = lin.loglik;
  const auto K = run.filtered.size();
  run.iters_per_step.assign(K, 0);
  run.converged.assign(K, true);
  run.step_sizes.assign(K, 0.0);
  return run;
}

EKFLinearization<double> affine_linearization(const AffineObservation<double>& obs) {
  EKFLinearization<double> lin;
  lin.obs_mean = [obs](const Vec& x) -> Vec { return obs.H * x + obs.c; };
  lin.obs_mean_jacobian = [obs](const Vec&) { return obs.H; };
  lin.obs_noise_cov = [obs](const Vec&) { return obs.R; };
  return lin;
}

}  // namespace

FilterRun kalman_filter(const Model& model, const Eigen::MatrixXd& observations) {
  if (!model.affine_observation)
    throw ConfigError("kalman_filter requires an affine Gaussian observation model");
  return to_filter_run(linearized_filter(model, observations, affine_linearization(*model.affine_observation), -1.0));
}

FilterRun ekf_filter(const Model& model, const Eigen::MatrixXd& observations,
                     const EKFLinearization<double>& linearization, double jitter) {
  return to_filter_run(linearized_filter(model, observations, linearization, jitter));
}

FilterRun ekf_filter(const Model& model, const Eigen::MatrixXd& observations, double jitter) {
  if (!model.linearization) throw ConfigError("model '" + model.family + "' has no EKF linearization");
  return ekf_filter(model, observations, *model.linearization, jitter);
}

Eigen::VectorXd continuous_resample(const Eigen::VectorXd& particles, const Eigen::VectorXd& weights,
                                    const Eigen::VectorXd& uniforms) {
  const Eigen::Index n = particles.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return particles(a) < particles(b); });

  // Region 0 (mass π₁/2) and region n (mass π_n/2) are atoms at the extreme
  // particles; region r in between spreads (π_r + π_{r+1})/2 uniformly on [x_r, x_{r+1}].
  auto x = [&](Eigen::Index r) { return particles(order[static_cast<std::size_t>(r)]); };
  auto pi = [&](Eigen::Index r) { return weights(order[static_cast<std::size_t>(r)]); };

  Eigen::VectorXd out(uniforms.size());
  Eigen::Index region = 0;
  double lower = 0.0;
  double mass = 0.5 * pi(0);
  for (Eigen::Index j = 0; j < uniforms.size(); ++j) {
    const double u = uniforms(j);
    while (region < n && u >= lower + mass) {
      lower += mass;
      ++region;
      mass = region < n ? 0.5 * (pi(region - 1) + pi(region)) : 0.5 * pi(n - 1);
    }
    if (region == 0) {
      out(j) = x(0);
    } else if (region >= n) {
      out(j) = x(n - 1);
    } else {
      const double t = mass > 0.0 ? std::clamp((u - lower) / mass, 0.0, 1.0) : 0.0;
      out(j) = x(region - 1) + t * (x(region) - x(region - 1));
    }
  }
  return out;
}

FilterRun bootstrap_pf(const ScalarParticleModel& model, const Eigen::MatrixXd& observations,
                       int n_particles, std::uint64_t seed) {
  if (n_particles < 2) throw ConfigError("bootstrap_pf: n_particles must be >= 2");
  if (observations.cols() != 1) throw ConfigError("bootstrap_pf: scalar observations required");
  const long K = observations.rows();
  if (K < 1) throw ConfigError("bootstrap_pf: observations must be nonempty");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const Eigen::Index n = n_particles;
  Eigen::VectorXd particles(n), log_w(n), weights(n), uniforms(n);
  for (Eigen::Index i = 0; i < n; ++i) particles(i) = model.initial(normal(rng));

  FilterRun run;
  for (long k = 1; k <= K; ++k) {
    const double y = observations(k - 1, 0);
    for (Eigen::Index i = 0; i < n; ++i) log_w(i) = model.log_obs(y, particles(i));
    const double max_lw = log_w.maxCoeff();
    if (!std::isfinite(max_lw)) throw NumericalError("particle degeneracy: no finite weight", k);
    weights = (log_w.array() - max_lw).exp();
    const double total = weights.sum();
    const double inc = max_lw + std::log(total / static_cast<double>(n));
    weights /= total;

    Belief predicted{Vec::Constant(1, particles.mean()), Mat::Zero(1, 1)};
    predicted.cov(0, 0) = (particles.array() - predicted.mean(0)).square().mean();
    Belief filtered{Vec::Constant(1, weights.dot(particles)), Mat::Zero(1, 1)};
    filtered.cov(0, 0) = weights.dot((particles.array() - filtered.mean(0)).square().matrix());

    run.increments.push_back(inc);
    run.loglik += inc;
    run.predicted.push_back(predicted);
    run.filtered.push_back(filtered);
    run.iters_per_step.push_back(0);
    run.converged.push_back(true);
    run.step_sizes.push_back(0.0);

    if (k == K) break;
    for (Eigen::Index i = 0; i < n; ++i) uniforms(i) = (static_cast<double>(i) + uniform(rng)) / static_cast<double>(n);
    const Eigen::VectorXd resampled = continuous_resample(particles, weights, uniforms);
    for (Eigen::Index i = 0; i < n; ++i) particles(i) = model.transition(resampled(i), y, normal(rng));
  }
  return run;
}

FilterRun bootstrap_pf(const SVParameters& params, const Eigen::MatrixXd& observations, int n_particles,
                       std::uint64_t seed) {
  return bootstrap_pf(sv_particle_model(params), observations, n_particles, seed);
}

}  // namespace wgf
