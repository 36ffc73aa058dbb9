#include "wgf/baselines.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>

using namespace wgf;

namespace {

Model random_walk(double r = 1.0) {
  const Mat I = Mat::Identity(1, 1);
  return make_lgssm_model(I, Vec::Zero(1), I, I, Vec::Zero(1), Mat::Constant(1, 1, r), Belief{Vec::Zero(1), I});
}

Model scalar_lgssm(double a, double q, double r) {
  ScalarLgssm s;
  s.a = a;
  s.q = q;
  s.r = r;
  Eigen::VectorXd theta(1);
  theta << a;
  return scalar_lgssm_family(s, {"a"}).bind(theta);
}

}  // namespace

TEST(Kalman, HandComputedTwoSteps) {
  Eigen::MatrixXd ys(2, 1);
  ys << 1.5, -0.5;
  const auto run = kalman_filter(random_walk(), ys);
  // Step 1: P̄ = 2, S = 3, K = 2/3.
  EXPECT_NEAR(run.filtered[0].mean(0), 1.0, 1e-15);
  EXPECT_NEAR(run.filtered[0].cov(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(run.increments[0], -0.5 * (std::log(2 * M_PI * 3) + 1.5 * 1.5 / 3), 1e-14);
  // Step 2: P̄ = 5/3, S = 8/3, K = 5/8.
  EXPECT_NEAR(run.filtered[1].mean(0), 1.0 + 0.625 * (-1.5), 1e-15);
  EXPECT_NEAR(run.filtered[1].cov(0, 0), 0.625, 1e-15);
  EXPECT_NEAR(run.increments[1], -0.5 * (std::log(2 * M_PI * 8.0 / 3.0) + 1.5 * 1.5 * 3.0 / 8.0), 1e-14);
  EXPECT_DOUBLE_EQ(run.loglik, run.increments[0] + run.increments[1]);
}

TEST(Kalman, TinyNoiseTracksObservation) {
  Eigen::MatrixXd ys(3, 1);
  ys << 0.4, 2.0, -1.3;
  const auto run = kalman_filter(random_walk(1e-10), ys);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(run.filtered[k].mean(0), ys(k, 0), 1e-9);
}

TEST(Kalman, MatchesOracleAndSumsIncrements) {
  std::mt19937_64 rng(3);
  const auto sys = oracle::random_system(3, 2, rng);
  const Model m = oracle::to_model(sys);
  const auto trace = simulate(m, 100, 2);
  const auto run = kalman_filter(m, trace.observations);
  const auto ref = oracle::kalman(sys, trace.observations);
  double sum = 0.0;
  for (long k = 0; k < 100; ++k) {
    EXPECT_LT((run.filtered[k].mean - ref.means[k]).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((run.filtered[k].cov - ref.covs[k]).cwiseAbs().maxCoeff(), 1e-10);
    sum += run.increments[k];
  }
  EXPECT_NEAR(run.loglik, ref.loglik, 1e-9);
  EXPECT_NEAR(run.loglik, sum, 1e-12 * 100);
}

TEST(Kalman, RejectsNonAffineModel) {
  EXPECT_THROW(kalman_filter(make_bimodal_model(1.0), Eigen::MatrixXd::Ones(3, 1)), ConfigError);
}

TEST(Ekf, CoincidesWithKalmanOnAffineModels) {
  std::mt19937_64 rng(4);
  const Model m = oracle::to_model(oracle::random_system(2, 2, rng));
  const auto trace = simulate(m, 100, 9);
  const auto kf = kalman_filter(m, trace.observations);
  const auto ekf = ekf_filter(m, trace.observations);
  for (long k = 0; k < 100; ++k) {
    EXPECT_LT((kf.filtered[k].mean - ekf.filtered[k].mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((kf.filtered[k].cov - ekf.filtered[k].cov).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_NEAR(kf.loglik, ekf.loglik, 1e-12 * std::abs(kf.loglik));
}

TEST(Ekf, ZeroLeverageIgnoresObservations) {
  const Model m = make_sv_model(SVParameters(0.5, 0.975, std::sqrt(0.02), 0.0));
  const auto trace = simulate(m, 100, 3);
  const auto run = ekf_filter(m, trace.observations);
  for (long k = 0; k < 100; ++k) {
    EXPECT_EQ(run.filtered[k].mean, run.predicted[k].mean);
    EXPECT_EQ(run.filtered[k].cov, run.predicted[k].cov);
  }
}

TEST(Ekf, SvJacobianMatchesDifferences) {
  const Model m = make_sv_model(SVParameters(0.5, 0.975, std::sqrt(0.02), -0.8));
  const auto& lin = *m.linearization;
  Vec x(2);
  x << 0.4, -0.9;
  const Mat J = lin.obs_mean_jacobian(x);
  for (int i = 0; i < 2; ++i) {
    Vec e = Vec::Zero(2);
    e(i) = 1e-6;
    const double fd = (lin.obs_mean(x + e)(0) - lin.obs_mean(x - e)(0)) / 2e-6;
    EXPECT_LT(std::abs(J(0, i) - fd) / std::max(1.0, std::abs(fd)), 1e-4);
  }
  EXPECT_NEAR(lin.obs_noise_cov(x)(0, 0), std::exp(0.4) * (1 - 0.64), 1e-14);
}

TEST(ContinuousResample, PiecewiseLinearInverse) {
  Eigen::VectorXd x(2), w(2), u(5);
  x << 1.0, 0.0;
  w << 0.5, 0.5;
  u << 0.1, 0.25, 0.5, 0.7, 0.9;
  // Atom of mass ¼ at 0, uniform mass ½ on [0, 1], atom of mass ¼ at 1.
  const auto out = continuous_resample(x, w, u);
  EXPECT_DOUBLE_EQ(out(0), 0.0);
  EXPECT_NEAR(out(1), 0.0, 1e-15);
  EXPECT_NEAR(out(2), 0.5, 1e-15);
  EXPECT_NEAR(out(3), 0.9, 1e-15);
  EXPECT_DOUBLE_EQ(out(4), 1.0);
}

TEST(ContinuousResample, SortedAndInsideRange) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  Eigen::VectorXd x(200), w(200), u(200);
  for (int i = 0; i < 200; ++i) {
    x(i) = n01(rng);
    w(i) = u01(rng);
    u(i) = (i + u01(rng)) / 200.0;
  }
  w /= w.sum();
  const auto out = continuous_resample(x, w, u);
  for (int i = 1; i < 200; ++i) EXPECT_LE(out(i - 1), out(i));
  EXPECT_GE(out.minCoeff(), x.minCoeff());
  EXPECT_LE(out.maxCoeff(), x.maxCoeff());
}

TEST(ParticleFilter, BitDeterministic) {
  const SVParameters p(0.5, 0.975, std::sqrt(0.02), -0.8);
  const auto trace = simulate(make_sv_model(p), 100, 1);
  const auto a = bootstrap_pf(p, trace.observations, 300, 7);
  const auto b = bootstrap_pf(p, trace.observations, 300, 7);
  const auto c = bootstrap_pf(p, trace.observations, 300, 8);
  EXPECT_EQ(std::memcmp(&a.loglik, &b.loglik, sizeof(double)), 0);
  for (long k = 0; k < 100; ++k) EXPECT_EQ(a.filtered[k].mean, b.filtered[k].mean);
  EXPECT_NE(a.loglik, c.loglik);
}

TEST(ParticleFilter, Preconditions) {
  const SVParameters p;
  EXPECT_THROW(bootstrap_pf(p, Eigen::MatrixXd::Ones(5, 1), 1, 0), ConfigError);
  EXPECT_THROW(bootstrap_pf(p, Eigen::MatrixXd(0, 1), 100, 0), ConfigError);
  EXPECT_THROW(bootstrap_pf(p, Eigen::MatrixXd::Ones(5, 2), 100, 0), ConfigError);
}

TEST(ParticleFilter, UnbiasednessProxy) {
  const Model m = scalar_lgssm(0.8, 0.5, 1.0);
  const auto trace = simulate(m, 20, 5);
  const double exact = kalman_filter(m, trace.observations).loglik;
  double acc = 0.0;
  for (int s = 0; s < 50; ++s) acc += std::exp(bootstrap_pf(*m.particle_model, trace.observations, 500, 100 + s).loglik - exact);
  const double ratio = acc / 50.0;
  EXPECT_GE(ratio, 0.9);
  EXPECT_LE(ratio, 1.1);
}

TEST(ParticleFilter, LoglikContinuousInLeverage) {
  const SVParameters truth(0.5, 0.975, std::sqrt(0.02), -0.8);
  const auto trace = simulate(make_sv_model(truth), 300, 2);
  auto ll = [&](double rho) {
    SVParameters p = truth;
    p.rho = rho;
    return bootstrap_pf(p, trace.observations, 500, 42).loglik;
  };
  const double base = ll(-0.7);
  double previous = std::numeric_limits<double>::infinity();
  for (double h : {1e-2, 1e-3, 1e-4}) {
    const double diff = std::abs(ll(-0.7 + h) - base);
    EXPECT_LT(diff, previous) << h;
    previous = diff;
  }
}
