#include "wgf/vwf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wgf {

double belief_change(const Belief& a, const Belief& b) {
  return (a.mean - b.mean).cwiseAbs().maxCoeff() + (a.cov - b.cov).cwiseAbs().maxCoeff();
}

Belief fixed_point_step(const Belief& belief, const Potential<double>& potential,
                        const UnitNodeSet& rule, const FlowConfig& config) {
  const auto rhs = flow_rhs(belief, potential, rule, config.form);
  Belief out;
  out.mean = belief.mean + config.step_size * rhs.mean;
  double h = config.step_size;
  for (int halving = 0; halving <= 30; ++halving) {
    out.cov = belief.cov + h * rhs.cov;
    symmetrize(out.cov);
    if (min_eigenvalue(out.cov) >= config.jitter) return out;
    h *= 0.5;
  }
  throw StepFailure("covariance step halving exhausted");
}

InnovationResult innovate(const Belief& predictive, const Vec& y, const Model& model,
                          const UnitNodeSet& rule, const FlowConfig& config,
                          const std::optional<Belief>& warm_start) {
  if (!(config.step_size > 0.0) || !(config.tol > 0.0) || config.max_iters < 1)
    throw ConfigError("flow config requires step_size > 0, tol > 0, max_iters >= 1");

  const auto potential = make_potential(model, y, predictive, config.jitter);
  Belief start = warm_start ? *warm_start : predictive;
  if (min_eigenvalue(start.cov) < config.jitter)
    start.cov += Mat::Identity(start.dim(), start.dim()) * config.jitter;

  FlowConfig cfg = config;
  InnovationResult result;
  int reductions = 0;
  for (; reductions <= config.max_step_reductions; ++reductions) {
    Belief current = start;
    DivergenceMonitor monitor;
    bool diverged = false;
    for (int it = 0; it < cfg.max_iters; ++it) {
      Belief next;
      try {
        next = fixed_point_step(current, potential, rule, cfg);
      } catch (const NumericalError&) {
        diverged = true;
        break;
      }
      const double change = belief_change(next, current);
      ++result.iterations;
      if (!std::isfinite(change)) {
        diverged = true;
        break;
      }
      const auto verdict = monitor.observe(change, belief_delta(next, current));
      current = std::move(next);
      if (change < cfg.tol) {
        result.belief = std::move(current);
        result.converged = true;
        result.step_size = cfg.step_size;
        return result;
      }
      if (verdict == DivergenceMonitor::Verdict::diverging) {
        diverged = true;
        break;
      }
      // The fixed point does not depend on h, so keep the iterate.
      if (verdict == DivergenceMonitor::Verdict::oscillating && reductions < config.max_step_reductions) {
        ++reductions;
        cfg.step_size *= 0.5;
        monitor.reset();
      }
    }
    if (!diverged) {
      result.belief = std::move(current);
      result.converged = false;
      result.step_size = cfg.step_size;
      return result;
    }
    cfg.step_size *= 0.5;
  }
  throw FlowBlowUp("innovation diverged after step-size reductions", start);
}

DivergenceMonitor::Verdict DivergenceMonitor::observe(double change, const Eigen::VectorXd& delta) {
  growth_ = change > previous_ ? growth_ + 1 : 0;
  stall_ = change < best_ ? 0 : stall_ + 1;
  best_ = std::min(best_, change);
  previous_ = change;
  if (last_delta_.size() == delta.size() && delta.dot(last_delta_) < 0.0) ++reversals_;
  last_delta_ = delta;
  if (growth_ >= kGrowthLimit || stall_ >= kStallLimit) return Verdict::diverging;
  if (window_length_ == 0) window_start_ = change;
  if (++window_length_ < kWindow) return Verdict::proceed;
  const bool oscillating = 2 * reversals_ > kWindow && change > 0.1 * window_start_;
  window_length_ = 0;
  reversals_ = 0;
  return oscillating ? Verdict::oscillating : Verdict::proceed;
}

Eigen::VectorXd belief_delta(const Belief& a, const Belief& b) {
  const Eigen::Index d = a.dim();
  Eigen::VectorXd out(d + d * d);
  out.head(d) = a.mean - b.mean;
  out.tail(d * d) = (a.cov - b.cov).reshaped();
  return out;
}

long FilterRun::converged_steps() const {
  return static_cast<long>(std::count(converged.begin(), converged.end(), true));
}

FilterRun filter(const Model& model, const Eigen::MatrixXd& observations, const UnitNodeSet& rule,
                 const FlowConfig& config) {
  const long K = observations.rows();
  if (K < 1) throw ConfigError("filter: observations must be nonempty");
  if (observations.cols() != model.obs_dim)
    throw ConfigError("filter: observation dimension does not match the model");
  if (rule.dim() != model.dim) throw ConfigError("filter: quadrature dimension does not match the model");

  FilterRun run;
  run.filtered.reserve(K);
  run.predicted.reserve(K);
  Belief predictive = predict(model.prior, model.transition_at(0));
  for (long k = 1; k <= K; ++k) {
    const Vec y = observation_at(observations, k);
    try {
      auto innovation = innovate(predictive, y, model, rule, config);
      const double inc = loglik_increment(predictive, innovation.belief, y, model, rule, config.jitter);
      run.increments.push_back(inc);
      run.loglik += inc;
      run.iters_per_step.push_back(innovation.iterations);
      run.converged.push_back(innovation.converged);
      run.step_sizes.push_back(innovation.step_size);
      run.predicted.push_back(predictive);
      run.filtered.push_back(std::move(innovation.belief));
    } catch (const FlowBlowUp& e) {
      throw FlowBlowUp(e.what(), e.belief(), k);
    } catch (const NumericalError& e) {
      if (e.step() >= 0) throw;
      throw NumericalError(e.what(), k);
    }
    predictive = predict(run.filtered.back(), model.transition_at(k));
  }
  return run;
}

}  // namespace wgf
