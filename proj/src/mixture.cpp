#include "wgf/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace wgf {

void validate(const MixtureBelief& belief) {
  if (belief.components.empty()) throw ConfigError("mixture must have at least one component");
  const auto d = belief.components.front().dim();
  for (const auto& c : belief.components)
    if (c.dim() != d || c.cov.rows() != d || c.cov.cols() != d)
      throw ConfigError("mixture components must share one dimension");
}

MixtureDensity::MixtureDensity(const MixtureBelief& belief, double jitter) {
  validate(belief);
  log_weight_ = -std::log(static_cast<double>(belief.size()));
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (const auto& c : belief.components) {
    Component comp;
    comp.mean = c.mean;
    comp.chol = jittered_factor(c.cov, jitter);
    comp.precision = cholesky_inverse<double>(comp.chol);
    comp.log_norm = -0.5 * (static_cast<double>(c.dim()) * log2pi + log_det_from_cholesky(comp.chol));
    components_.push_back(std::move(comp));
  }
}

double MixtureDensity::evaluate(const Vec& x, Vec* grad, Mat* hess) const {
  const auto n = components_.size();
  const auto d = x.size();
  // log terms and per-component gradients g_i = −P_i⁻¹(x − m_i)
  std::vector<double> lt(n);
  std::vector<Vec> gs(n);
  double max_term = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = components_[i];
    const Vec r = x - c.mean;
    gs[i] = -(c.precision * r);
    lt[i] = log_weight_ + c.log_norm - 0.5 * r.dot(c.precision * r);
    max_term = std::max(max_term, lt[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(lt[i] - max_term);
  const double log_q = max_term + std::log(total);
  if (!grad && !hess) return log_q;

  Vec mean_grad = Vec::Zero(d);
  Mat second = Mat::Zero(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double resp = std::exp(lt[i] - log_q);
    mean_grad += resp * gs[i];
    if (hess) second += resp * (gs[i] * gs[i].transpose() - components_[i].precision);
  }
  if (grad) *grad = mean_grad;
  if (hess) *hess = second - mean_grad * mean_grad.transpose();
  return log_q;
}

double MixtureDensity::log_q(const Vec& x) const { return evaluate(x, nullptr, nullptr); }

Vec MixtureDensity::grad_log_q(const Vec& x) const {
  Vec g;
  evaluate(x, &g, nullptr);
  return g;
}

Mat MixtureDensity::hess_log_q(const Vec& x) const {
  Mat H;
  evaluate(x, nullptr, &H);
  return H;
}

Potential<double> make_mixture_potential(const Model& model, const Vec& y,
                                         const MixtureBelief& predictive, double jitter) {
  const MixtureDensity prior(predictive, jitter);
  const auto obs = model.observation;
  Potential<double> V;
  V.value = [=](const Vec& x) { return -obs.log_density(y, x) - prior.log_q(x); };
  V.grad = [=](const Vec& x) -> Vec { return -prior.grad_log_q(x) - obs.grad_x_log_density(y, x); };
  V.hess = [=](const Vec& x) -> Mat { return -prior.hess_log_q(x) - obs.hess_x_log_density(y, x); };
  return V;
}

MixtureBelief mixture_predict(const MixtureBelief& belief, const AffineGaussianTransition<double>& transition) {
  MixtureBelief out;
  out.components.reserve(belief.size());
  for (const auto& c : belief.components) out.components.push_back(predict(c, transition));
  return out;
}

std::vector<FlowRhs<double>> mixture_flow_rhs(const MixtureBelief& belief, const Potential<double>& potential,
                                              const UnitNodeSet& rule, double jitter) {
  validate(belief);
  const MixtureDensity q(belief, jitter);
  const auto d = belief.dim();
  std::vector<FlowRhs<double>> out;
  out.reserve(belief.size());
  Vec x(d), grad_q(d);
  Mat hess_q(d, d);
  for (std::size_t i = 0; i < belief.size(); ++i) {
    const auto& comp = belief.components[i];
    const auto L = cholesky(comp.cov);
    if (!L)
      throw FlowBlowUp("mixture component covariance not positive definite", comp, -1, static_cast<int>(i));
    Vec mean_r = Vec::Zero(d);
    Mat mean_R = Mat::Zero(d, d);
    for (Eigen::Index j = 0; j < rule.size(); ++j) {
      const double w = rule.weights(j);
      x = comp.mean + *L * rule.nodes.col(j);
      q.evaluate(x, &grad_q, &hess_q);
      mean_r += w * (grad_q + potential.grad(x));
      mean_R += w * (hess_q + potential.hess(x));
    }
    FlowRhs<double> rhs;
    rhs.mean = -mean_r;
    rhs.cov = -(mean_R * comp.cov) - comp.cov * mean_R;
    symmetrize(rhs.cov);
    if (!rhs.mean.allFinite() || !rhs.cov.allFinite())
      throw FlowBlowUp("mixture flow: non-finite expectation", comp, -1, static_cast<int>(i));
    out.push_back(std::move(rhs));
  }
  return out;
}

std::vector<CollapseEvent> detect_collapse(const MixtureBelief& belief, const MixtureConfig& config) {
  std::vector<CollapseEvent> events;
  for (std::size_t i = 0; i < belief.size(); ++i)
    for (std::size_t j = i + 1; j < belief.size(); ++j) {
      const auto& a = belief.components[i];
      const auto& b = belief.components[j];
      const double distance = (a.mean - b.mean).norm();
      const double scale = std::sqrt(0.5 * (a.cov.trace() + b.cov.trace()));
      if (distance < config.merge_factor * scale)
        events.push_back({0, static_cast<int>(i), static_cast<int>(j), distance});
    }
  return events;
}

namespace {

double mixture_change(const MixtureBelief& a, const MixtureBelief& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += belief_change(a.components[i], b.components[i]);
  return s;
}

Eigen::VectorXd mixture_delta(const MixtureBelief& a, const MixtureBelief& b) {
  Eigen::VectorXd out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Eigen::VectorXd part = belief_delta(a.components[i], b.components[i]);
    out.conservativeResize(out.size() + part.size());
    out.tail(part.size()) = part;
  }
  return out;
}

MixtureBelief mixture_step(const MixtureBelief& belief, const Potential<double>& potential,
                           const UnitNodeSet& rule, const FlowConfig& config) {
  const auto rhs = mixture_flow_rhs(belief, potential, rule, config.jitter);
  MixtureBelief out = belief;
  for (std::size_t i = 0; i < belief.size(); ++i) {
    const auto& comp = belief.components[i];
    auto& next = out.components[i];
    next.mean = comp.mean + config.step_size * rhs[i].mean;
    double h = config.step_size;
    bool accepted = false;
    for (int halving = 0; halving <= 30 && !accepted; ++halving) {
      next.cov = comp.cov + h * rhs[i].cov;
      symmetrize(next.cov);
      accepted = min_eigenvalue(next.cov) >= config.jitter;
      h *= 0.5;
    }
    if (!accepted) throw StepFailure("mixture covariance step halving exhausted");
  }
  return out;
}

}  // namespace

MixtureInnovation mixture_innovate(const MixtureBelief& predictive, const Vec& y, const Model& model,
                                   const UnitNodeSet& rule, const FlowConfig& config,
                                   const MixtureConfig& mixture_config) {
  validate(predictive);
  if (!(config.step_size > 0.0) || !(config.tol > 0.0) || config.max_iters < 1)
    throw ConfigError("flow config requires step_size > 0, tol > 0, max_iters >= 1");
  const auto potential = make_mixture_potential(model, y, predictive, config.jitter);
  MixtureBelief start = predictive;
  for (auto& c : start.components)
    if (min_eigenvalue(c.cov) < config.jitter) c.cov += Mat::Identity(c.dim(), c.dim()) * config.jitter;

  FlowConfig cfg = config;
  MixtureInnovation result;
  auto finish = [&](MixtureBelief belief, bool converged) {
    result.belief = std::move(belief);
    result.converged = converged;
    result.step_size = cfg.step_size;
    result.collapses = detect_collapse(result.belief, mixture_config);
    return result;
  };
  int reductions = 0;
  for (; reductions <= config.max_step_reductions; ++reductions) {
    MixtureBelief current = start;
    DivergenceMonitor monitor;
    bool diverged = false;
    for (int it = 0; it < cfg.max_iters; ++it) {
      MixtureBelief next;
      try {
        next = mixture_step(current, potential, rule, cfg);
      } catch (const NumericalError&) {
        diverged = true;
        break;
      }
      const double change = mixture_change(next, current);
      ++result.iterations;
      if (!std::isfinite(change)) {
        diverged = true;
        break;
      }
      const auto verdict = monitor.observe(change, mixture_delta(next, current));
      current = std::move(next);
      if (change < cfg.tol) return finish(std::move(current), true);
      if (verdict == DivergenceMonitor::Verdict::diverging) {
        diverged = true;
        break;
      }
      if (verdict == DivergenceMonitor::Verdict::oscillating && reductions < config.max_step_reductions) {
        ++reductions;
        cfg.step_size *= 0.5;
        monitor.reset();
      }
    }
    if (!diverged) return finish(std::move(current), false);
    cfg.step_size *= 0.5;
  }
  throw FlowBlowUp("mixture innovation diverged after step-size reductions", start.components.front());
}

double mixture_loglik_increment(const MixtureBelief& predictive, const MixtureBelief& base, const Vec& y,
                                const Model& model, const UnitNodeSet& rule, double jitter) {
  validate(predictive);
  validate(base);
  const MixtureDensity p_bar(predictive, jitter);
  const MixtureDensity q(base, jitter);
  std::vector<double> terms;
  terms.reserve(base.size() * static_cast<std::size_t>(rule.size()));
  const double log_w = std::log(base.weight());
  for (const auto& c : base.components) {
    const Mat L = jittered_factor(c.cov, jitter);
    for (Eigen::Index j = 0; j < rule.size(); ++j) {
      const Vec x = c.mean + L * rule.nodes.col(j);
      const double lp = model.observation.log_density(y, x);
      if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
        throw EvaluationFailure("observation log-density is not a number", x);
      terms.push_back(log_w + std::log(rule.weights(j)) + lp + p_bar.log_q(x) - q.log_q(x));
    }
  }
  return log_sum_exp(terms);
}

double mixture_loglik_increment(const MixtureBelief& predictive, const Vec& y, const Model& model,
                                const UnitNodeSet& rule, double jitter) {
  return mixture_loglik_increment(predictive, predictive, y, model, rule, jitter);
}

long MixtureFilterRun::converged_steps() const {
  return static_cast<long>(std::count(converged.begin(), converged.end(), true));
}

MixtureFilterRun mixture_filter(const Model& model, const Eigen::MatrixXd& observations, int n_components,
                                const MixtureBelief& init, const UnitNodeSet& rule, const FlowConfig& config,
                                const MixtureConfig& mixture_config) {
  validate(init);
  const long K = observations.rows();
  if (K < 1) throw ConfigError("mixture_filter: observations must be nonempty");
  if (static_cast<int>(init.size()) != n_components)
    throw ConfigError("mixture_filter: init has " + std::to_string(init.size()) + " components, expected " +
                      std::to_string(n_components));
  if (init.dim() != model.dim || rule.dim() != model.dim)
    throw ConfigError("mixture_filter: dimension mismatch");
  if (observations.cols() != model.obs_dim)
    throw ConfigError("mixture_filter: observation dimension does not match the model");

  MixtureFilterRun run;
  MixtureBelief predictive = mixture_predict(init, model.transition_at(0));
  for (long k = 1; k <= K; ++k) {
    const Vec y = observation_at(observations, k);
    try {
      auto innovation = mixture_innovate(predictive, y, model, rule, config, mixture_config);
      const double inc = mixture_loglik_increment(predictive, innovation.belief, y, model, rule, config.jitter);
      run.increments.push_back(inc);
      run.loglik += inc;
      run.iters_per_step.push_back(innovation.iterations);
      run.converged.push_back(innovation.converged);
      for (auto e : innovation.collapses) {
        e.step = k;
        run.collapses.push_back(e);
      }
      run.predicted.push_back(predictive);
      run.filtered.push_back(std::move(innovation.belief));
    } catch (const FlowBlowUp& e) {
      throw FlowBlowUp(e.what(), e.belief(), k, e.component());
    } catch (const NumericalError& e) {
      if (e.step() >= 0) throw;
      throw NumericalError(e.what(), k);
    }
    predictive = mixture_predict(run.filtered.back(), model.transition_at(k));
  }
  return run;
}

MixtureBelief mirrored_init(double delta_sq) {
  if (!(delta_sq > 0.0)) throw ConfigError("mirrored_init: delta_sq must be > 0");
  const double delta = std::sqrt(delta_sq);
  MixtureBelief m;
  m.components.push_back({Vec::Constant(1, delta), Mat::Constant(1, 1, delta_sq)});
  m.components.push_back({Vec::Constant(1, -delta), Mat::Constant(1, 1, delta_sq)});
  return m;
}

MixtureBelief replicate(const Belief& belief, int n_components) {
  if (n_components < 1) throw ConfigError("replicate: n_components must be >= 1");
  MixtureBelief m;
  m.components.assign(static_cast<std::size_t>(n_components), belief);
  return m;
}

}  // namespace wgf
