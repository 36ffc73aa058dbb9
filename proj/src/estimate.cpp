#include "wgf/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wgf {

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::vwf: return "vwf";
    case FilterKind::ekf: return "ekf";
    case FilterKind::pf: return "pf";
    case FilterKind::kalman: return "kalman";
  }
  return "unknown";
}

FilterKind filter_kind_from_string(const std::string& name) {
  if (name == "vwf") return FilterKind::vwf;
  if (name == "ekf") return FilterKind::ekf;
  if (name == "pf") return FilterKind::pf;
  if (name == "kalman") return FilterKind::kalman;
  throw ConfigError("unknown filter kind '" + name + "'");
}

std::string to_string(GradientMethod method) {
  switch (method) {
    case GradientMethod::implicit: return "implicit";
    case GradientMethod::analytic: return "analytic";
    case GradientMethod::finite_difference: return "finite_difference";
  }
  return "unknown";
}

double loglik(const ModelFamily& family, const Eigen::VectorXd& theta, const Eigen::MatrixXd& observations,
              FilterKind kind, const LikelihoodOptions& options) {
  if (observations.rows() < 1) throw ConfigError("loglik: observations must be nonempty");
  const Model model = family.bind(theta);
  switch (kind) {
    case FilterKind::vwf: {
      const auto rule = build_rule(options.quadrature, model.dim);
      return filter(model, observations, rule, options.flow).loglik;
    }
    case FilterKind::ekf: return ekf_filter(model, observations, options.flow.jitter).loglik;
    case FilterKind::kalman: return kalman_filter(model, observations).loglik;
    case FilterKind::pf:
      if (!model.particle_model) throw ConfigError("model '" + model.family + "' has no particle form");
      return bootstrap_pf(*model.particle_model, observations, options.n_particles, options.seed).loglik;
  }
  throw ConfigError("unknown filter kind");
}

// ---------------------------------------------------------------------------

ParameterTransform::ParameterTransform(std::vector<Constraint> constraints) : constraints_(std::move(constraints)) {}

Eigen::VectorXd ParameterTransform::forward(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != constraints_.size())
    throw ConfigError("parameter transform: size mismatch");
  Eigen::VectorXd u(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    switch (constraints_[static_cast<std::size_t>(i)]) {
      case Constraint::real: u(i) = theta(i); break;
      case Constraint::positive:
        if (!(theta(i) > 0.0)) throw ConfigError("parameter transform: value must be > 0");
        u(i) = std::log(theta(i));
        break;
      case Constraint::unit_interval:
        if (!(std::abs(theta(i)) < 1.0)) throw ConfigError("parameter transform: value must lie in (-1, 1)");
        u(i) = std::atanh(theta(i));
        break;
    }
  }
  return u;
}

Eigen::VectorXd ParameterTransform::inverse(const Eigen::VectorXd& u) const {
  if (static_cast<std::size_t>(u.size()) != constraints_.size())
    throw ConfigError("parameter transform: size mismatch");
  Eigen::VectorXd theta(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    switch (constraints_[static_cast<std::size_t>(i)]) {
      case Constraint::real: theta(i) = u(i); break;
      case Constraint::positive: theta(i) = std::exp(u(i)); break;
      case Constraint::unit_interval: theta(i) = std::tanh(u(i)); break;
    }
  }
  return theta;
}

Eigen::VectorXd ParameterTransform::inverse_derivative(const Eigen::VectorXd& u) const {
  Eigen::VectorXd j(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    switch (constraints_[static_cast<std::size_t>(i)]) {
      case Constraint::real: j(i) = 1.0; break;
      case Constraint::positive: j(i) = std::exp(u(i)); break;
      case Constraint::unit_interval: {
        const double t = std::tanh(u(i));
        j(i) = 1.0 - t * t;
        break;
      }
    }
  }
  return j;
}

// ---------------------------------------------------------------------------

std::size_t SweepResult::failures() const {
  return static_cast<std::size_t>(std::count_if(loglik.begin(), loglik.end(), [](double v) { return !std::isfinite(v); }));
}

double SweepResult::argmax() const {
  double best = -std::numeric_limits<double>::infinity();
  double where = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::isfinite(loglik[i]) && loglik[i] > best) {
      best = loglik[i];
      where = grid[i];
    }
  return where;
}

std::optional<std::vector<double>> normalize_curve(const std::vector<double>& values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) return std::nullopt;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = std::isfinite(values[i]) ? (values[i] - lo) / (hi - lo) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<SweepResult> sweep_parameter(const ModelFamily& family, const Eigen::VectorXd& theta,
                                         const std::string& parameter, const std::vector<double>& grid,
                                         const Eigen::MatrixXd& observations, const std::vector<FilterKind>& kinds,
                                         const LikelihoodOptions& options) {
  const auto index = family.index_of(parameter);
  if (index < 0) throw ConfigError("family '" + family.name() + "' has no parameter '" + parameter + "'");
  if (grid.empty()) throw ConfigError("sweep: grid must be nonempty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("sweep: grid must be strictly increasing");

  std::vector<SweepResult> results;
  for (const auto kind : kinds) {
    SweepResult r;
    r.kind = kind;
    r.parameter = parameter;
    r.grid = grid;
    for (const double value : grid) {
      Eigen::VectorXd t = theta;
      t(index) = value;
      double ll = std::numeric_limits<double>::quiet_NaN();
      try {
        ll = loglik(family, t, observations, kind, options);
      } catch (const NumericalError&) {
      }
      r.loglik.push_back(std::isfinite(ll) ? ll : std::numeric_limits<double>::quiet_NaN());
    }
    r.normalized = normalize_curve(r.loglik);
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<SweepResult> sweep_rho(const ModelFamily& family, const Eigen::VectorXd& theta,
                                   const std::vector<double>& rho_grid, const Eigen::MatrixXd& observations,
                                   const std::vector<FilterKind>& kinds, const LikelihoodOptions& options) {
  for (double r : rho_grid)
    if (!(std::abs(r) < 1.0)) throw ConfigError("sweep_rho: grid values must lie in (-1, 1)");
  return sweep_parameter(family, theta, "rho", rho_grid, observations, kinds, options);
}

std::vector<double> make_grid(double start, double stop, double step) {
  if (!(step > 0.0) || !(stop >= start)) throw ConfigError("grid requires step > 0 and stop >= start");
  std::vector<double> grid;
  const auto n = static_cast<long>(std::floor((stop - start) / step + 0.5));
  for (long i = 0; i <= n; ++i) grid.push_back(start + static_cast<double>(i) * step);
  return grid;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd finite_difference_gradient(const ModelFamily& family, const Eigen::VectorXd& theta,
                                           const Eigen::MatrixXd& observations, FilterKind kind,
                                           const LikelihoodOptions& options, double fd_step) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = fd_step * std::max(1.0, std::abs(theta(i)));
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    g(i) = (loglik(family, tp, observations, kind, options) - loglik(family, tm, observations, kind, options)) /
           (2.0 * h);
  }
  return g;
}

namespace {

Dual seeded(double value, Eigen::Index size, Eigen::Index slot) {
  return Dual(value, Derivatives::Unit(size, slot));
}

Dual with_tail(double value, Eigen::Index size, const Eigen::VectorXd& tail) {
  Derivatives der = Derivatives::Zero(size);
  der.tail(tail.size()) = tail;
  return Dual(value, der);
}

double fd_error(const Eigen::VectorXd& g, const Eigen::VectorXd& fd) {
  double err = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    err = std::max(err, std::abs(g(i) - fd(i)) / std::max(std::abs(fd(i)), 1.0));
  return err;
}

GradientReport fd_fallback(const ModelFamily& family, const Eigen::VectorXd& theta,
                           const Eigen::MatrixXd& observations, const LikelihoodOptions& options,
                           GradientReport report, const std::string& reason) {
  report.warnings.push_back(reason + "; using central finite differences");
  report.method = GradientMethod::finite_difference;
  report.gradient = finite_difference_gradient(family, theta, observations, FilterKind::vwf, options);
  return report;
}

}  // namespace

GradientReport implicit_gradient(const ModelFamily& family, const Eigen::VectorXd& theta,
                                 const Eigen::MatrixXd& observations, const LikelihoodOptions& options,
                                 bool check_with_finite_differences) {
  const Model model = family.bind(theta);
  const auto rule = build_rule(options.quadrature, model.dim);
  const FilterRun run = filter(model, observations, rule, options.flow);

  GradientReport report;
  report.loglik = run.loglik;
  auto finish = [&](GradientReport r) {
    if (check_with_finite_differences) {
      const auto fd = finite_difference_gradient(family, theta, observations, FilterKind::vwf, options);
      r.fd_check_error = fd_error(r.gradient, fd);
    }
    return r;
  };
  if (run.converged_steps() != run.steps())
    return finish(fd_fallback(family, theta, observations, options, report,
                              "innovation did not converge at every step"));

  const Eigen::Index d = model.dim;
  const Eigen::Index p = theta.size();
  const Eigen::Index nz = d + packed_size(d);
  const Eigen::Index total = nz + p;
  if (total > kMaxDerivatives) throw ConfigError("implicit_gradient: too many sensitivities for the dual type");

  ParamVector<Dual> theta_dual(p);
  for (Eigen::Index i = 0; i < p; ++i) theta_dual(i) = seeded(theta(i), total, nz + i);
  const auto model_dual = family.bind(theta_dual);

  GaussianBelief<Dual> predictive = predict(model_dual.prior, model_dual.transition_at(0));
  Eigen::VectorXd gradient = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd Jz(nz, nz), Jtheta(nz, p);
  for (long k = 1; k <= run.steps(); ++k) {
    const Vec y = observation_at(observations, k);

    // Fixed point z* = (m_k, vech P_k) with unit seeds on its own coordinates.
    const Belief& z = run.filtered[static_cast<std::size_t>(k - 1)];
    GaussianBelief<Dual> at_fixed_point{Vector<Dual>(d), Matrix<Dual>(d, d)};
    for (Eigen::Index i = 0; i < d; ++i) at_fixed_point.mean(i) = seeded(z.mean(i), total, i);
    Eigen::Index slot = d;
    for (Eigen::Index c = 0; c < d; ++c)
      for (Eigen::Index r = c; r < d; ++r, ++slot) {
        at_fixed_point.cov(r, c) = seeded(z.cov(r, c), total, slot);
        at_fixed_point.cov(c, r) = at_fixed_point.cov(r, c);
      }

    const auto potential = make_potential(model_dual, y, predictive, options.flow.jitter);
    const auto rhs = flow_rhs(at_fixed_point, potential, rule, options.flow.form);
    auto row = [&](Eigen::Index a, const Dual& f) {
      const Derivatives& der = f.derivatives();
      for (Eigen::Index b = 0; b < nz; ++b) Jz(a, b) = der.size() ? der(b) : 0.0;
      for (Eigen::Index i = 0; i < p; ++i) Jtheta(a, i) = der.size() ? der(nz + i) : 0.0;
    };
    for (Eigen::Index i = 0; i < d; ++i) row(i, rhs.mean(i));
    slot = d;
    for (Eigen::Index c = 0; c < d; ++c)
      for (Eigen::Index r = c; r < d; ++r, ++slot) row(slot, rhs.cov(r, c));

    const double h = run.step_sizes[static_cast<std::size_t>(k - 1)];
    const Eigen::MatrixXd euler_jacobian = Eigen::MatrixXd::Identity(nz, nz) + h * Jz;
    const double radius = euler_jacobian.eigenvalues().cwiseAbs().maxCoeff();
    report.max_spectral_radius = std::max(report.max_spectral_radius, radius);
    if (!(radius < 1.0))
      return finish(fd_fallback(family, theta, observations, options, report,
                                "fixed-point Jacobian spectral radius >= 1 at step " + std::to_string(k)));

    // F(z*(θ), θ) = 0  ⇒  dz*/dθ = −(∂F/∂z)⁻¹ ∂F/∂θ
    const Eigen::MatrixXd sensitivity = -Jz.partialPivLu().solve(Jtheta);
    if (!sensitivity.allFinite())
      return finish(fd_fallback(family, theta, observations, options, report,
                                "singular fixed-point Jacobian at step " + std::to_string(k)));

    GaussianBelief<Dual> filtered{Vector<Dual>(d), Matrix<Dual>(d, d)};
    for (Eigen::Index i = 0; i < d; ++i) filtered.mean(i) = with_tail(z.mean(i), total, sensitivity.row(i).transpose());
    slot = d;
    for (Eigen::Index c = 0; c < d; ++c)
      for (Eigen::Index r = c; r < d; ++r, ++slot) {
        filtered.cov(r, c) = with_tail(z.cov(r, c), total, sensitivity.row(slot).transpose());
        filtered.cov(c, r) = filtered.cov(r, c);
      }
    const Dual inc = loglik_increment(predictive, filtered, y, model_dual, rule, options.flow.jitter);
    if (inc.derivatives().size() == total) gradient += inc.derivatives().tail(p);
    predictive = predict(filtered, model_dual.transition_at(k));
  }
  report.gradient = gradient;
  report.method = GradientMethod::implicit;
  return finish(report);
}

GradientReport linearized_gradient(const ModelFamily& family, const Eigen::VectorXd& theta,
                                   const Eigen::MatrixXd& observations, FilterKind kind) {
  const Eigen::Index p = theta.size();
  ParamVector<Dual> theta_dual(p);
  for (Eigen::Index i = 0; i < p; ++i) theta_dual(i) = seeded(theta(i), p, i);
  const auto model = family.bind(theta_dual);

  EKFLinearization<Dual> lin;
  double jitter = 1e-9;
  if (kind == FilterKind::kalman) {
    if (!model.affine_observation) throw ConfigError("kalman gradient requires an affine observation model");
    const auto obs = *model.affine_observation;
    lin.obs_mean = [obs](const Vector<Dual>& x) -> Vector<Dual> { return obs.H * x + obs.c; };
    lin.obs_mean_jacobian = [obs](const Vector<Dual>&) { return obs.H; };
    lin.obs_noise_cov = [obs](const Vector<Dual>&) { return obs.R; };
    jitter = -1.0;
  } else if (kind == FilterKind::ekf) {
    if (!model.linearization) throw ConfigError("model has no EKF linearization");
    lin = *model.linearization;
  } else {
    throw ConfigError("linearized_gradient applies to ekf and kalman only");
  }
  const auto run = linearized_filter(model, observations, lin, jitter);
  GradientReport report;
  report.method = GradientMethod::analytic;
  report.loglik = run.loglik.value();
  report.gradient = Eigen::VectorXd::Zero(p);
  if (run.loglik.derivatives().size() == p) report.gradient = run.loglik.derivatives();
  return report;
}

// ---------------------------------------------------------------------------

namespace {

struct Evaluation {
  double value = std::numeric_limits<double>::infinity();  // −ℓ
  Eigen::VectorXd grad;                                    // ∂(−ℓ)/∂u
  bool ok = false;
};

}  // namespace

MleResult mle(const ModelFamily& family, const Eigen::VectorXd& theta_init, const Eigen::MatrixXd& observations,
              FilterKind kind, const LikelihoodOptions& options, const OptimizerConfig& optimizer) {
  const ParameterTransform transform(family.constraints());
  const Eigen::Index n = theta_init.size();

  auto objective = [&](const Eigen::VectorXd& u) {
    const Eigen::VectorXd theta = transform.inverse(u);
    return -loglik(family, theta, observations, kind, options);
  };
  auto evaluate = [&](const Eigen::VectorXd& u, bool with_gradient) {
    Evaluation e;
    try {
      const Eigen::VectorXd theta = transform.inverse(u);
      if (!with_gradient) {
        e.value = objective(u);
        e.ok = std::isfinite(e.value);
        return e;
      }
      Eigen::VectorXd grad_theta;
      switch (kind) {
        case FilterKind::vwf: {
          const auto report = implicit_gradient(family, theta, observations, options);
          e.value = -report.loglik;
          grad_theta = report.gradient;
          e.grad = -(grad_theta.array() * transform.inverse_derivative(u).array()).matrix();
          break;
        }
        case FilterKind::ekf:
        case FilterKind::kalman: {
          const auto report = linearized_gradient(family, theta, observations, kind);
          e.value = -report.loglik;
          grad_theta = report.gradient;
          e.grad = -(grad_theta.array() * transform.inverse_derivative(u).array()).matrix();
          break;
        }
        case FilterKind::pf: {
          e.value = objective(u);
          e.grad.resize(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd up = u, um = u;
            up(i) += optimizer.pf_fd_step;
            um(i) -= optimizer.pf_fd_step;
            e.grad(i) = (objective(up) - objective(um)) / (2.0 * optimizer.pf_fd_step);
          }
          break;
        }
      }
      e.ok = std::isfinite(e.value) && e.grad.allFinite();
    } catch (const Error&) {
      e.ok = false;
    }
    return e;
  };

  MleResult result;
  Eigen::VectorXd u = transform.forward(theta_init);
  Evaluation current = evaluate(u, true);
  if (!current.ok) throw NumericalError("mle: log-likelihood not finite at the initial point");

  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  for (int it = 0; it < optimizer.max_iters; ++it) {
    const double gnorm = current.grad.cwiseAbs().maxCoeff();
    result.trace.push_back({it, transform.inverse(u), -current.value, gnorm});
    result.iterations = it;
    if (gnorm < optimizer.grad_tol) {
      result.converged = true;
      result.message = "gradient tolerance reached";
      break;
    }
    Eigen::VectorXd direction = -inv_hessian * current.grad;
    if (direction.dot(current.grad) >= 0.0) {
      inv_hessian.setIdentity();
      direction = -current.grad;
    }
    const double longest = direction.cwiseAbs().maxCoeff();
    if (longest > optimizer.max_step) direction *= optimizer.max_step / longest;

    const double slope = direction.dot(current.grad);
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd u_next;
    for (int bt = 0; bt < optimizer.max_backtracks; ++bt, step *= 0.5) {
      u_next = u + step * direction;
      const Evaluation trial = evaluate(u_next, false);
      if (trial.ok && trial.value <= current.value + optimizer.armijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      result.message = "line search failed";
      break;
    }
    Evaluation next = evaluate(u_next, true);
    if (!next.ok) {
      result.message = "gradient evaluation failed";
      break;
    }
    const Eigen::VectorXd s = u_next - u;
    const Eigen::VectorXd yk = next.grad - current.grad;
    const double sy = s.dot(yk);
    if (sy > 1e-12 * s.norm() * yk.norm()) {
      if (!scaled) {
        inv_hessian = Eigen::MatrixXd::Identity(n, n) * (sy / yk.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      inv_hessian = (I - rho * s * yk.transpose()) * inv_hessian * (I - rho * yk * s.transpose()) +
                    rho * s * s.transpose();
    }
    u = u_next;
    current = std::move(next);
    if (it + 1 == optimizer.max_iters) result.message = "iteration limit reached";
  }
  result.theta_hat = transform.inverse(u);
  result.loglik = -current.value;
  if (result.trace.empty() || result.trace.back().theta != result.theta_hat)
    result.trace.push_back({result.iterations + 1, result.theta_hat, result.loglik, current.grad.cwiseAbs().maxCoeff()});
  return result;
}

TrialStatistics trial_statistics(const std::vector<Eigen::VectorXd>& estimates) {
  if (estimates.empty()) throw ConfigError("trial_statistics: no estimates");
  const auto n = static_cast<double>(estimates.size());
  TrialStatistics stats;
  stats.mean = Eigen::VectorXd::Zero(estimates.front().size());
  for (const auto& e : estimates) stats.mean += e;
  stats.mean /= n;
  if (estimates.size() > 1) {
    Eigen::VectorXd var = Eigen::VectorXd::Zero(stats.mean.size());
    for (const auto& e : estimates) var += (e - stats.mean).array().square().matrix();
    stats.std = (var / (n - 1.0)).cwiseSqrt();
  }
  return stats;
}

Eigen::VectorXd componentwise_median(const std::vector<Eigen::VectorXd>& estimates) {
  if (estimates.empty()) throw ConfigError("median: no estimates");
  const Eigen::Index p = estimates.front().size();
  Eigen::VectorXd out(p);
  std::vector<double> column(estimates.size());
  for (Eigen::Index i = 0; i < p; ++i) {
    for (std::size_t t = 0; t < estimates.size(); ++t) column[t] = estimates[t](i);
    std::sort(column.begin(), column.end());
    const auto m = column.size();
    out(i) = m % 2 ? column[m / 2] : 0.5 * (column[m / 2 - 1] + column[m / 2]);
  }
  return out;
}

}  // namespace wgf
