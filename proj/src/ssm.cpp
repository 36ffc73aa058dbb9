#include "wgf/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wgf {

double ParameterVector::at(const std::string& name) const {
  const auto i = index_of(name);
  if (i < 0) throw ConfigError("unknown parameter '" + name + "'");
  return values(i);
}

std::ptrdiff_t ParameterVector::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : std::distance(names.begin(), it);
}

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

template <class S>
S sign_of(const S& x) {
  const double v = value_of(x);
  return S(v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
}

template <class S>
Vector<S> to_vector_s(std::initializer_list<S> values) {
  Vector<S> v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (const auto& x : values) v(i++) = x;
  return v;
}

void check_sv(double mu, double alpha, double sigma, double rho) {
  if (!std::isfinite(mu)) throw ConfigError("SV: mu must be finite");
  if (!(std::abs(alpha) < 1.0)) throw ConfigError("SV: |alpha| must be < 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("SV: sigma must be > 0");
  if (std::abs(rho) == 1.0)
    throw ConfigError("SV: |rho| = 1 gives degenerate observation noise");
  if (!(std::abs(rho) < 1.0)) throw ConfigError("SV: |rho| must be < 1");
}

// Augmented state ζ = [X, ε]: X_{k+1} = αX_k + σε_k + μ(1−α), ε_{k+1} = q_k,
// Y_k | ζ_k ~ N(e^{X/2} ρ ε, e^X (1−ρ²)).
template <class S>
ModelDefinition<S> build_sv(const ParamVector<S>& theta) {
  if (theta.size() != 4) throw ConfigError("SV family expects 4 parameters");
  const S mu = theta(0), alpha = theta(1), sigma = theta(2), rho = theta(3);
  check_sv(value_of(mu), value_of(alpha), value_of(sigma), value_of(rho));

  ModelDefinition<S> model;
  model.family = "sv";
  model.dim = 2;
  model.obs_dim = 1;
  model.theta_names = {"mu", "alpha", "sigma", "rho"};
  model.theta = theta;

  model.prior.mean = to_vector_s<S>({mu, S(0.0)});
  model.prior.cov = Matrix<S>::Zero(2, 2);
  model.prior.cov(0, 0) = sigma * sigma / (S(1.0) - alpha * alpha);
  model.prior.cov(1, 1) = S(1.0);

  AffineGaussianTransition<S> tr;
  tr.A = Matrix<S>::Zero(2, 2);
  tr.A(0, 0) = alpha;
  tr.A(0, 1) = sigma;
  tr.b = to_vector_s<S>({mu * (S(1.0) - alpha), S(0.0)});
  tr.Q = Matrix<S>::Zero(2, 2);
  tr.Q(1, 1) = S(1.0);
  model.transition_at = [tr](long) { return tr; };

  const S c = S(1.0) - rho * rho;
  using std::exp;
  using std::log;
  const S half_log_c = S(0.5) * log(c);

  // u = y e^{−x/2}, r = u − ρε
  model.observation.log_density = [=](const Vec& y, const Vector<S>& x) -> S {
    const S u = y(0) * exp(-x(0) / 2.0);
    const S r = u - rho * x(1);
    return S(-0.5 * kLog2Pi) - half_log_c - x(0) / 2.0 - r * r / (S(2.0) * c);
  };
  model.observation.grad_x_log_density = [=](const Vec& y, const Vector<S>& x) -> Vector<S> {
    const S u = y(0) * exp(-x(0) / 2.0);
    const S r = u - rho * x(1);
    return to_vector_s<S>({S(-0.5) + r * u / (S(2.0) * c), r * rho / c});
  };
  model.observation.hess_x_log_density = [=](const Vec& y, const Vector<S>& x) -> Matrix<S> {
    const S u = y(0) * exp(-x(0) / 2.0);
    const S r = u - rho * x(1);
    Matrix<S> H(2, 2);
    H(0, 0) = -u * (u + r) / (S(4.0) * c);
    H(0, 1) = -rho * u / (S(2.0) * c);
    H(1, 0) = H(0, 1);
    H(1, 1) = -rho * rho / c;
    return H;
  };

  EKFLinearization<S> lin;
  lin.obs_mean = [=](const Vector<S>& x) { return to_vector_s<S>({exp(x(0) / 2.0) * rho * x(1)}); };
  lin.obs_mean_jacobian = [=](const Vector<S>& x) {
    Matrix<S> J(1, 2);
    J(0, 0) = S(0.5) * exp(x(0) / 2.0) * rho * x(1);
    J(0, 1) = exp(x(0) / 2.0) * rho;
    return J;
  };
  lin.obs_noise_cov = [=](const Vector<S>& x) {
    Matrix<S> R(1, 1);
    R(0, 0) = exp(x(0)) * c;
    return R;
  };
  model.linearization = lin;

  if constexpr (std::is_same_v<S, double>) {
    const double sqrt_c = std::sqrt(c);
    model.observation.sampler = [=](const Vec& x, std::mt19937_64& rng) {
      std::normal_distribution<double> normal;
      Vec y(1);
      y(0) = std::exp(x(0) / 2.0) * (rho * x(1) + sqrt_c * normal(rng));
      return y;
    };
    model.particle_model = sv_particle_model(SVParameters(mu, alpha, sigma, rho));
  }
  return model;
}

template <class S>
ModelDefinition<S> build_bimodal(const ParamVector<S>& theta) {
  if (theta.size() != 1) throw ConfigError("bimodal family expects 1 parameter");
  const S delta_sq = theta(0);
  if (!(value_of(delta_sq) > 0.0)) throw ConfigError("bimodal: delta_sq must be > 0");

  ModelDefinition<S> model;
  model.family = "bimodal";
  model.dim = 1;
  model.obs_dim = 1;
  model.theta_names = {"delta_sq"};
  model.theta = theta;
  model.prior.mean = Vector<S>::Zero(1);
  model.prior.cov = Matrix<S>::Constant(1, 1, delta_sq);

  AffineGaussianTransition<S> tr{Matrix<S>::Identity(1, 1), Vector<S>::Zero(1),
                                 Matrix<S>::Identity(1, 1)};
  model.transition_at = [tr](long) { return tr; };

  using std::abs;
  model.observation.log_density = [](const Vec& y, const Vector<S>& x) -> S {
    const S r = S(y(0)) - abs(x(0));
    return S(-0.5 * kLog2Pi) - S(0.5) * r * r;
  };
  // a.e. derivatives with sign(0) = 0
  model.observation.grad_x_log_density = [](const Vec& y, const Vector<S>& x) -> Vector<S> {
    Vector<S> g(1);
    g(0) = (S(y(0)) - abs(x(0))) * sign_of(x(0));
    return g;
  };
  model.observation.hess_x_log_density = [](const Vec&, const Vector<S>& x) -> Matrix<S> {
    const S s = sign_of(x(0));
    return Matrix<S>::Constant(1, 1, -s * s);
  };

  EKFLinearization<S> lin;
  lin.obs_mean = [](const Vector<S>& x) { return to_vector_s<S>({abs(x(0))}); };
  lin.obs_mean_jacobian = [](const Vector<S>& x) { return Matrix<S>::Constant(1, 1, sign_of(x(0))); };
  lin.obs_noise_cov = [](const Vector<S>&) { return Matrix<S>::Identity(1, 1); };
  model.linearization = lin;

  if constexpr (std::is_same_v<S, double>) {
    model.observation.sampler = [](const Vec& x, std::mt19937_64& rng) {
      std::normal_distribution<double> normal;
      Vec y(1);
      y(0) = std::abs(x(0)) + normal(rng);
      return y;
    };
    const double init_sd = std::sqrt(delta_sq + 1.0);
    ScalarParticleModel pm;
    pm.initial = [init_sd](double xi) { return init_sd * xi; };
    pm.transition = [](double x, double, double xi) { return x + xi; };
    pm.log_obs = [](double y, double x) {
      const double r = y - std::abs(x);
      return -0.5 * kLog2Pi - 0.5 * r * r;
    };
    model.particle_model = pm;
  }
  return model;
}

template <class S>
ModelDefinition<S> build_lgssm(const Matrix<S>& A, const Vector<S>& b, const Matrix<S>& Q,
                               const Matrix<S>& H, const Vector<S>& c, const Matrix<S>& R,
                               const GaussianBelief<S>& prior) {
  const auto d = A.rows();
  const auto m = H.rows();
  if (d < 1 || d > kMaxDim || m < 1 || m > kMaxDim)
    throw ConfigError("LGSSM: dimensions must lie in [1, " + std::to_string(kMaxDim) + "]");
  if (A.cols() != d || b.size() != d || Q.rows() != d || Q.cols() != d || H.cols() != d ||
      c.size() != m || R.rows() != m || R.cols() != m || prior.mean.size() != d ||
      prior.cov.rows() != d || prior.cov.cols() != d)
    throw ConfigError("LGSSM: dimension mismatch");

  const Mat Qv = values_of(Q);
  if ((Qv - Qv.transpose()).cwiseAbs().maxCoeff() > 1e-12 || min_eigenvalue(Qv) < -1e-12)
    throw ConfigError("LGSSM: Q must be symmetric positive semi-definite");
  const auto R_chol = cholesky<S>(R);
  if (!R_chol) throw ConfigError("LGSSM: R must be positive definite");
  const Matrix<S> LR = *R_chol;
  const Matrix<S> R_inv = cholesky_inverse<S>(LR);

  ModelDefinition<S> model;
  model.family = "lgssm";
  model.dim = static_cast<int>(d);
  model.obs_dim = static_cast<int>(m);
  model.prior = prior;
  AffineGaussianTransition<S> tr{A, b, Q};
  model.transition_at = [tr](long) { return tr; };

  model.observation.log_density = [=](const Vec& y, const Vector<S>& x) -> S {
    const Vector<S> mean = H * x + c;
    return gaussian_log_density<S>(y.cast<S>(), mean, LR);
  };
  model.observation.grad_x_log_density = [=](const Vec& y, const Vector<S>& x) -> Vector<S> {
    const Vector<S> resid = y.cast<S>() - H * x - c;
    return H.transpose() * (R_inv * resid);
  };
  const Matrix<S> hess = -(H.transpose() * R_inv * H);
  model.observation.hess_x_log_density = [hess](const Vec&, const Vector<S>&) { return hess; };

  model.affine_observation = AffineObservation<S>{H, c, R};
  EKFLinearization<S> lin;
  lin.obs_mean = [=](const Vector<S>& x) -> Vector<S> { return H * x + c; };
  lin.obs_mean_jacobian = [=](const Vector<S>&) { return H; };
  lin.obs_noise_cov = [=](const Vector<S>&) { return R; };
  model.linearization = lin;

  if constexpr (std::is_same_v<S, double>) {
    const Mat LRd = LR;
    model.observation.sampler = [=](const Vec& x, std::mt19937_64& rng) {
      std::normal_distribution<double> normal;
      Vec z(m);
      for (Eigen::Index i = 0; i < m; ++i) z(i) = normal(rng);
      return Vec(H * x + c + LRd * z);
    };
    if (d == 1 && m == 1) {
      const double a = A(0, 0), bb = b(0), q = Q(0, 0);
      const double init_mean = a * prior.mean(0) + bb;
      const double init_sd = std::sqrt(a * a * prior.cov(0, 0) + q);
      const double sq = std::sqrt(q);
      const double h = H(0, 0), cc = c(0), r = R(0, 0);
      ScalarParticleModel pm;
      pm.initial = [=](double xi) { return init_mean + init_sd * xi; };
      pm.transition = [=](double x, double, double xi) { return a * x + bb + sq * xi; };
      pm.log_obs = [=](double y, double x) {
        const double e = y - h * x - cc;
        return -0.5 * (kLog2Pi + std::log(r) + e * e / r);
      };
      model.particle_model = pm;
    }
  }
  return model;
}

template <class S>
ModelDefinition<S> build_scalar_lgssm(const ScalarLgssm& base, const std::vector<std::string>& free,
                                      const ParamVector<S>& theta) {
  if (static_cast<std::size_t>(theta.size()) != free.size())
    throw ConfigError("scalar LGSSM family: parameter count mismatch");
  auto value = [&](const std::string& name) -> S {
    const auto it = std::find(free.begin(), free.end(), name);
    if (it == free.end()) return S(base.get(name));
    return theta(std::distance(free.begin(), it));
  };
  auto one = [](const S& v) { return Matrix<S>::Constant(1, 1, v); };
  auto vec = [](const S& v) { return Vector<S>::Constant(1, v); };
  if (!(value_of(value("r")) > 0.0)) throw ConfigError("scalar LGSSM: r must be > 0");
  if (value_of(value("q")) < 0.0 || value_of(value("p0")) < 0.0)
    throw ConfigError("scalar LGSSM: q and p0 must be >= 0");

  GaussianBelief<S> prior{vec(value("m0")), one(value("p0"))};
  auto model = build_lgssm<S>(one(value("a")), vec(value("b")), one(value("q")), one(value("h")),
                              vec(value("c")), one(value("r")), prior);
  model.family = "lgssm";
  model.theta_names = free;
  model.theta = theta;
  return model;
}

}  // namespace

SVParameters::SVParameters(double mu_, double alpha_, double sigma_, double rho_)
    : mu(mu_), alpha(alpha_), sigma(sigma_), rho(rho_) {
  check_sv(mu, alpha, sigma, rho);
}

Eigen::VectorXd SVParameters::to_vector() const {
  Eigen::VectorXd v(4);
  v << mu, alpha, sigma, rho;
  return v;
}

SVParameters SVParameters::from_vector(const Eigen::VectorXd& theta) {
  if (theta.size() != 4) throw ConfigError("SV parameter vector must have 4 entries");
  return {theta(0), theta(1), theta(2), theta(3)};
}

ScalarParticleModel sv_particle_model(const SVParameters& p) {
  const double stationary_sd = p.sigma / std::sqrt(1.0 - p.alpha * p.alpha);
  const double sqrt_c = std::sqrt(1.0 - p.rho * p.rho);
  ScalarParticleModel pm;
  pm.initial = [=](double xi) { return p.mu + stationary_sd * xi; };
  pm.transition = [=](double x, double y, double xi) {
    const double eta = y * std::exp(-x / 2.0);
    return p.mu + p.alpha * (x - p.mu) + p.sigma * (p.rho * eta + sqrt_c * xi);
  };
  pm.log_obs = [](double y, double x) {
    // Y_k | X_k ~ N(0, e^{X_k}) once ε_k is marginalized
    return -0.5 * (kLog2Pi + x + y * y * std::exp(-x));
  };
  return pm;
}

Model make_sv_model(const SVParameters& params) { return build_sv<double>(params.to_vector()); }

Model make_bimodal_model(double delta_sq) {
  return build_bimodal<double>(Eigen::VectorXd::Constant(1, delta_sq));
}

Model make_lgssm_model(const Mat& A, const Vec& b, const Mat& Q, const Mat& H, const Vec& c,
                       const Mat& R, const Belief& prior) {
  return build_lgssm<double>(A, b, Q, H, c, R, prior);
}

const std::vector<std::string>& ScalarLgssm::names() {
  static const std::vector<std::string> n{"a", "b", "q", "h", "c", "r", "m0", "p0"};
  return n;
}

double ScalarLgssm::get(const std::string& name) const {
  if (name == "a") return a;
  if (name == "b") return b;
  if (name == "q") return q;
  if (name == "h") return h;
  if (name == "c") return c;
  if (name == "r") return r;
  if (name == "m0") return m0;
  if (name == "p0") return p0;
  throw ConfigError("unknown scalar LGSSM parameter '" + name + "'");
}

void ScalarLgssm::set(const std::string& name, double value) {
  if (name == "a") a = value;
  else if (name == "b") b = value;
  else if (name == "q") q = value;
  else if (name == "h") h = value;
  else if (name == "c") c = value;
  else if (name == "r") r = value;
  else if (name == "m0") m0 = value;
  else if (name == "p0") p0 = value;
  else throw ConfigError("unknown scalar LGSSM parameter '" + name + "'");
}

// ---------------------------------------------------------------------------

SimulationTrace simulate(const Model& model, long steps, std::uint64_t seed) {
  if (steps < 1) throw ConfigError("simulate: steps must be >= 1");
  if (!model.observation.sampler) throw ConfigError("simulate: model has no observation sampler");
  const int d = model.dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto draw = [&](int n) {
    Vec z(n);
    for (int i = 0; i < n; ++i) z(i) = normal(rng);
    return z;
  };

  SimulationTrace trace;
  trace.seed = seed;
  trace.states.resize(steps + 1, d);
  trace.observations.resize(steps, model.obs_dim);

  Vec x = model.prior.mean + psd_sqrt(model.prior.cov) * draw(d);
  trace.states.row(0) = x.transpose();
  for (long k = 1; k <= steps; ++k) {
    const auto tr = model.transition_at(k - 1);
    x = tr.A * x + tr.b + psd_sqrt(tr.Q) * draw(d);
    const Vec y = model.observation.sampler(x, rng);
    if (!x.allFinite() || !y.allFinite()) throw NumericalError("simulation diverged", k);
    trace.states.row(k) = x.transpose();
    trace.observations.row(k - 1) = y.transpose();
  }
  return trace;
}

// ---------------------------------------------------------------------------

ModelFamily::ModelFamily(std::string name, std::vector<std::string> parameter_names,
                         std::vector<Constraint> constraints, Builder build, DualBuilder build_dual)
    : name_(std::move(name)),
      names_(std::move(parameter_names)),
      constraints_(std::move(constraints)),
      build_(std::move(build)),
      build_dual_(std::move(build_dual)) {
  if (names_.size() != constraints_.size())
    throw ConfigError("model family: one constraint per parameter required");
}

std::ptrdiff_t ModelFamily::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : std::distance(names_.begin(), it);
}

Model ModelFamily::bind(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != size())
    throw ConfigError("family '" + name_ + "': expected " + std::to_string(size()) + " parameters");
  return build_(theta);
}

ModelDefinition<Dual> ModelFamily::bind(const ParamVector<Dual>& theta) const {
  if (static_cast<std::size_t>(theta.size()) != size())
    throw ConfigError("family '" + name_ + "': expected " + std::to_string(size()) + " parameters");
  return build_dual_(theta);
}

ModelFamily sv_family() {
  return {"sv",
          {"mu", "alpha", "sigma", "rho"},
          {Constraint::real, Constraint::unit_interval, Constraint::positive, Constraint::unit_interval},
          [](const Eigen::VectorXd& t) { return build_sv<double>(t); },
          [](const ParamVector<Dual>& t) { return build_sv<Dual>(t); }};
}

ModelFamily bimodal_family() {
  return {"bimodal",
          {"delta_sq"},
          {Constraint::positive},
          [](const Eigen::VectorXd& t) { return build_bimodal<double>(t); },
          [](const ParamVector<Dual>& t) { return build_bimodal<Dual>(t); }};
}

ModelFamily scalar_lgssm_family(const ScalarLgssm& base, std::vector<std::string> free) {
  std::vector<Constraint> constraints;
  for (const auto& name : free) {
    base.get(name);  // validates the name
    const bool positive = name == "q" || name == "r" || name == "p0";
    constraints.push_back(positive ? Constraint::positive : Constraint::real);
  }
  return {"lgssm", free, constraints,
          [base, free](const Eigen::VectorXd& t) { return build_scalar_lgssm<double>(base, free, t); },
          [base, free](const ParamVector<Dual>& t) { return build_scalar_lgssm<Dual>(base, free, t); }};
}

// ---------------------------------------------------------------------------

DerivativeCheck check_observation_derivatives(const Model& model, std::span<const Vec> ys,
                                              std::span<const Vec> xs, double h) {
  DerivativeCheck out;
  const auto& obs = model.observation;
  for (const auto& y : ys) {
    for (const auto& x : xs) {
      const Eigen::Index d = x.size();
      Vec fd_grad(d);
      Mat fd_hess(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        fd_grad(i) = (obs.log_density(y, xp) - obs.log_density(y, xm)) / (2.0 * h);
        fd_hess.col(i) = (obs.grad_x_log_density(y, xp) - obs.grad_x_log_density(y, xm)) / (2.0 * h);
      }
      const Vec g = obs.grad_x_log_density(y, x);
      const Mat H = obs.hess_x_log_density(y, x);
      out.max_grad_error = std::max(out.max_grad_error, (g - fd_grad).cwiseAbs().maxCoeff() /
                                                            std::max(fd_grad.cwiseAbs().maxCoeff(), 1.0));
      out.max_hess_error = std::max(out.max_hess_error, (H - fd_hess).cwiseAbs().maxCoeff() /
                                                            std::max(fd_hess.cwiseAbs().maxCoeff(), 1.0));
    }
  }
  return out;
}

}  // namespace wgf
