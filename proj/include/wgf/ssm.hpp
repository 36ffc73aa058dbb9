/// @file ssm.hpp State-space models with affine Gaussian transitions.
///
///   X_0 ~ N(m_0, P_0),   X_k | X_{k-1} ~ N(A X_{k-1} + b, Q),   Y_k | X_k ~ h(· | X_k)
///
/// Observations exist for steps 1..K. Models are built for any scalar type so
/// that the same closures serve filtering (`double`) and sensitivity
/// propagation (`Dual`).

#pragma once

#include "wgf/linalg.hpp"
#include "wgf/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace wgf {

template <class Scalar>
using ParamVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
struct AffineGaussianTransition {
  Matrix<Scalar> A;
  Vector<Scalar> b;
  Matrix<Scalar> Q;  // PSD; need not be invertible
};

/// Observation density h(y | x) with x-derivatives. `sampler` is only set on `double` models.
template <class Scalar>
struct ObservationModel {
  std::function<Scalar(const Vec& y, const Vector<Scalar>& x)> log_density;
  std::function<Vector<Scalar>(const Vec& y, const Vector<Scalar>& x)> grad_x_log_density;
  std::function<Matrix<Scalar>(const Vec& y, const Vector<Scalar>& x)> hess_x_log_density;
  std::function<Vec(const Vec& x, std::mt19937_64& rng)> sampler;
};

/// y | x ~ N(Hx + c, R), present on models the exact Kalman filter accepts.
template <class Scalar>
struct AffineObservation {
  Matrix<Scalar> H;
  Vector<Scalar> c;
  Matrix<Scalar> R;
};

/// Conditional-mean linearization used by the extended Kalman filter.
template <class Scalar>
struct EKFLinearization {
  std::function<Vector<Scalar>(const Vector<Scalar>& x)> obs_mean;
  std::function<Matrix<Scalar>(const Vector<Scalar>& x)> obs_mean_jacobian;
  std::function<Matrix<Scalar>(const Vector<Scalar>& x)> obs_noise_cov;
};

/// Scalar-state formulation for the bootstrap particle filter. Random inputs
/// are passed in as standard-normal draws so that runs at different θ can share them.
struct ScalarParticleModel {
  std::function<double(double xi)> initial;                      // draw of X_1
  std::function<double(double x, double y, double xi)> transition;  // X_{k+1} | X_k, y_k
  std::function<double(double y, double x)> log_obs;             // log h(y_k | X_k)
};

template <class Scalar>
struct ModelDefinition {
  std::string family;
  int dim = 0;
  int obs_dim = 0;
  GaussianBelief<Scalar> prior;
  std::function<AffineGaussianTransition<Scalar>(long k)> transition_at;
  ObservationModel<Scalar> observation;
  std::vector<std::string> theta_names;
  ParamVector<Scalar> theta;

  std::optional<AffineObservation<Scalar>> affine_observation;
  std::optional<EKFLinearization<Scalar>> linearization;
  std::optional<ScalarParticleModel> particle_model;
};

using Model = ModelDefinition<double>;

struct SVParameters {
  double mu = 0.5;
  double alpha = 0.975;
  double sigma = 0.1414213562373095;
  double rho = -0.8;

  SVParameters() = default;
  /// Throws ConfigError unless |alpha| < 1, sigma > 0 and |rho| < 1.
  SVParameters(double mu, double alpha, double sigma, double rho);

  [[nodiscard]] Eigen::VectorXd to_vector() const;
  static SVParameters from_vector(const Eigen::VectorXd& theta);
};

struct SimulationTrace {
  Eigen::MatrixXd states;        // (K+1) × d, row k is x_k
  Eigen::MatrixXd observations;  // K × m, row k-1 is y_k
  std::uint64_t seed = 0;

  [[nodiscard]] long steps() const { return static_cast<long>(observations.rows()); }
};

/// Draws x_0 from the prior, then x_k and y_k for k = 1..K.
SimulationTrace simulate(const Model& model, long steps, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Catalog

Model make_sv_model(const SVParameters& params);
Model make_bimodal_model(double delta_sq);
Model make_lgssm_model(const Mat& A, const Vec& b, const Mat& Q, const Mat& H, const Vec& c,
                       const Mat& R, const Belief& prior);

/// Scalar linear-Gaussian model used by the CLI and the estimation tests.
struct ScalarLgssm {
  double a = 1.0, b = 0.0, q = 1.0;
  double h = 1.0, c = 0.0, r = 1.0;
  double m0 = 0.0, p0 = 1.0;

  static const std::vector<std::string>& names();
  [[nodiscard]] double get(const std::string& name) const;
  void set(const std::string& name, double value);
};

// ---------------------------------------------------------------------------
// Parameterized families

enum class Constraint { real, positive, unit_interval };

/// θ ↦ ModelDefinition, available for both scalar types.
class ModelFamily {
 public:
  using Builder = std::function<Model(const Eigen::VectorXd&)>;
  using DualBuilder = std::function<ModelDefinition<Dual>(const ParamVector<Dual>&)>;

  ModelFamily(std::string name, std::vector<std::string> parameter_names,
              std::vector<Constraint> constraints, Builder build, DualBuilder build_dual);

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] const std::vector<std::string>& parameter_names() const { return names_; }
  [[nodiscard]] const std::vector<Constraint>& constraints() const { return constraints_; }
  [[nodiscard]] std::size_t size() const { return names_.size(); }
  [[nodiscard]] std::ptrdiff_t index_of(const std::string& name) const;

  [[nodiscard]] Model bind(const Eigen::VectorXd& theta) const;
  [[nodiscard]] ModelDefinition<Dual> bind(const ParamVector<Dual>& theta) const;

 private:
  std::string name_;
  std::vector<std::string> names_;
  std::vector<Constraint> constraints_;
  Builder build_;
  DualBuilder build_dual_;
};

/// θ = (mu, alpha, sigma, rho).
ModelFamily sv_family();
/// θ = (delta_sq).
ModelFamily bimodal_family();
/// θ = the `free` subset of ScalarLgssm fields; the rest is fixed at `base`.
ModelFamily scalar_lgssm_family(const ScalarLgssm& base, std::vector<std::string> free);

/// Particle-filter form of the SV model: 1-D state with the transition
/// conditioned on the current return (leverage substituted through y_k e^{−X_k/2}).
ScalarParticleModel sv_particle_model(const SVParameters& params);

// ---------------------------------------------------------------------------
// Derivative self-check

struct DerivativeCheck {
  double max_grad_error = 0.0;  // ‖analytic − FD‖∞ / max(‖FD‖∞, 1)
  double max_hess_error = 0.0;
};

/// Compares analytic observation derivatives with central differences of log_density.
DerivativeCheck check_observation_derivatives(const Model& model, std::span<const Vec> ys,
                                              std::span<const Vec> xs, double h = 1e-5);

}  // namespace wgf
