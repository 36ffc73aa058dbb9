/// @file cli.hpp Run configuration and the simulate / filter / sweep / estimate commands.

#pragma once

#include "wgf/estimate.hpp"
#include "wgf/mixture.hpp"
#include "wgf/quadrature.hpp"
#include "wgf/vwf.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wgf::cli {

enum ExitCode : int { kSuccess = 0, kConfigError = 2, kNumericalFailure = 3, kPartialResults = 4 };

struct SweepSpec {
  std::string parameter = "rho";
  std::vector<double> grid;  // explicit grid; otherwise start/stop/step
  double start = -0.89;
  double stop = -0.51;
  double step = 0.01;
  std::vector<std::string> filters{"vwf", "ekf", "pf"};
};

struct EstimateSpec {
  std::map<std::string, double> theta_init;  // missing entries use the family default start
  int sub_trials = 25;                       // particle filter only
  OptimizerConfig optimizer;
};

struct RunConfig {
  std::string model = "sv";
  std::map<std::string, double> theta;  // overrides on the model defaults
  long steps = 1000;
  QuadratureRule quadrature;
  FlowConfig flow;
  std::string filter = "vwf";  // vwf, vwf-mixture, ekf, pf, kalman
  int components = 2;
  std::string mixture_init = "auto";  // auto, mirrored or prior
  double merge_factor = 1e-3;
  int particles = 500;
  std::uint64_t seed = 1;
  std::string out = ".";
  std::vector<std::string> traces;
  SweepSpec sweep;
  EstimateSpec estimate;
};

/// Rejects unknown keys and out-of-range values with ConfigError.
RunConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

/// Family for `config.model`; for lgssm the free parameters are `free` (default all).
ModelFamily make_family(const RunConfig& config, const std::vector<std::string>& free = {});
/// θ of make_family(config, free) with config.theta applied over the model defaults.
Eigen::VectorXd make_theta(const RunConfig& config, const std::vector<std::string>& free = {});

int cmd_simulate(const RunConfig& config, std::ostream& log);
int cmd_filter(const RunConfig& config, std::ostream& log);
int cmd_sweep(const RunConfig& config, std::ostream& log);
int cmd_estimate(const RunConfig& config, std::ostream& log);

/// Full command line: `<subcommand> [--config PATH] [flags...]`; flags override the file.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wgf::cli
