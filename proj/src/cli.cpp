#include "wgf/cli.hpp"

#include "wgf/baselines.hpp"
#include "wgf/io.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

namespace wgf::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kModels{"sv", "bimodal", "lgssm"};
const std::set<std::string> kFilters{"vwf", "vwf-mixture", "ekf", "pf", "kalman"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

template <class T>
T read(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + key + "' in " + where);
  }
}

template <class T>
void read_if(const json& j, const std::string& key, T& target, const std::string& where) {
  if (j.contains(key)) target = read<T>(j, key, where);
}

std::map<std::string, double> read_map(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::map<std::string, double> out;
  for (const auto& item : j.items()) {
    if (!item.value().is_number()) throw ConfigError("'" + item.key() + "' in " + where + " must be a number");
    out[item.key()] = item.value().get<double>();
  }
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void validate(const RunConfig& c) {
  require(kModels.count(c.model) > 0, "model must be one of sv, bimodal, lgssm");
  require(kFilters.count(c.filter) > 0, "filter must be one of vwf, vwf-mixture, ekf, pf, kalman");
  require(c.steps >= 1, "steps must be >= 1");
  require(c.quadrature.order >= 1, "quadrature.order must be >= 1");
  require(c.quadrature.sample_count >= 1, "quadrature.samples must be >= 1");
  require(c.flow.step_size > 0.0, "flow.step_size must be > 0");
  require(c.flow.tol > 0.0, "flow.tol must be > 0");
  require(c.flow.max_iters >= 1, "flow.max_iters must be >= 1");
  require(c.flow.jitter >= 0.0, "flow.jitter must be >= 0");
  require(c.flow.max_step_reductions >= 0, "flow.max_step_reductions must be >= 0");
  require(c.components >= 1, "components must be >= 1");
  require(c.mixture_init == "auto" || c.mixture_init == "mirrored" || c.mixture_init == "prior",
          "mixture.init must be auto, mirrored or prior");
  require(c.merge_factor >= 0.0, "mixture.merge_factor must be >= 0");
  require(c.particles >= 2, "particles must be >= 2");
  require(c.sweep.step > 0.0 && c.sweep.stop >= c.sweep.start, "sweep requires step > 0 and stop >= start");
  for (const auto& f : c.sweep.filters) require(kFilters.count(f) > 0, "unknown sweep filter '" + f + "'");
  require(c.estimate.sub_trials >= 1, "estimate.sub_trials must be >= 1");
  require(c.estimate.optimizer.max_iters >= 1, "estimate.max_iters must be >= 1");
  require(c.estimate.optimizer.grad_tol > 0.0, "estimate.grad_tol must be > 0");
  require(c.estimate.optimizer.pf_fd_step > 0.0, "estimate.pf_fd_step must be > 0");
  make_theta(c);  // parameter names and model-specific ranges
}

std::vector<std::string> all_names(const std::string& model) {
  if (model == "sv") return {"mu", "alpha", "sigma", "rho"};
  if (model == "bimodal") return {"delta_sq"};
  return ScalarLgssm::names();
}

std::map<std::string, double> default_theta(const std::string& model) {
  if (model == "sv") {
    const SVParameters p;
    return {{"mu", p.mu}, {"alpha", p.alpha}, {"sigma", p.sigma}, {"rho", p.rho}};
  }
  if (model == "bimodal") return {{"delta_sq", 1.0}};
  const ScalarLgssm base;
  std::map<std::string, double> out;
  for (const auto& n : ScalarLgssm::names()) out[n] = base.get(n);
  return out;
}

std::map<std::string, double> default_start(const std::string& model) {
  if (model == "sv") return {{"mu", 0.0}, {"alpha", 0.9}, {"sigma", 0.2}, {"rho", -0.5}};
  if (model == "bimodal") return {{"delta_sq", 0.5}};
  return {};
}

std::map<std::string, double> merged(std::map<std::string, double> base,
                                     const std::map<std::string, double>& overrides, const std::string& model,
                                     const std::string& where) {
  const auto names = all_names(model);
  for (const auto& [k, v] : overrides) {
    if (std::find(names.begin(), names.end(), k) == names.end())
      throw ConfigError("unknown parameter '" + k + "' in " + where + " for model " + model);
    base[k] = v;
  }
  return base;
}

json to_object(const std::vector<std::string>& names, const Eigen::VectorXd& values) {
  json out = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = values(static_cast<Eigen::Index>(i));
  return out;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buffer;
}

fs::path output_dir(const RunConfig& config) {
  const fs::path dir(config.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + config.out + "'");
  return dir;
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer, std::ostream& log) {
  std::ofstream file(path);
  if (!file) throw ConfigError("cannot write '" + path.string() + "'");
  writer(file);
  if (!file) throw ConfigError("write to '" + path.string() + "' failed");
  log << "wrote " << path.string() << '\n';
}

void write_json(const fs::path& path, const json& j, std::ostream& log) {
  write_file(path, [&](std::ostream& o) { o << j.dump(2) << '\n'; }, log);
}

/// The manifest is the effective configuration plus a `meta` block that parse_config ignores.
void write_manifest(const fs::path& path, const RunConfig& config, const std::string& command, json meta,
                    std::ostream& log) {
  json j = to_json(config);
  meta["command"] = command;
  meta["created"] = timestamp();
  j["meta"] = std::move(meta);
  write_json(path, j, log);
}

TraceTable load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read trace '" + path + "'");
  return read_trace_csv(in);
}

LikelihoodOptions likelihood_options(const RunConfig& c, std::uint64_t seed) {
  LikelihoodOptions o;
  o.quadrature = c.quadrature;
  o.flow = c.flow;
  o.n_particles = c.particles;
  o.seed = seed;
  return o;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

// ---------------------------------------------------------------------------

RunConfig parse_config(const json& j) {
  check_keys(j,
             {"model", "theta", "steps", "quadrature", "flow", "filter", "components", "mixture", "particles",
              "seed", "out", "traces", "sweep", "estimate", "meta"},
             "config");
  RunConfig c;
  const std::string where = "config";
  read_if(j, "model", c.model, where);
  if (j.contains("theta")) c.theta = read_map(j.at("theta"), "theta");
  read_if(j, "steps", c.steps, where);
  if (j.contains("quadrature")) {
    const auto& q = j.at("quadrature");
    check_keys(q, {"kind", "order", "samples", "seed"}, "quadrature");
    if (q.contains("kind")) c.quadrature.kind = quadrature_kind_from_string(read<std::string>(q, "kind", "quadrature"));
    read_if(q, "order", c.quadrature.order, "quadrature");
    read_if(q, "samples", c.quadrature.sample_count, "quadrature");
    read_if(q, "seed", c.quadrature.seed, "quadrature");
  }
  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    check_keys(f, {"step_size", "tol", "max_iters", "jitter", "form", "max_step_reductions"}, "flow");
    read_if(f, "step_size", c.flow.step_size, "flow");
    read_if(f, "tol", c.flow.tol, "flow");
    read_if(f, "max_iters", c.flow.max_iters, "flow");
    read_if(f, "jitter", c.flow.jitter, "flow");
    read_if(f, "max_step_reductions", c.flow.max_step_reductions, "flow");
    if (f.contains("form")) {
      const auto form = read<std::string>(f, "form", "flow");
      if (form == "stein") c.flow.form = CovarianceForm::stein;
      else if (form == "hessian") c.flow.form = CovarianceForm::hessian;
      else throw ConfigError("flow.form must be stein or hessian");
    }
  }
  read_if(j, "filter", c.filter, where);
  read_if(j, "components", c.components, where);
  if (j.contains("mixture")) {
    const auto& m = j.at("mixture");
    check_keys(m, {"init", "merge_factor"}, "mixture");
    read_if(m, "init", c.mixture_init, "mixture");
    read_if(m, "merge_factor", c.merge_factor, "mixture");
  }
  read_if(j, "particles", c.particles, where);
  read_if(j, "seed", c.seed, where);
  read_if(j, "out", c.out, where);
  read_if(j, "traces", c.traces, where);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"parameter", "grid", "start", "stop", "step", "filters"}, "sweep");
    read_if(s, "parameter", c.sweep.parameter, "sweep");
    read_if(s, "grid", c.sweep.grid, "sweep");
    read_if(s, "start", c.sweep.start, "sweep");
    read_if(s, "stop", c.sweep.stop, "sweep");
    read_if(s, "step", c.sweep.step, "sweep");
    read_if(s, "filters", c.sweep.filters, "sweep");
  }
  if (j.contains("estimate")) {
    const auto& e = j.at("estimate");
    check_keys(e, {"theta_init", "sub_trials", "max_iters", "grad_tol", "pf_fd_step"}, "estimate");
    if (e.contains("theta_init")) c.estimate.theta_init = read_map(e.at("theta_init"), "estimate.theta_init");
    read_if(e, "sub_trials", c.estimate.sub_trials, "estimate");
    read_if(e, "max_iters", c.estimate.optimizer.max_iters, "estimate");
    read_if(e, "grad_tol", c.estimate.optimizer.grad_tol, "estimate");
    read_if(e, "pf_fd_step", c.estimate.optimizer.pf_fd_step, "estimate");
  }
  validate(c);
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  j["model"] = c.model;
  j["theta"] = merged(default_theta(c.model), c.theta, c.model, "theta");
  j["steps"] = c.steps;
  j["quadrature"] = {{"kind", to_string(c.quadrature.kind)},
                     {"order", c.quadrature.order},
                     {"samples", c.quadrature.sample_count},
                     {"seed", c.quadrature.seed}};
  j["flow"] = {{"step_size", c.flow.step_size},
               {"tol", c.flow.tol},
               {"max_iters", c.flow.max_iters},
               {"jitter", c.flow.jitter},
               {"form", c.flow.form == CovarianceForm::stein ? "stein" : "hessian"},
               {"max_step_reductions", c.flow.max_step_reductions}};
  j["filter"] = c.filter;
  j["components"] = c.components;
  j["mixture"] = {{"init", c.mixture_init}, {"merge_factor", c.merge_factor}};
  j["particles"] = c.particles;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["traces"] = c.traces;
  json sweep = {{"parameter", c.sweep.parameter},
                {"start", c.sweep.start},
                {"stop", c.sweep.stop},
                {"step", c.sweep.step},
                {"filters", c.sweep.filters}};
  if (!c.sweep.grid.empty()) sweep["grid"] = c.sweep.grid;
  j["sweep"] = sweep;
  j["estimate"] = {{"theta_init", c.estimate.theta_init},
                   {"sub_trials", c.estimate.sub_trials},
                   {"max_iters", c.estimate.optimizer.max_iters},
                   {"grad_tol", c.estimate.optimizer.grad_tol},
                   {"pf_fd_step", c.estimate.optimizer.pf_fd_step}};
  return j;
}

ModelFamily make_family(const RunConfig& config, const std::vector<std::string>& free) {
  if (config.model == "sv") return sv_family();
  if (config.model == "bimodal") return bimodal_family();
  if (config.model != "lgssm") throw ConfigError("unknown model '" + config.model + "'");
  ScalarLgssm base;
  for (const auto& [k, v] : merged(default_theta("lgssm"), config.theta, "lgssm", "theta")) base.set(k, v);
  return scalar_lgssm_family(base, free.empty() ? ScalarLgssm::names() : free);
}

Eigen::VectorXd make_theta(const RunConfig& config, const std::vector<std::string>& free) {
  const auto values = merged(default_theta(config.model), config.theta, config.model, "theta");
  const auto family = make_family(config, free);
  const auto& names = family.parameter_names();
  Eigen::VectorXd theta(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) theta(static_cast<Eigen::Index>(i)) = values.at(names[i]);
  static_cast<void>(family.bind(theta));  // range checks
  return theta;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& config, std::ostream& log) {
  const auto family = make_family(config);
  const auto theta = make_theta(config);
  const auto trace = simulate(family.bind(theta), config.steps, config.seed);
  const auto dir = output_dir(config);
  const std::string name =
      "trace_" + config.model + "_K" + std::to_string(config.steps) + "_s" + std::to_string(config.seed);
  const auto csv = dir / (name + ".csv");
  write_file(csv, [&](std::ostream& o) { write_trace_csv(o, trace); }, log);

  RunConfig effective = config;
  effective.traces = {csv.string()};
  json x0 = json::array();
  for (Eigen::Index i = 0; i < trace.states.cols(); ++i) x0.push_back(trace.states(0, i));
  write_manifest(dir / (name + ".json"), effective, "simulate",
                 {{"x0", x0}, {"parameters", to_object(family.parameter_names(), theta)}}, log);
  return kSuccess;
}

int cmd_filter(const RunConfig& config, std::ostream& log) {
  if (config.traces.size() != 1) throw ConfigError("filter expects exactly one trace");
  const auto table = load_trace(config.traces.front());
  const auto family = make_family(config);
  const auto theta = make_theta(config);
  const Model model = family.bind(theta);
  if (table.observations.cols() != model.obs_dim)
    throw ConfigError("trace observation dimension does not match model '" + config.model + "'");
  const auto dir = output_dir(config);
  const std::string name = "filter_" + config.filter;

  json result;
  bool partial = false;
  if (config.filter == "vwf-mixture") {
    const auto rule = build_rule(config.quadrature, model.dim);
    std::string init = config.mixture_init;
    if (init == "auto") init = config.model == "bimodal" && config.components == 2 ? "mirrored" : "prior";
    MixtureBelief start;
    if (init == "mirrored") {
      if (config.model != "bimodal" || config.components != 2)
        throw ConfigError("mirrored mixture init needs the bimodal model with 2 components");
      start = mirrored_init(theta(0));
    } else {
      start = replicate(model.prior, config.components);
    }
    MixtureConfig mix;
    mix.merge_factor = config.merge_factor;
    const auto run = mixture_filter(model, table.observations, config.components, start, rule, config.flow, mix);
    write_file(dir / (name + ".csv"), [&](std::ostream& o) { write_mixture_csv(o, run); }, log);
    json events = json::array();
    for (const auto& e : run.collapses)
      events.push_back({{"step", e.step}, {"first", e.first + 1}, {"second", e.second + 1}, {"distance", e.distance}});
    write_json(dir / "collapses.json", events, log);
    result = {{"loglik", run.loglik},
              {"converged_steps", run.converged_steps()},
              {"total_steps", run.steps()},
              {"collapse_events", run.collapses.size()}};
    partial = run.converged_steps() != run.steps();
  } else {
    FilterRun run;
    if (config.filter == "vwf") run = filter(model, table.observations, build_rule(config.quadrature, model.dim), config.flow);
    else if (config.filter == "ekf") run = ekf_filter(model, table.observations, config.flow.jitter);
    else if (config.filter == "kalman") run = kalman_filter(model, table.observations);
    else {
      if (!model.particle_model) throw ConfigError("model '" + config.model + "' has no particle filter form");
      run = bootstrap_pf(*model.particle_model, table.observations, config.particles, config.seed);
    }
    write_file(dir / (name + ".csv"), [&](std::ostream& o) { write_filter_csv(o, run); }, log);
    result = {{"loglik", run.loglik}, {"converged_steps", run.converged_steps()}, {"total_steps", run.steps()}};
    partial = run.converged_steps() != run.steps();
  }
  result["filter"] = config.filter;
  write_json(dir / (name + ".json"), result, log);
  write_manifest(dir / "filter_manifest.json", config, "filter", {{"result", result}}, log);
  log << "loglik " << format_number(result["loglik"].get<double>()) << '\n';
  return partial ? kPartialResults : kSuccess;
}

int cmd_sweep(const RunConfig& config, std::ostream& log) {
  if (config.traces.empty()) throw ConfigError("sweep expects at least one trace");
  const auto family = make_family(config);
  const auto theta = make_theta(config);
  if (family.index_of(config.sweep.parameter) < 0)
    throw ConfigError("model '" + config.model + "' has no parameter '" + config.sweep.parameter + "'");
  const auto grid =
      config.sweep.grid.empty() ? make_grid(config.sweep.start, config.sweep.stop, config.sweep.step) : config.sweep.grid;
  std::vector<FilterKind> kinds;
  for (const auto& f : config.sweep.filters) {
    if (f == "vwf-mixture") throw ConfigError("sweep does not support vwf-mixture");
    kinds.push_back(filter_kind_from_string(f));
  }
  const auto options = likelihood_options(config, config.seed);
  const auto dir = output_dir(config);

  json summary = json::array();
  std::size_t failures = 0;
  for (const auto& path : config.traces) {
    const auto table = load_trace(path);
    const auto curves = config.sweep.parameter == "rho" && config.model == "sv"
                            ? sweep_rho(family, theta, grid, table.observations, kinds, options)
                            : sweep_parameter(family, theta, config.sweep.parameter, grid, table.observations, kinds,
                                              options);
    for (const auto& curve : curves) {
      const auto file = dir / ("sweep_" + to_string(curve.kind) + "_" + stem(path) + ".csv");
      write_file(file, [&](std::ostream& o) { write_sweep_csv(o, curve); }, log);
      failures += curve.failures();
      const double arg = curve.argmax();
      summary.push_back({{"trace", path},
                         {"steps", table.observations.rows()},
                         {"filter", to_string(curve.kind)},
                         {"file", file.string()},
                         {"argmax", std::isfinite(arg) ? json(arg) : json(nullptr)},
                         {"failures", curve.failures()},
                         {"normalized", curve.normalized.has_value()}});
    }
  }
  write_json(dir / "sweep_summary.json", summary, log);
  write_manifest(dir / "sweep_manifest.json", config, "sweep", json::object(), log);
  return failures ? kPartialResults : kSuccess;
}

int cmd_estimate(const RunConfig& config, std::ostream& log) {
  if (config.traces.empty()) throw ConfigError("estimate expects at least one trace");
  if (config.filter == "vwf-mixture") throw ConfigError("estimate does not support vwf-mixture");
  const FilterKind kind = filter_kind_from_string(config.filter);

  std::vector<std::string> free;
  auto start = default_start(config.model);
  for (const auto& [k, v] : config.estimate.theta_init) start[k] = v;
  start = merged({}, start, config.model, "estimate.theta_init");
  if (config.model == "lgssm") {
    if (start.empty()) throw ConfigError("estimate.theta_init must name the free lgssm parameters");
    for (const auto& n : ScalarLgssm::names())
      if (start.count(n)) free.push_back(n);
  }
  const auto family = make_family(config, free);
  const auto& names = family.parameter_names();
  Eigen::VectorXd theta0(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!start.count(names[i])) throw ConfigError("estimate.theta_init is missing '" + names[i] + "'");
    theta0(static_cast<Eigen::Index>(i)) = start.at(names[i]);
  }
  static_cast<void>(family.bind(theta0));
  const auto dir = output_dir(config);

  std::vector<TrialRecord> rows;
  std::vector<Eigen::VectorXd> successes;
  json failures = json::array();
  for (std::size_t t = 0; t < config.traces.size(); ++t) {
    TrialRecord row;
    row.trial = static_cast<int>(t) + 1;
    try {
      const auto table = load_trace(config.traces[t]);
      if (kind == FilterKind::pf) {
        std::vector<Eigen::VectorXd> subs;
        std::vector<double> lls;
        row.converged = true;
        for (int s = 0; s < config.estimate.sub_trials; ++s) {
          const auto r = mle(family, theta0, table.observations, kind,
                             likelihood_options(config, config.seed + static_cast<std::uint64_t>(s)),
                             config.estimate.optimizer);
          subs.push_back(r.theta_hat);
          lls.push_back(r.loglik);
          row.converged = row.converged && r.converged;
        }
        row.theta = componentwise_median(subs);
        std::sort(lls.begin(), lls.end());
        const auto m = lls.size();
        row.loglik = m % 2 ? lls[m / 2] : 0.5 * (lls[m / 2 - 1] + lls[m / 2]);
      } else {
        const auto r = mle(family, theta0, table.observations, kind, likelihood_options(config, config.seed),
                           config.estimate.optimizer);
        row.theta = r.theta_hat;
        row.loglik = r.loglik;
        row.converged = r.converged;
      }
      successes.push_back(row.theta);
      log << "trial " << row.trial << " loglik " << format_number(row.loglik) << (row.converged ? "" : " (not converged)")
          << '\n';
    } catch (const NumericalError& e) {
      row.theta = Eigen::VectorXd::Constant(theta0.size(), std::nan(""));
      row.loglik = std::nan("");
      row.converged = false;
      failures.push_back({{"trial", row.trial}, {"trace", config.traces[t]}, {"error", e.what()}});
      log << "trial " << row.trial << " failed: " << e.what() << '\n';
    }
    rows.push_back(row);
  }
  write_file(dir / ("trials_" + config.filter + ".csv"), [&](std::ostream& o) { write_trials_csv(o, names, rows); },
             log);

  json summary = {{"filter", config.filter},
                  {"parameters", names},
                  {"trials", rows.size()},
                  {"successes", successes.size()},
                  {"theta_init", to_object(names, theta0)},
                  {"failures", failures}};
  if (!successes.empty()) {
    const auto stats = trial_statistics(successes);
    summary["mean"] = to_object(names, stats.mean);
    if (stats.std) summary["std"] = to_object(names, *stats.std);
  }
  write_json(dir / ("summary_" + config.filter + ".json"), summary, log);
  write_manifest(dir / "estimate_manifest.json", config, "estimate", json::object(), log);
  if (successes.empty()) return kNumericalFailure;
  return failures.empty() ? kSuccess : kPartialResults;
}

// ---------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variational Wasserstein filtering toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, filter_kind, model;
  std::vector<std::string> traces;
  std::optional<std::uint64_t> seed;
  std::optional<int> quad_order, particles, components;
  std::optional<long> steps;

  std::vector<CLI::App*> commands;
  for (const char* name : {"simulate", "filter", "sweep", "estimate"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--filter", filter_kind, "vwf, vwf-mixture, ekf, pf or kalman");
    sub->add_option("--quad-order", quad_order, "Gauss-Hermite order");
    sub->add_option("--particles", particles, "particle count");
    sub->add_option("--components", components, "mixture components");
    sub->add_option("--steps", steps, "number of time steps K");
    sub->add_option("--model", model, "sv, bimodal or lgssm");
    sub->add_option("--trace", traces, "trace CSV (repeatable)");
    commands.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigError;
  }

  try {
    json j = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config '" + config_path + "'");
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError("config '" + config_path + "' is not valid JSON: " + e.what());
      }
    }
    if (!model.empty()) j["model"] = model;
    if (!out_dir.empty()) j["out"] = out_dir;
    if (seed) j["seed"] = *seed;
    if (!filter_kind.empty()) j["filter"] = filter_kind;
    if (quad_order) j["quadrature"]["order"] = *quad_order;
    if (particles) j["particles"] = *particles;
    if (components) j["components"] = *components;
    if (steps) j["steps"] = *steps;
    if (!traces.empty()) j["traces"] = traces;
    const RunConfig config = parse_config(j);

    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "simulate") return cmd_simulate(config, out);
    if (command == "filter") return cmd_filter(config, out);
    if (command == "sweep") return cmd_sweep(config, out);
    return cmd_estimate(config, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

}  // namespace wgf::cli
