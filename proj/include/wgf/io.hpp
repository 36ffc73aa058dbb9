/// @file io.hpp Plain-text CSV output for traces, filter runs, sweeps and estimates.
///
/// Every numeric field is printed with "%.12e"; a missing value is "nan".

#pragma once

#include "wgf/estimate.hpp"
#include "wgf/mixture.hpp"
#include "wgf/ssm.hpp"
#include "wgf/vwf.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace wgf {

std::string format_number(double value);

/// Header `k,x_1..x_d,y_1..y_m`; one row per step k = 1..K (x_0 is not written).
void write_trace_csv(std::ostream& out, const SimulationTrace& trace);

struct TraceTable {
  Eigen::MatrixXd states;        // K × d, may have zero columns
  Eigen::MatrixXd observations;  // K × m
};

/// Reads the format written by write_trace_csv; only the y_* columns are required.
TraceTable read_trace_csv(std::istream& in);

/// Header `k,m_1..m_d,P_11..P_dd,loglik_increment,iters` (P row-major).
void write_filter_csv(std::ostream& out, const FilterRun& run);

/// One row per (step, component): `k,component,weight,m_*,P_*,loglik_increment,iters`.
void write_mixture_csv(std::ostream& out, const MixtureFilterRun& run);

/// Header `<parameter>,loglik,normalized`.
void write_sweep_csv(std::ostream& out, const SweepResult& sweep);

struct TrialRecord {
  int trial = 0;
  Eigen::VectorXd theta;
  double loglik = 0.0;
  bool converged = false;
};

/// Header `trial,<names...>,loglik,converged`.
void write_trials_csv(std::ostream& out, const std::vector<std::string>& names,
                      const std::vector<TrialRecord>& trials);

}  // namespace wgf
