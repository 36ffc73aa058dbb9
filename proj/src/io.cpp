#include "wgf/io.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace wgf {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.12e", value);
  return buffer;
}

namespace {

void write_belief(std::ostream& out, const Belief& b) {
  for (Eigen::Index i = 0; i < b.dim(); ++i) out << ',' << format_number(b.mean(i));
  for (Eigen::Index i = 0; i < b.dim(); ++i)
    for (Eigen::Index j = 0; j < b.dim(); ++j) out << ',' << format_number(b.cov(i, j));
}

void belief_header(std::ostream& out, Eigen::Index d) {
  for (Eigen::Index i = 1; i <= d; ++i) out << ",m_" << i;
  for (Eigen::Index i = 1; i <= d; ++i)
    for (Eigen::Index j = 1; j <= d; ++j) out << ",P_" << i << j;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

void write_trace_csv(std::ostream& out, const SimulationTrace& trace) {
  const Eigen::Index d = trace.states.cols();
  const Eigen::Index m = trace.observations.cols();
  out << 'k';
  for (Eigen::Index i = 1; i <= d; ++i) out << ",x_" << i;
  for (Eigen::Index i = 1; i <= m; ++i) out << ",y_" << i;
  out << '\n';
  for (long k = 1; k <= trace.steps(); ++k) {
    out << k;
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_number(trace.states(k, i));
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << format_number(trace.observations(k - 1, i));
    out << '\n';
  }
}

TraceTable read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trace: empty file");
  const auto header = split(line);
  std::vector<std::size_t> x_cols, y_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].rfind("x_", 0) == 0) x_cols.push_back(c);
    if (header[c].rfind("y_", 0) == 0) y_cols.push_back(c);
  }
  if (y_cols.empty()) throw ConfigError("trace: no y_* columns");

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size())
      throw ConfigError("trace: line " + std::to_string(line_no) + " has the wrong number of fields");
    std::vector<double> row;
    for (const auto& f : fields) {
      try {
        row.push_back(f == "nan" ? std::nan("") : std::stod(f));
      } catch (const std::exception&) {
        throw ConfigError("trace: unparsable field '" + f + "' on line " + std::to_string(line_no));
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("trace: no observations");

  TraceTable table;
  const auto K = static_cast<Eigen::Index>(rows.size());
  table.states.resize(K, static_cast<Eigen::Index>(x_cols.size()));
  table.observations.resize(K, static_cast<Eigen::Index>(y_cols.size()));
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& row = rows[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < x_cols.size(); ++i) table.states(k, static_cast<Eigen::Index>(i)) = row[x_cols[i]];
    for (std::size_t i = 0; i < y_cols.size(); ++i)
      table.observations(k, static_cast<Eigen::Index>(i)) = row[y_cols[i]];
  }
  return table;
}

void write_filter_csv(std::ostream& out, const FilterRun& run) {
  const Eigen::Index d = run.filtered.empty() ? 0 : run.filtered.front().dim();
  out << 'k';
  belief_header(out, d);
  out << ",loglik_increment,iters\n";
  for (long k = 1; k <= run.steps(); ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    out << k;
    write_belief(out, run.filtered[i]);
    out << ',' << format_number(run.increments[i]) << ',' << run.iters_per_step[i] << '\n';
  }
}

void write_mixture_csv(std::ostream& out, const MixtureFilterRun& run) {
  const Eigen::Index d = run.filtered.empty() ? 0 : run.filtered.front().dim();
  out << "k,component,weight";
  belief_header(out, d);
  out << ",loglik_increment,iters\n";
  for (long k = 1; k <= run.steps(); ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    const auto& mix = run.filtered[i];
    for (std::size_t c = 0; c < mix.size(); ++c) {
      out << k << ',' << c + 1 << ',' << format_number(mix.weight());
      write_belief(out, mix.components[c]);
      out << ',' << format_number(run.increments[i]) << ',' << run.iters_per_step[i] << '\n';
    }
  }
}

void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << sweep.parameter << ",loglik,normalized\n";
  for (std::size_t i = 0; i < sweep.grid.size(); ++i) {
    const double norm = sweep.normalized ? (*sweep.normalized)[i] : std::nan("");
    out << format_number(sweep.grid[i]) << ',' << format_number(sweep.loglik[i]) << ',' << format_number(norm)
        << '\n';
  }
}

void write_trials_csv(std::ostream& out, const std::vector<std::string>& names,
                      const std::vector<TrialRecord>& trials) {
  out << "trial";
  for (const auto& n : names) out << ',' << n;
  out << ",loglik,converged\n";
  for (const auto& t : trials) {
    out << t.trial;
    for (Eigen::Index i = 0; i < t.theta.size(); ++i) out << ',' << format_number(t.theta(i));
    out << ',' << format_number(t.loglik) << ',' << (t.converged ? 1 : 0) << '\n';
  }
}

}  // namespace wgf
