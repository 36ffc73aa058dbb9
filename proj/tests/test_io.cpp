#include "wgf/io.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace wgf;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(FormatNumber, Printf) {
  EXPECT_EQ(format_number(1.0), "1.000000000000e+00");
  EXPECT_EQ(format_number(-0.00125), "-1.250000000000e-03");
  EXPECT_EQ(format_number(std::nan("")), "nan");
}

TEST(TraceCsv, RoundTrip) {
  const auto trace = simulate(make_sv_model(SVParameters()), 25, 3);
  std::stringstream buf;
  write_trace_csv(buf, trace);
  const auto text = lines(buf.str());
  ASSERT_EQ(text.size(), 26u);
  EXPECT_EQ(text[0], "k,x_1,x_2,y_1");
  EXPECT_EQ(text[1].substr(0, 2), "1,");
  std::istringstream in(buf.str());
  const auto table = read_trace_csv(in);
  ASSERT_EQ(table.observations.rows(), 25);
  ASSERT_EQ(table.states.cols(), 2);
  EXPECT_LT((table.observations - trace.observations).cwiseAbs().maxCoeff(), 1e-11 * (1 + trace.observations.cwiseAbs().maxCoeff()));
  EXPECT_LT((table.states - trace.states.bottomRows(25)).cwiseAbs().maxCoeff(), 1e-11 * (1 + trace.states.cwiseAbs().maxCoeff()));
}

TEST(TraceCsv, ObservationsOnlyAndErrors) {
  std::istringstream ok("k,y_1\n1,0.5\n2,-1\n");
  const auto t = read_trace_csv(ok);
  EXPECT_EQ(t.observations.rows(), 2);
  EXPECT_EQ(t.states.cols(), 0);
  EXPECT_EQ(t.observations(1, 0), -1.0);
  std::istringstream no_y("k,x_1\n1,0.5\n");
  EXPECT_THROW(read_trace_csv(no_y), ConfigError);
  std::istringstream ragged("k,y_1\n1,0.5,3\n");
  EXPECT_THROW(read_trace_csv(ragged), ConfigError);
}

TEST(FilterCsv, Layout) {
  FilterRun run;
  Belief b{Vec::Zero(2), Mat::Identity(2, 2)};
  b.cov(0, 1) = 0.25;
  b.cov(1, 0) = 0.25;
  run.filtered = {b, b};
  run.increments = {-1.0, -2.0};
  run.iters_per_step = {3, 4};
  std::stringstream buf;
  write_filter_csv(buf, run);
  const auto text = lines(buf.str());
  ASSERT_EQ(text.size(), 3u);
  EXPECT_EQ(text[0], "k,m_1,m_2,P_11,P_12,P_21,P_22,loglik_increment,iters");
  EXPECT_NE(text[2].find("2.500000000000e-01"), std::string::npos);
  EXPECT_EQ(text[2].substr(text[2].size() - 2), ",4");
}

TEST(MixtureCsv, WeightsExact) {
  MixtureFilterRun run;
  const Belief b{Vec::Zero(1), Mat::Identity(1, 1)};
  run.filtered = {MixtureBelief{{b, b, b}}};
  run.increments = {0.0};
  run.iters_per_step = {1};
  std::stringstream buf;
  write_mixture_csv(buf, run);
  const auto text = lines(buf.str());
  ASSERT_EQ(text.size(), 4u);
  EXPECT_EQ(text[0].substr(0, 19), "k,component,weight,");
  for (int i = 1; i <= 3; ++i) {
    std::istringstream row(text[i]);
    std::string k, c, w;
    std::getline(row, k, ',');
    std::getline(row, c, ',');
    std::getline(row, w, ',');
    EXPECT_EQ(std::stod(c), i);
    EXPECT_EQ(w, format_number(1.0 / 3.0));
  }
}

TEST(SweepCsv, Layout) {
  SweepResult r;
  r.parameter = "rho";
  r.grid = {-0.8, -0.7};
  r.loglik = {-10.0, std::nan("")};
  std::stringstream buf;
  write_sweep_csv(buf, r);
  const auto text = lines(buf.str());
  ASSERT_EQ(text.size(), 3u);
  EXPECT_EQ(text[0], "rho,loglik,normalized");
  EXPECT_EQ(text[2], "-7.000000000000e-01,nan,nan");
}

TEST(TrialsCsv, Layout) {
  std::stringstream buf;
  write_trials_csv(buf, {"mu", "rho"}, {TrialRecord{1, Eigen::Vector2d(0.5, -0.8), -100.0, true}});
  const auto text = lines(buf.str());
  ASSERT_EQ(text.size(), 2u);
  EXPECT_EQ(text[0], "trial,mu,rho,loglik,converged");
  EXPECT_EQ(text[1].substr(0, 2), "1,");
}
