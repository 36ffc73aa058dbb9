#include "wgf/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace wgf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("wgf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    std::vector<const char*> argv{"wgf"};
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  std::string write_config(const json& j, const std::string& name = "config.json") {
    const auto path = (dir_ / name).string();
    std::ofstream(path) << j.dump(2);
    return path;
  }

  static json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  static long count_lines(const fs::path& p) {
    std::ifstream in(p);
    long n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
  }

  std::string simulate(const std::string& model, long steps, int seed, const std::string& sub = "traces") {
    const auto out = (dir_ / sub).string();
    EXPECT_EQ(run({"simulate", "--model", model, "--steps", std::to_string(steps), "--seed", std::to_string(seed),
                   "--out", out}),
              0)
        << err_.str();
    return (dir_ / sub / ("trace_" + model + "_K" + std::to_string(steps) + "_s" + std::to_string(seed) + ".csv")).string();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST(ParseConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(cli::parse_config(json{{"modle", "sv"}}), ConfigError);
  EXPECT_THROW(cli::parse_config(json{{"flow", {{"stepsize", 0.1}}}}), ConfigError);
  EXPECT_THROW(cli::parse_config(json{{"model", "garch"}}), ConfigError);
  EXPECT_THROW(cli::parse_config(json{{"steps", 0}}), ConfigError);
  EXPECT_THROW(cli::parse_config(json{{"flow", {{"step_size", -0.1}}}}), ConfigError);
  EXPECT_THROW(cli::parse_config(json{{"theta", {{"rho", 1.5}}}}), ConfigError);
  EXPECT_THROW(cli::parse_config(json{{"theta", {{"gamma", 0.5}}}}), ConfigError);
  EXPECT_THROW(cli::parse_config(json{{"filter", "ukf"}}), ConfigError);
  EXPECT_NO_THROW(cli::parse_config(json{{"meta", {{"anything", 1}}}}));
}

TEST(ParseConfig, RoundTrip) {
  json j = {{"model", "bimodal"}, {"steps", 123}, {"filter", "vwf-mixture"}, {"components", 3},
            {"quadrature", {{"order", 7}}}, {"flow", {{"tol", 1e-7}, {"form", "hessian"}}}, {"seed", 9}};
  const auto c = cli::parse_config(j);
  EXPECT_EQ(c.steps, 123);
  EXPECT_EQ(c.quadrature.order, 7);
  EXPECT_EQ(c.flow.form, CovarianceForm::hessian);
  const auto again = cli::parse_config(cli::to_json(c));
  EXPECT_EQ(cli::to_json(again), cli::to_json(c));
}

TEST_F(CliTest, SimulateWritesTraceAndManifest) {
  const auto trace = simulate("sv", 1000, 1);
  ASSERT_TRUE(fs::exists(trace));
  EXPECT_EQ(count_lines(trace), 1001);
  const auto manifest = fs::path(trace).replace_extension(".json");
  ASSERT_TRUE(fs::exists(manifest));
  const auto m = read_json(manifest);
  EXPECT_EQ(m["model"], "sv");
  EXPECT_EQ(m["seed"], 1);
  EXPECT_TRUE(m["meta"].contains("x0"));
  // The manifest is itself a valid config.
  EXPECT_NO_THROW(cli::parse_config(m));

  for (long k : {1500L, 2000L}) EXPECT_EQ(count_lines(simulate("sv", k, 1)), k + 1);
  EXPECT_EQ(count_lines(simulate("bimodal", 500, 2)), 501);
}

TEST_F(CliTest, SimulateIsReproducible) {
  const auto a = slurp(simulate("bimodal", 50, 4, "a"));
  const auto b = slurp(simulate("bimodal", 50, 4, "b"));
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, VwfOnLgssmMatchesKalman) {
  const auto trace = simulate("lgssm", 100, 3);
  const auto cfg = write_config({{"model", "lgssm"}, {"flow", {{"tol", 1e-10}, {"max_iters", 5000}}}});
  const auto out = (dir_ / "f").string();
  ASSERT_EQ(run({"filter", "--config", cfg, "--trace", trace, "--filter", "vwf", "--out", out}), 0) << err_.str();
  ASSERT_EQ(run({"filter", "--config", cfg, "--trace", trace, "--filter", "kalman", "--out", out}), 0) << err_.str();
  const double vwf = read_json(dir_ / "f" / "filter_vwf.json")["loglik"];
  const double kf = read_json(dir_ / "f" / "filter_kalman.json")["loglik"];
  EXPECT_NEAR(vwf, kf, 1e-6);
  EXPECT_EQ(count_lines(dir_ / "f" / "filter_vwf.csv"), 101);
  EXPECT_NO_THROW(cli::parse_config(read_json(dir_ / "f" / "filter_manifest.json")));
}

TEST_F(CliTest, MixtureOnBimodalWritesTwoComponents) {
  const auto trace = simulate("bimodal", 40, 5);
  const auto out = (dir_ / "m").string();
  const int code = run({"filter", "--model", "bimodal", "--trace", trace, "--filter", "vwf-mixture", "--components", "2",
                        "--out", out});
  ASSERT_TRUE(code == 0 || code == 4) << err_.str();
  EXPECT_EQ(count_lines(dir_ / "m" / "filter_vwf-mixture.csv"), 1 + 2 * 40);
  EXPECT_TRUE(fs::exists(dir_ / "m" / "collapses.json"));
}

TEST_F(CliTest, ParticleFilterDeterministic) {
  const auto trace = simulate("sv", 200, 2);
  for (const char* sub : {"p1", "p2"})
    ASSERT_EQ(run({"filter", "--model", "sv", "--trace", trace, "--filter", "pf", "--particles", "500", "--seed", "7",
                   "--out", (dir_ / sub).string()}),
              0)
        << err_.str();
  EXPECT_EQ(slurp(dir_ / "p1" / "filter_pf.csv"), slurp(dir_ / "p2" / "filter_pf.csv"));
}

TEST_F(CliTest, SweepNormalizedMaxIsOne) {
  const auto t1 = simulate("sv", 100, 1);
  const auto t2 = simulate("sv", 150, 1);
  const auto cfg = write_config({{"model", "sv"},
                                 {"particles", 100},
                                 {"sweep", {{"start", -0.9}, {"stop", -0.5}, {"step", 0.1}, {"filters", {"vwf", "ekf", "pf"}}}}});
  const auto out = (dir_ / "s").string();
  ASSERT_EQ(run({"sweep", "--config", cfg, "--trace", t1, "--trace", t2, "--out", out}), 0) << err_.str();
  int files = 0;
  for (const auto& entry : fs::directory_iterator(dir_ / "s")) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    std::ifstream in(entry.path());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "rho,loglik,normalized");
    double best = -1.0;
    int rows = 0;
    while (std::getline(in, line)) {
      best = std::max(best, std::stod(line.substr(line.rfind(',') + 1)));
      ++rows;
    }
    EXPECT_EQ(rows, 5);
    EXPECT_EQ(best, 1.0) << entry.path();
  }
  EXPECT_EQ(files, 6);
  const auto summary = read_json(dir_ / "s" / "sweep_summary.json");
  EXPECT_EQ(summary.size(), 6u);
}

TEST_F(CliTest, EstimateSingleTrialHasNoStd) {
  const auto trace = simulate("lgssm", 300, 1);
  const auto cfg = write_config({{"model", "lgssm"}, {"estimate", {{"theta_init", {{"q", 2.0}}}}}});
  const auto out = (dir_ / "e").string();
  ASSERT_EQ(run({"estimate", "--config", cfg, "--trace", trace, "--filter", "vwf", "--out", out}), 0) << err_.str();
  const auto summary = read_json(dir_ / "e" / "summary_vwf.json");
  EXPECT_EQ(summary["trials"], 1);
  EXPECT_EQ(summary["successes"], 1);
  EXPECT_TRUE(summary.contains("mean"));
  EXPECT_FALSE(summary.contains("std"));
  EXPECT_EQ(count_lines(dir_ / "e" / "trials_vwf.csv"), 2);
}

TEST_F(CliTest, EstimateParticleFilterUsesSubTrialMedian) {
  const auto trace = simulate("lgssm", 100, 2);
  const auto cfg = write_config({{"model", "lgssm"},
                                 {"particles", 200},
                                 {"estimate", {{"theta_init", {{"a", 0.5}}}, {"sub_trials", 3}}}});
  const auto out = (dir_ / "e").string();
  const int code = run({"estimate", "--config", cfg, "--trace", trace, "--filter", "pf", "--out", out});
  ASSERT_TRUE(code == 0 || code == 4) << err_.str();
  const auto summary = read_json(dir_ / "e" / "summary_pf.json");
  EXPECT_EQ(summary["trials"], 1);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({"simulate", "--config", (dir_ / "missing.json").string()}), 2);
  EXPECT_EQ(run({"simulate", "--config", write_config({{"bogus", 1}})}), 2);
  EXPECT_EQ(run({"filter", "--model", "sv"}), 2);  // no trace
  EXPECT_EQ(run({"frobnicate"}), 2);
  const auto trace = simulate("bimodal", 10, 1);
  EXPECT_EQ(run({"filter", "--model", "bimodal", "--filter", "kalman", "--trace", trace, "--out", (dir_ / "k").string()}), 2);
}
