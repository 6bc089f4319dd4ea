#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "tdmpc/config.hpp"
#include "tdmpc/csv.hpp"
#include "tdmpc/simulation.hpp"

namespace tdmpc {
namespace {

namespace fs = std::filesystem;

const fs::path kBenchmark = fs::path(TDMPC_SOURCE_DIR) / "configs" / "benchmark.yaml";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "tdmpc_tests" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TEST(Config, BenchmarkFileParses) {
  const ExperimentConfig c = load_experiment_config(kBenchmark);
  EXPECT_EQ(c.controller.variant, ControllerVariant::kCooperative);
  EXPECT_EQ(c.controller.horizon, 15);
  EXPECT_DOUBLE_EQ(c.controller.rho1, 0.9);
  EXPECT_DOUBLE_EQ(c.controller.limits.tractor, deg2rad(35));
  EXPECT_DOUBLE_EQ(c.controller.limits.trailer, deg2rad(25));
  EXPECT_FALSE(c.duration.has_value());
  EXPECT_NEAR(c.trajectory.length(), 80.0 + 10.0 * kPi, 1e-12);
  EXPECT_DOUBLE_EQ(c.reference.tractor_wheelbase, 1.4);
  EXPECT_DOUBLE_EQ(c.initial.station, 2.4);
  EXPECT_EQ(c.plant.slips.at(0.0), SlipParams::Constant(0.9));
}

TEST(Config, EmptyFileGivesDefaults) {
  const ExperimentConfig c = parse_experiment_config("{}");
  EXPECT_EQ(c.controller.horizon, ControllerConfig{}.horizon);
  EXPECT_EQ(c.seed, 1u);
}

TEST(Config, TractorAnchorSelectsWheelbase) {
  EXPECT_DOUBLE_EQ(
      parse_experiment_config("reference: {tractor_anchor: rear_axle}").reference.tractor_wheelbase,
      0.0);
  try {
    parse_experiment_config("reference: {tractor_anchor: hitch}");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("tractor_anchor"), std::string::npos);
  }
}

TEST(Config, ErrorsNameTheKey) {
  const auto message = [](const std::string& yaml) -> std::string {
    try {
      parse_experiment_config(yaml);
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message("controller: {horizn: 10}").find("horizn"), std::string::npos);
  EXPECT_NE(message("controller: {horizon: ten}").find("horizon"), std::string::npos);
  EXPECT_NE(message("controller: {variant: greedy}"), "");
  EXPECT_NE(message("controller: {rho1: -1}"), "");
  EXPECT_NE(message("estimator: {output_sigma: [1, 2]}").find("output_sigma"), std::string::npos);
  EXPECT_THROW(load_experiment_config("/nonexistent/config.yaml"), ConfigError);
}

TEST(Simulation, InitialPlacementOnPath) {
  ExperimentConfig c;
  const PlantState s = initial_plant_state(c);
  EXPECT_NEAR(s.x(st::kXt), 2.4, 1e-12);
  EXPECT_NEAR(s.x(st::kXi), 0.0, 1e-12);
  EXPECT_EQ(s.x(st::kYt), 0.0);
  EXPECT_EQ(s.x(st::kYi), 0.0);
  c.initial.station = 1.0;
  c.initial.lateral_offset = 0.5;
  const PlantState t = initial_plant_state(c);
  EXPECT_NEAR(t.x(st::kXi), -1.4, 1e-12);
  EXPECT_NEAR(t.x(st::kYi), 0.5, 1e-12);
  EXPECT_NEAR(t.x(st::kYt), 0.5, 1e-12);
}

TEST(Simulation, TimingStats) {
  std::vector<double> s = {0.0};
  for (int i = 1; i <= 20; ++i) s.push_back(i);
  const TimingStats t = TimingStats::of(s);
  EXPECT_EQ(t.calls, 20);
  EXPECT_DOUBLE_EQ(t.mean, 10.5);
  EXPECT_DOUBLE_EQ(t.p95, 19.0);
  EXPECT_DOUBLE_EQ(t.max, 20.0);
  EXPECT_EQ(TimingStats::of({}).calls, 0);
}

TEST(Simulation, MetricsSplitStraightAndCurve) {
  ExperimentConfig c;
  std::vector<SampleRecord> trace(4);
  const int segs[] = {0, 1, 1, 2};
  const double err[] = {0.01, 0.2, 0.4, 0.03};
  for (int k = 0; k < 4; ++k) {
    trace[k].sample = k;
    trace[k].tractor_closest.segment = segs[k];
    trace[k].trailer_closest.segment = 0;
    trace[k].tractor_error = err[k];
    trace[k].trailer_error = 0.1;
    trace[k].command = ControlInput(0.1 * (k % 2), 0.0);
  }
  const RunMetrics m = compute_metrics(c, trace);
  EXPECT_DOUBLE_EQ(m.straight_tractor_mean, 0.02);
  EXPECT_DOUBLE_EQ(m.curve_tractor_mean, 0.3);
  EXPECT_DOUBLE_EQ(m.curve_tractor_max, 0.4);
  EXPECT_DOUBLE_EQ(m.straight_trailer_mean, 0.1);
  EXPECT_EQ(m.segments[1].tractor_samples, 2);
  EXPECT_DOUBLE_EQ(m.tractor_steering_variation, 0.3);
}

ExperimentConfig short_run(const std::string& dir) {
  ExperimentConfig c;
  c.duration = 12.0;
  c.output_dir = scratch(dir);
  return c;
}

TEST(Simulation, LogsAreDeterministic) {
  ExperimentConfig a = short_run("det_a");
  ExperimentConfig b = short_run("det_b");
  run_experiment(a);
  run_experiment(b);
  EXPECT_EQ(slurp(a.output_dir / "samples.csv"), slurp(b.output_dir / "samples.csv"));
  EXPECT_EQ(slurp(a.output_dir / "plans.csv"), slurp(b.output_dir / "plans.csv"));
  ExperimentConfig other = short_run("det_c");
  other.seed = 2;
  run_experiment(other);
  EXPECT_NE(slurp(a.output_dir / "samples.csv"), slurp(other.output_dir / "samples.csv"));
}

TEST(Simulation, SampleLogSchema) {
  const ExperimentConfig c = short_run("schema");
  const RunResult r = run_experiment(c);
  const CsvTable t = CsvTable::read_file((c.output_dir / "samples.csv").string());
  EXPECT_EQ(t.rows(), r.trace.size());
  EXPECT_EQ(r.trace.size(), 60u);
  EXPECT_EQ(t.comments().front().find(kLogSchemaVersion) != std::string::npos, true);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    EXPECT_DOUBLE_EQ(t.column("limit_t_deg")[i], 35.0);
    EXPECT_DOUBLE_EQ(t.column("limit_i_deg")[i], 25.0);
    EXPECT_LE(std::abs(t.column("cmd_delta_t_deg")[i]), 35.0 + 1e-9);
    EXPECT_LE(std::abs(t.column("cmd_delta_i_deg")[i]), 25.0 + 1e-9);
    EXPECT_NEAR(t.column("error_t")[i], r.trace[i].tractor_error, 1e-9);
  }
  const CsvTable plans = CsvTable::read_file((c.output_dir / "plans.csv").string());
  plans.require({"sample", "subsystem", "node", "delta_deg"});
  EXPECT_TRUE(fs::exists(c.output_dir / "summary.txt"));
}

TEST(Simulation, PlotExport) {
  const ExperimentConfig c = short_run("export");
  run_experiment(c);
  const fs::path out = scratch("export_plots");
  export_plot_data(c.output_dir, out);
  for (const char* f : {"trajectory.csv", "error.csv", "slips.csv", "steering.csv",
                        "timing_series.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_EQ(CsvTable::read_file((out / "error.csv").string()).rows(), 60u);

  // A log missing a column is rejected by name.
  const fs::path broken = scratch("export_broken");
  fs::create_directories(broken);
  fs::copy_file(c.output_dir / "timing.csv", broken / "timing.csv");
  {
    std::ofstream os(broken / "samples.csv");
    CsvWriter w(os, {"sample", "time"}, kLogSchemaVersion);
    w.row(0L, 0.0);
  }
  EXPECT_THROW(export_plot_data(broken, scratch("export_broken_out")), SchemaError);
}

TEST(Simulation, NoiseFreeStraightTracking) {
  ExperimentConfig c;
  c.trajectory = TrajectorySpec({LineSegment{{0.0, 0.0}, {60.0, 0.0}}});
  c.noise = NoiseConfig{0, 0, 0, 0};
  c.duration = 30.0;
  const RunResult r = run_experiment(c);
  for (std::size_t k = 50; k < r.trace.size(); ++k) {
    EXPECT_LT(r.trace[k].tractor_error, 0.01) << "sample " << k;
    EXPECT_LT(r.trace[k].trailer_error, 0.01) << "sample " << k;
  }
  EXPECT_EQ(r.metrics.held_samples, 0);
}

TEST(Simulation, RejectsInconsistentConfig) {
  ExperimentConfig c;
  c.estimator.sample_time = 0.1;
  EXPECT_THROW(run_experiment(c), ConfigError);
  c = ExperimentConfig{};
  c.initial.station = 1e3;
  EXPECT_THROW(run_experiment(c), ConfigError);
  EXPECT_THROW(compare_variants(ExperimentConfig{}, {ControllerVariant::kCooperative}),
               ConfigError);
}

}  // namespace
}  // namespace tdmpc
