#ifndef TDMPC_SIMULATION_HPP_
#define TDMPC_SIMULATION_HPP_

// Closed-loop experiment runner. Every sample runs
//
//   sense -> estimate -> reference window -> control (with plan exchange) -> actuate
//
// and logs one row per sample. The run is a pure function of the config and
// the seed except for the wall-clock solve times, which go to a separate file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdmpc/nmhe.hpp"
#include "tdmpc/nmpc.hpp"
#include "tdmpc/plant.hpp"
#include "tdmpc/reference.hpp"

namespace tdmpc {

inline constexpr const char* kLogSchemaVersion = "tdmpc-log 1";

/// Start pose relative to the path: arclength station, lateral offset to the
/// left of the tangent, heading offset. The default puts the trailer axle at
/// the start of the path.
struct InitialPlacement {
  double station = 2.4;
  double lateral_offset = 0.0;
  double heading_offset = 0.0;  // rad
};

struct ExperimentConfig {
  std::string name = "benchmark";
  ControllerConfig controller;
  EstimatorConfig estimator;
  PlantConfig plant;
  NoiseConfig noise;
  TrajectorySpec trajectory = TrajectorySpec::benchmark();
  ReferenceSettings reference;
  InitialPlacement initial;
  std::uint64_t seed = 1;
  /// Stop after this many seconds; empty: drive until the end of the path.
  std::optional<double> duration;
  /// Safety cap on the number of samples when driving to the path end.
  int max_samples = 5000;
  std::filesystem::path output_dir;

  void validate() const;
};

/// Initial plant state: tractor on the placement, trailer axle
/// drawbar + trailer length behind it along the path.
PlantState initial_plant_state(const ExperimentConfig& config);

struct SampleRecord {
  long sample = 0;
  double time = 0.0;
  VehicleState truth;
  SlipParams true_slips;
  double true_beta = 0.0;
  Measurement measurement;
  bool estimate_valid = false;
  Estimate estimate;
  ReferencePoint tractor_ref;  // node 0 of the window
  ReferencePoint trailer_ref;
  ReferencePoint tractor_closest;
  ReferencePoint trailer_closest;
  double tractor_error = 0.0;  // Euclidean distance to the path
  double trailer_error = 0.0;
  ControlInput command = ControlInput::Zero();
  ControlInput actual_steering = ControlInput::Zero();  // at the start of the sample
  PredictedInputPlan tractor_plan;
  PredictedInputPlan trailer_plan;
  bool held = false;
  double tractor_seconds = 0.0;
  double trailer_seconds = 0.0;
  double central_seconds = 0.0;
  double estimator_seconds = 0.0;
};

struct SegmentErrors {
  int segment = 0;
  bool arc = false;
  int tractor_samples = 0;
  int trailer_samples = 0;
  double tractor_mean = 0.0;
  double tractor_max = 0.0;
  double trailer_mean = 0.0;
  double trailer_max = 0.0;
};

struct TimingStats {
  int calls = 0;
  double mean = 0.0;
  double p95 = 0.0;
  double max = 0.0;

  static TimingStats of(std::vector<double> seconds);
};

struct RunMetrics {
  std::string variant;
  int samples = 0;
  bool reached_end = false;
  std::vector<SegmentErrors> segments;
  double straight_tractor_mean = 0.0;
  double straight_trailer_mean = 0.0;
  double curve_tractor_mean = 0.0;
  double curve_trailer_mean = 0.0;
  double straight_tractor_max = 0.0;
  double straight_trailer_max = 0.0;
  double curve_tractor_max = 0.0;
  double curve_trailer_max = 0.0;

  std::vector<double> tractor_solve_seconds;
  std::vector<double> trailer_solve_seconds;
  std::vector<double> central_solve_seconds;
  std::vector<double> estimator_seconds;
  TimingStats tractor_timing;
  TimingStats trailer_timing;
  TimingStats central_timing;
  TimingStats estimator_timing;

  std::vector<SlipParams> slip_error;  // estimate - truth, per valid sample
  double tractor_steering_variation = 0.0;  // sum |delta_t,k+1 - delta_t,k| of commands, rad
  double trailer_steering_variation = 0.0;
  int held_samples = 0;
  int degraded_samples = 0;
  int estimator_reinitializations = 0;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(long sample, const std::string& what)
      : std::runtime_error("sample " + std::to_string(sample) + ": " + what), sample_(sample) {}
  long sample() const { return sample_; }

 private:
  long sample_;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<SampleRecord> trace;
};

/// Runs one closed-loop experiment. Writes samples.csv, plans.csv, timing.csv
/// and summary.txt to config.output_dir when it is set; a failing module
/// aborts with SimulationError after flushing the rows logged so far.
RunResult run_experiment(const ExperimentConfig& config);

RunMetrics compute_metrics(const ExperimentConfig& config, const std::vector<SampleRecord>& trace);

struct OrderingCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Comparison {
  std::vector<RunMetrics> runs;
  std::vector<OrderingCheck> checks;
  bool all_passed() const;
};

/// Matched-seed runs of each variant (each in its own subdirectory of
/// config.output_dir when set) and the architecture orderings that apply to
/// the variants present.
Comparison compare_variants(const ExperimentConfig& config,
                            const std::vector<ControllerVariant>& variants);

void write_comparison_csv(const Comparison& c, std::ostream& os);

/// Plot-ready bundles from a run directory: trajectory.csv, error.csv,
/// slips.csv, steering.csv, timing_series.csv. Throws SchemaError when a log
/// column is missing.
void export_plot_data(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace tdmpc

#endif  // TDMPC_SIMULATION_HPP_
