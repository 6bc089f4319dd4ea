#include "tdmpc/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tdmpc/csv.hpp"

namespace tdmpc {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::vector<std::string>& sample_columns() {
  static const std::vector<std::string> cols = {
      "sample",       "time",         "x_t",          "y_t",          "theta_deg",
      "x_i",          "y_i",          "psi_deg",      "v",            "beta_deg",
      "true_mu",      "true_kappa",   "true_eta",     "meas_x_t",     "meas_y_t",
      "meas_x_i",     "meas_y_i",     "meas_beta_deg", "meas_v",      "meas_delta_t_deg",
      "meas_delta_i_deg", "est_valid", "est_degraded", "est_x_t",     "est_y_t",
      "est_theta_deg", "est_x_i",     "est_y_i",      "est_psi_deg",  "est_v",
      "est_beta_deg", "est_mu",       "est_kappa",    "est_eta",      "ref_x_t",
      "ref_y_t",      "ref_x_i",      "ref_y_i",      "path_x_t",     "path_y_t",
      "path_x_i",     "path_y_i",     "station_t",    "station_i",    "segment_t",
      "segment_i",    "error_t",      "error_i",      "cmd_delta_t_deg", "cmd_delta_i_deg",
      "act_delta_t_deg", "act_delta_i_deg", "limit_t_deg", "limit_i_deg", "held"};
  return cols;
}

std::vector<double> sample_row(const SampleRecord& r, const SteeringLimits& limits) {
  const auto& x = r.truth;
  const auto& m = r.measurement;
  const auto& e = r.estimate;
  return {static_cast<double>(r.sample),
          r.time,
          x(st::kXt),
          x(st::kYt),
          rad2deg(x(st::kTheta)),
          x(st::kXi),
          x(st::kYi),
          rad2deg(x(st::kPsi)),
          x(st::kSpeed),
          rad2deg(r.true_beta),
          r.true_slips(par::kMu),
          r.true_slips(par::kKappa),
          r.true_slips(par::kEta),
          m.x_t,
          m.y_t,
          m.x_i,
          m.y_i,
          rad2deg(m.beta),
          m.v,
          rad2deg(m.delta_t),
          rad2deg(m.delta_i),
          r.estimate_valid ? 1.0 : 0.0,
          e.degraded ? 1.0 : 0.0,
          e.state(st::kXt),
          e.state(st::kYt),
          rad2deg(e.state(st::kTheta)),
          e.state(st::kXi),
          e.state(st::kYi),
          rad2deg(e.state(st::kPsi)),
          e.state(st::kSpeed),
          rad2deg(e.beta),
          e.slips(par::kMu),
          e.slips(par::kKappa),
          e.slips(par::kEta),
          r.tractor_ref.position.x(),
          r.tractor_ref.position.y(),
          r.trailer_ref.position.x(),
          r.trailer_ref.position.y(),
          r.tractor_closest.position.x(),
          r.tractor_closest.position.y(),
          r.trailer_closest.position.x(),
          r.trailer_closest.position.y(),
          r.tractor_closest.station,
          r.trailer_closest.station,
          static_cast<double>(r.tractor_closest.segment),
          static_cast<double>(r.trailer_closest.segment),
          r.tractor_error,
          r.trailer_error,
          rad2deg(r.command(in::kTractorSteer)),
          rad2deg(r.command(in::kTrailerSteer)),
          rad2deg(r.actual_steering(in::kTractorSteer)),
          rad2deg(r.actual_steering(in::kTrailerSteer)),
          rad2deg(limits.tractor),
          rad2deg(limits.trailer),
          r.held ? 1.0 : 0.0};
}

void write_logs(const ExperimentConfig& config, const std::vector<SampleRecord>& trace,
                const RunMetrics* metrics) {
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  {
    std::ofstream os(config.output_dir / "samples.csv");
    CsvWriter w(os, sample_columns(), kLogSchemaVersion);
    for (const auto& r : trace) w.row(sample_row(r, config.controller.limits));
  }
  {
    std::ofstream os(config.output_dir / "plans.csv");
    CsvWriter w(os, {"sample", "subsystem", "node", "delta_deg"}, kLogSchemaVersion);
    for (const auto& r : trace) {
      for (const PredictedInputPlan* p : {&r.tractor_plan, &r.trailer_plan}) {
        for (std::size_t k = 0; k < p->inputs.size(); ++k) {
          w.row(r.sample, p->subsystem, static_cast<long>(k), rad2deg(p->inputs[k]));
        }
      }
    }
  }
  {
    std::ofstream os(config.output_dir / "timing.csv");
    CsvWriter w(os, {"sample", "tractor_s", "trailer_s", "central_s", "estimator_s"},
                kLogSchemaVersion);
    for (const auto& r : trace) {
      w.row(r.sample, r.tractor_seconds, r.trailer_seconds, r.central_seconds,
            r.estimator_seconds);
    }
  }
  if (metrics == nullptr) return;
  std::ofstream os(config.output_dir / "summary.txt");
  const RunMetrics& m = *metrics;
  os << "variant: " << m.variant << "\n"
     << "samples: " << m.samples << "\n"
     << "reached_end: " << (m.reached_end ? "true" : "false") << "\n"
     << "straight_tractor_mean_m: " << format_number(m.straight_tractor_mean) << "\n"
     << "straight_trailer_mean_m: " << format_number(m.straight_trailer_mean) << "\n"
     << "curve_tractor_mean_m: " << format_number(m.curve_tractor_mean) << "\n"
     << "curve_trailer_mean_m: " << format_number(m.curve_trailer_mean) << "\n"
     << "straight_tractor_max_m: " << format_number(m.straight_tractor_max) << "\n"
     << "straight_trailer_max_m: " << format_number(m.straight_trailer_max) << "\n"
     << "curve_tractor_max_m: " << format_number(m.curve_tractor_max) << "\n"
     << "curve_trailer_max_m: " << format_number(m.curve_trailer_max) << "\n"
     << "tractor_steering_variation_rad: " << format_number(m.tractor_steering_variation) << "\n"
     << "trailer_steering_variation_rad: " << format_number(m.trailer_steering_variation) << "\n"
     << "held_samples: " << m.held_samples << "\n"
     << "degraded_samples: " << m.degraded_samples << "\n"
     << "estimator_reinitializations: " << m.estimator_reinitializations << "\n";
  for (const auto& s : m.segments) {
    os << "segment_" << s.segment << (s.arc ? "_arc" : "_line")
       << ": tractor_mean_m=" << format_number(s.tractor_mean)
       << " tractor_max_m=" << format_number(s.tractor_max)
       << " trailer_mean_m=" << format_number(s.trailer_mean)
       << " trailer_max_m=" << format_number(s.trailer_max) << "\n";
  }
  const auto timing = [&os](const char* name, const TimingStats& t) {
    os << name << ": calls=" << t.calls << " mean_ms=" << format_number(1e3 * t.mean)
       << " p95_ms=" << format_number(1e3 * t.p95) << " max_ms=" << format_number(1e3 * t.max)
       << "\n";
  };
  timing("timing_tractor", m.tractor_timing);
  timing("timing_trailer", m.trailer_timing);
  timing("timing_central", m.central_timing);
  timing("timing_estimator", m.estimator_timing);
}

Eigen::Vector2d left_normal(double heading) {
  return {-std::sin(heading), std::cos(heading)};
}

}  // namespace

void ExperimentConfig::validate() const {
  controller.validate();
  estimator.validate();
  plant.validate();
  noise.validate();
  if (std::abs(controller.sample_time - estimator.sample_time) > 1e-12) {
    throw ConfigError("controller and estimator sample times must match");
  }
  if (!(initial.station >= 0.0) || initial.station > trajectory.length()) {
    throw ConfigError("initial station must lie on the trajectory");
  }
  if (!std::isfinite(initial.lateral_offset) || !std::isfinite(initial.heading_offset)) {
    throw ConfigError("initial offsets must be finite");
  }
  if (duration && !(*duration > 0.0)) throw ConfigError("duration must be positive");
  if (max_samples < 1) throw ConfigError("max_samples must be >= 1");
  if (!(reference.tractor_lookahead >= 0.0) || !(reference.trailer_lookahead >= 0.0)) {
    throw ConfigError("lookahead distances must be non-negative");
  }
}

PlantState initial_plant_state(const ExperimentConfig& config) {
  const TrajectorySpec& spec = config.trajectory;
  const InitialPlacement& init = config.initial;
  const VehicleGeometry& g = config.plant.geometry;

  const ReferencePoint t = spec.point_at(init.station);
  const Eigen::Vector2d tractor = t.position + init.lateral_offset * left_normal(t.heading);

  const double back = g.drawbar_length + g.trailer_length;
  Eigen::Vector2d trailer;
  double trailer_heading = 0.0;
  if (init.station - back >= 0.0) {
    const ReferencePoint b = spec.point_at(init.station - back);
    trailer = b.position;
    trailer_heading = b.heading;
  } else {
    // Extend the path backwards along its initial tangent.
    const ReferencePoint s = spec.point_at(0.0);
    const double extra = back - init.station;
    trailer = s.position - extra * Eigen::Vector2d(std::cos(s.heading), std::sin(s.heading));
    trailer_heading = s.heading;
  }
  trailer += init.lateral_offset * left_normal(trailer_heading);

  PlantState ps;
  ps.x = make_state(tractor.x(), tractor.y(), t.heading + init.heading_offset, trailer.x(),
                    trailer.y(), trailer_heading + init.heading_offset, config.plant.speed.at(0.0));
  ps.time = 0.0;
  return ps;
}

TimingStats TimingStats::of(std::vector<double> seconds) {
  TimingStats t;
  seconds.erase(std::remove_if(seconds.begin(), seconds.end(), [](double s) { return !(s > 0.0); }),
                seconds.end());
  t.calls = static_cast<int>(seconds.size());
  if (seconds.empty()) return t;
  std::sort(seconds.begin(), seconds.end());
  t.mean = std::accumulate(seconds.begin(), seconds.end(), 0.0) / seconds.size();
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * seconds.size())) - 1;
  t.p95 = seconds[std::min(idx, seconds.size() - 1)];
  t.max = seconds.back();
  return t;
}

RunMetrics compute_metrics(const ExperimentConfig& config, const std::vector<SampleRecord>& trace) {
  RunMetrics m;
  m.variant = to_string(config.controller.variant);
  m.samples = static_cast<int>(trace.size());
  const TrajectorySpec& spec = config.trajectory;
  m.segments.resize(static_cast<std::size_t>(spec.segment_count()));
  for (int i = 0; i < spec.segment_count(); ++i) {
    m.segments[static_cast<std::size_t>(i)].segment = i;
    m.segments[static_cast<std::size_t>(i)].arc = spec.is_arc(i);
  }
  struct Acc {
    double sum = 0.0;
    double max = 0.0;
    int n = 0;
    void add(double e) {
      sum += e;
      max = std::max(max, e);
      ++n;
    }
    double mean() const { return n > 0 ? sum / n : 0.0; }
  };
  std::vector<Acc> seg_t(m.segments.size()), seg_i(m.segments.size());
  Acc straight_t, straight_i, curve_t, curve_i;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const SampleRecord& r = trace[k];
    const auto st_t = static_cast<std::size_t>(r.tractor_closest.segment);
    const auto st_i = static_cast<std::size_t>(r.trailer_closest.segment);
    seg_t[st_t].add(r.tractor_error);
    seg_i[st_i].add(r.trailer_error);
    (spec.is_arc(r.tractor_closest.segment) ? curve_t : straight_t).add(r.tractor_error);
    (spec.is_arc(r.trailer_closest.segment) ? curve_i : straight_i).add(r.trailer_error);

    m.tractor_solve_seconds.push_back(r.tractor_seconds);
    m.trailer_solve_seconds.push_back(r.trailer_seconds);
    m.central_solve_seconds.push_back(r.central_seconds);
    m.estimator_seconds.push_back(r.estimator_seconds);
    if (r.estimate_valid) m.slip_error.push_back(r.estimate.slips - r.true_slips);
    if (r.held) ++m.held_samples;
    if (r.estimate.degraded) ++m.degraded_samples;
    if (k > 0) {
      const ControlInput d = r.command - trace[k - 1].command;
      m.tractor_steering_variation += std::abs(d(in::kTractorSteer));
      m.trailer_steering_variation += std::abs(d(in::kTrailerSteer));
    }
  }
  for (std::size_t i = 0; i < m.segments.size(); ++i) {
    SegmentErrors& s = m.segments[i];
    s.tractor_samples = seg_t[i].n;
    s.trailer_samples = seg_i[i].n;
    s.tractor_mean = seg_t[i].mean();
    s.tractor_max = seg_t[i].max;
    s.trailer_mean = seg_i[i].mean();
    s.trailer_max = seg_i[i].max;
  }
  m.straight_tractor_mean = straight_t.mean();
  m.straight_trailer_mean = straight_i.mean();
  m.curve_tractor_mean = curve_t.mean();
  m.curve_trailer_mean = curve_i.mean();
  m.straight_tractor_max = straight_t.max;
  m.straight_trailer_max = straight_i.max;
  m.curve_tractor_max = curve_t.max;
  m.curve_trailer_max = curve_i.max;
  m.tractor_timing = TimingStats::of(m.tractor_solve_seconds);
  m.trailer_timing = TimingStats::of(m.trailer_solve_seconds);
  m.central_timing = TimingStats::of(m.central_solve_seconds);
  m.estimator_timing = TimingStats::of(m.estimator_seconds);
  return m;
}

RunResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const TrajectorySpec& spec = config.trajectory;
  const double dt = config.controller.sample_time;
  const int horizon = config.controller.horizon;
  const long samples =
      config.duration ? std::lround(*config.duration / dt) : static_cast<long>(config.max_samples);

  Rng rng(config.seed);
  MovingHorizonEstimator nmhe(config.estimator);
  NmpcController controller(config.controller);
  PlantState plant = initial_plant_state(config);

  RunResult result;
  long k = 0;
  try {
    for (; k < samples; ++k) {
      SampleRecord r;
      r.sample = k;
      r.time = plant.time;
      r.truth = plant.x;
      r.true_slips = config.plant.slips.at(plant.time);
      r.true_beta = plant_hitch_angle(plant, config.plant);
      r.actual_steering = plant.steering;
      r.tractor_closest = closest_point(spec, plant.x.segment<2>(st::kXt));
      r.trailer_closest = closest_point(spec, plant.x.segment<2>(st::kXi));
      r.tractor_error = (r.tractor_closest.position - plant.x.segment<2>(st::kXt)).norm();
      r.trailer_error = (r.trailer_closest.position - plant.x.segment<2>(st::kXi)).norm();
      if (!config.duration && r.tractor_closest.station >= spec.length() - 1e-3) break;

      // sense
      r.measurement = sensor_sample(plant.x, plant.steering, r.true_beta, config.noise, rng, r.time);

      // estimate
      const auto t_est = Clock::now();
      const std::optional<Estimate> est = nmhe.step(r.measurement);
      r.estimator_seconds = seconds_since(t_est);

      ControlInput command = ControlInput::Zero();
      if (est) {
        r.estimate_valid = true;
        r.estimate = *est;
        // reference
        const Eigen::Vector3d pose = est->state.head<3>();
        const Eigen::Vector2d trailer = est->state.segment<2>(st::kXi);
        const double speed =
            std::max(1e-3, est->state(st::kSpeed) * est->slips(par::kMu));
        const ReferenceWindow refs =
            reference_window(spec, pose, trailer, horizon, dt, speed, config.reference);
        r.tractor_ref = refs.tractor.front();
        r.trailer_ref = refs.trailer.front();

        // control
        ControllerEstimate ce;
        ce.state = est->state;
        ce.slips = est->slips;
        ce.beta = est->beta;
        ce.measured_input = r.measurement.inputs();
        const ControlOutput out = controller.step(ce, refs, k);
        command = out.command;
        r.tractor_plan = out.tractor_plan;
        r.trailer_plan = out.trailer_plan;
        r.held = out.held;
        r.tractor_seconds = out.tractor_seconds;
        r.trailer_seconds = out.trailer_seconds;
        r.central_seconds = out.central_seconds;
      }
      r.command = command;

      // actuate
      plant = plant_step(plant, command, dt, config.plant);
      result.trace.push_back(std::move(r));
    }
  } catch (const std::exception& e) {
    if (!config.output_dir.empty()) write_logs(config, result.trace, nullptr);
    throw SimulationError(k, e.what());
  }

  result.metrics = compute_metrics(config, result.trace);
  result.metrics.reached_end = !config.duration && k < samples;
  result.metrics.estimator_reinitializations = nmhe.reinitializations();
  if (!config.output_dir.empty()) write_logs(config, result.trace, &result.metrics);
  return result;
}

bool Comparison::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const OrderingCheck& c) { return c.passed; });
}

Comparison compare_variants(const ExperimentConfig& config,
                            const std::vector<ControllerVariant>& variants) {
  if (variants.size() < 2) throw ConfigError("compare_variants needs at least two variants");
  Comparison c;
  for (ControllerVariant v : variants) {
    ExperimentConfig run = config;
    run.controller.variant = v;
    if (!config.output_dir.empty()) run.output_dir = config.output_dir / to_string(v);
    c.runs.push_back(run_experiment(run).metrics);
  }
  const auto find = [&](ControllerVariant v) -> const RunMetrics* {
    for (const auto& r : c.runs) {
      if (r.variant == to_string(v)) return &r;
    }
    return nullptr;
  };
  const RunMetrics* coop = find(ControllerVariant::kCooperative);
  const RunMetrics* dec = find(ControllerVariant::kDecentralized);
  const RunMetrics* cen = find(ControllerVariant::kCentralized);

  const auto straight = [](const RunMetrics& m) {
    return 0.5 * (m.straight_tractor_mean + m.straight_trailer_mean);
  };
  if (coop && dec) {
    c.checks.push_back({"decentralized straight error > cooperative", straight(*dec) > straight(*coop),
                        "decentralized " + format_number(straight(*dec)) + " m, cooperative " +
                            format_number(straight(*coop)) + " m"});
  }
  if (coop) {
    const double cdi = coop->tractor_timing.mean;
    const double idi = coop->trailer_timing.mean;
    c.checks.push_back({"iDiNMPC solve time < cDiNMPC", idi < cdi,
                        "iDi " + format_number(1e3 * idi) + " ms, cDi " + format_number(1e3 * cdi) +
                            " ms"});
    if (cen) {
      const double ce = cen->central_timing.mean;
      c.checks.push_back({"iDiNMPC solve time < CeNMPC", idi < ce,
                          "iDi " + format_number(1e3 * idi) + " ms, Ce " +
                              format_number(1e3 * ce) + " ms"});
      const double ratio = std::max(cdi, ce) / std::max(1e-12, std::min(cdi, ce));
      c.checks.push_back({"cDiNMPC and CeNMPC solve times within 50%", ratio <= 1.5,
                          "ratio " + format_number(ratio)});
    }
  }
  return c;
}

void write_comparison_csv(const Comparison& c, std::ostream& os) {
  CsvWriter w(os,
              {"variant", "samples", "straight_tractor_mean_m", "straight_trailer_mean_m",
               "curve_tractor_mean_m", "curve_trailer_mean_m", "tractor_solve_mean_ms",
               "trailer_solve_mean_ms", "central_solve_mean_ms", "estimator_mean_ms",
               "tractor_steering_variation_rad"});
  for (const auto& r : c.runs) {
    w.row(r.variant, r.samples, r.straight_tractor_mean, r.straight_trailer_mean,
          r.curve_tractor_mean, r.curve_trailer_mean, 1e3 * r.tractor_timing.mean,
          1e3 * r.trailer_timing.mean, 1e3 * r.central_timing.mean,
          1e3 * r.estimator_timing.mean, r.tractor_steering_variation);
  }
}

void export_plot_data(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  const CsvTable samples = CsvTable::read_file((run_dir / "samples.csv").string());
  const CsvTable timing = CsvTable::read_file((run_dir / "timing.csv").string());
  std::filesystem::create_directories(out_dir);

  const auto bundle = [&](const std::string& file, const CsvTable& src,
                          const std::vector<std::string>& cols) {
    src.require(cols);
    std::vector<const std::vector<double>*> data;
    for (const auto& c : cols) data.push_back(&src.column(c));
    std::ofstream os(out_dir / file);
    CsvWriter w(os, cols, kLogSchemaVersion);
    std::vector<double> row(cols.size());
    for (std::size_t i = 0; i < src.rows(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) row[j] = (*data[j])[i];
      w.row(row);
    }
  };
  bundle("trajectory.csv", samples,
         {"sample", "time", "x_t", "y_t", "path_x_t", "path_y_t", "ref_x_t", "ref_y_t", "x_i",
          "y_i", "path_x_i", "path_y_i", "ref_x_i", "ref_y_i"});
  bundle("error.csv", samples, {"sample", "time", "segment_t", "error_t", "segment_i", "error_i"});
  bundle("slips.csv", samples,
         {"sample", "time", "est_valid", "est_mu", "est_kappa", "est_eta", "true_mu",
          "true_kappa", "true_eta"});
  bundle("steering.csv", samples,
         {"sample", "time", "cmd_delta_t_deg", "act_delta_t_deg", "limit_t_deg",
          "cmd_delta_i_deg", "act_delta_i_deg", "limit_i_deg"});
  bundle("timing_series.csv", timing,
         {"sample", "tractor_s", "trailer_s", "central_s", "estimator_s"});
}

}  // namespace tdmpc
