// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "oracles.hpp"
#include "tdmpc/box_qp.hpp"
#include "tdmpc/config.hpp"
#include "tdmpc/integrator.hpp"
#include "tdmpc/simulation.hpp"

namespace tdmpc {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ExperimentConfig benchmark() {
  ExperimentConfig c =
      load_experiment_config(fs::path(TDMPC_SOURCE_DIR) / "configs" / "benchmark.yaml");
  c.output_dir.clear();
  return c;
}

VehicleState fine_rk4(VehicleState x, const ControlInput& u, const SlipParams& p, double dt, int n) {
  const VehicleGeometry g;
  const auto f = [&](const VehicleState& s) { return closure_derivative<double>(s, u, p, g); };
  const double h = dt / n;
  for (int i = 0; i < n; ++i) {
    const VehicleState a = f(x);
    const VehicleState b = f(x + 0.5 * h * a);
    const VehicleState c = f(x + 0.5 * h * b);
    const VehicleState d = f(x + h * c);
    x += h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
  }
  return x;
}

Outcome integrator_order() {
  testing::Gen gen(101);
  const VehicleGeometry g;
  const double dt = 2.0;
  double worst = 1e9;
  for (int trial = 0; trial < 20; ++trial) {
    // Positions do not enter the field; starting at the origin keeps the
    // oracle round-off below the finest RK4 error.
    VehicleState x = gen.state();
    x(st::kXt) = x(st::kYt) = x(st::kXi) = x(st::kYi) = 0.0;
    const ControlInput u = gen.input();
    const SlipParams p = gen.slips();
    const VehicleState truth = fine_rk4(x, u, p, dt, 2048);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int levels = 5;
    for (int i = 0; i < levels; ++i) {
      const double e = (integrate(x, u, p, g, dt, 4 << i) - truth).cwiseAbs().maxCoeff();
      const double lx = -std::log(2.0) * i;
      sx += lx;
      sy += std::log(e);
      sxx += lx * lx;
      sxy += lx * std::log(e);
    }
    worst = std::min(worst, (levels * sxy - sx * sy) / (levels * sxx - sx * sx));
  }
  return {worst >= 3.7, "min observed order " + fmt("%.3f", worst) + " over 20 states"};
}

Outcome sensitivities() {
  testing::Gen gen(102);
  const VehicleGeometry g;
  const double h = 1e-6;
  double worst = 0.0;
  const int samples = 1000;
  for (int trial = 0; trial < samples; ++trial) {
    const VehicleState x = gen.state();
    const ControlInput u = gen.input();
    const SlipParams p = gen.slips();
    const ShootingResult r = integrate_with_sensitivities(x, u, p, g, 0.2, 2);
    Mat<double, kStateDim, kStateDim + kInputDim + kParamDim> ad;
    ad << r.sens_state, r.sens_input, r.sens_param;
    for (int j = 0; j < ad.cols(); ++j) {
      Vec<double, kStateDim + kInputDim + kParamDim> zp, zm;
      zp << x, u, p;
      zm = zp;
      zp(j) += h;
      zm(j) -= h;
      const auto run = [&](const auto& z) {
        return integrate(VehicleState(z.template head<kStateDim>()),
                         ControlInput(z.template segment<kInputDim>(kStateDim)),
                         SlipParams(z.template tail<kParamDim>()), g, 0.2, 2);
      };
      const VehicleState fd = (run(zp) - run(zm)) / (2 * h);
      const double rel =
          ((ad.col(j) - fd).array().abs() / fd.array().abs().max(1.0)).maxCoeff();
      worst = std::max(worst, rel);
    }
  }
  return {worst < 1e-5, std::to_string(samples) + " samples, worst relative error " +
                            fmt("%.2e", worst)};
}

Outcome qp_oracle() {
  testing::Gen gen(103);
  double worst_diff = 0.0;
  double worst_kkt = 0.0;
  const int count = 500;
  for (int trial = 0; trial < count; ++trial) {
    const auto qp = gen.box_qp(1 + trial % 20);
    const auto sol = solve_box_qp(qp);
    const Eigen::VectorXd oracle = testing::projected_gradient_oracle(qp);
    worst_diff = std::max(worst_diff, (sol.primal - oracle).cwiseAbs().maxCoeff());
    worst_kkt = std::max(worst_kkt, kkt_residual(qp, sol.primal));
  }
  return {worst_diff < 1e-6 && worst_kkt < 1e-8,
          std::to_string(count) + " QPs of dimension 1-20, max |x - oracle| " +
              fmt("%.2e", worst_diff) + ", max KKT " + fmt("%.2e", worst_kkt)};
}

Outcome rti_fixed_point() {
  const ReferenceSettings front = benchmark().reference;
  const auto c = testing::tractor_tracking_case(Formulation::kTractorCooperative, front);
  RtiEngine engine;
  RtiIterate it = c.guess;
  double residual = 0.0;
  for (int k = 0; k < 20; ++k) {
    it = engine.step(c.problem, it, c.anchor);
    residual = testing::single_shooting_stationarity(c.problem, it, c.anchor);
  }
  ReferenceSettings rear = front;
  rear.tractor_wheelbase = 0.0;
  const int rear_iters = testing::iterations_to_stationarity(
      testing::tractor_tracking_case(Formulation::kTractorCooperative, rear), 20);
  return {residual < 1e-6, "stationarity after 20 iterations " + fmt("%.2e", residual) +
                               " (lookahead from the front axle); rear-axle anchor reaches 1e-6 " +
                               (rear_iters <= 20 ? "in " + std::to_string(rear_iters)
                                                 : std::string("not within 20")) +
                               " iterations"};
}

Outcome slip_recovery() {
  ExperimentConfig c = benchmark();
  const SlipParams truth = make_slips(0.8, 0.9, 0.85);
  c.plant.slips = SlipProfile::constant(truth);
  const RunResult r = run_experiment(c);
  double worst_late = 0.0;
  long worst_at = -1;
  double lo = 1.0, hi = 0.0;
  int late = 0;
  for (const SampleRecord& s : r.trace) {
    if (!s.estimate_valid) continue;
    lo = std::min(lo, s.estimate.slips.minCoeff());
    hi = std::max(hi, s.estimate.slips.maxCoeff());
    if (s.sample >= 200) {
      const double e = (s.estimate.slips - truth).cwiseAbs().maxCoeff();
      if (e > worst_late) {
        worst_late = e;
        worst_at = s.sample;
      }
      ++late;
    }
  }
  const bool ok = late > 0 && worst_late <= 0.05 && lo >= 0.25 && hi <= 1.0;
  return {ok, "max |p_hat - p| from sample 200 on " + fmt("%.4f", worst_late) + " (at sample " +
                  std::to_string(worst_at) + ") over " + std::to_string(late) +
                  " samples, range [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "]"};
}

std::string error_summary(const RunMetrics& m) {
  return "straight mean tractor " + fmt("%.2f", 100 * m.straight_tractor_mean) + " cm, trailer " +
         fmt("%.2f", 100 * m.straight_trailer_mean) + " cm; curve mean tractor " +
         fmt("%.2f", 100 * m.curve_tractor_mean) + " cm, trailer " +
         fmt("%.2f", 100 * m.curve_trailer_mean) + " cm";
}

Outcome tracking_quality() {
  const ExperimentConfig c = benchmark();
  const RunMetrics m = run_experiment(c).metrics;
  const bool ok = m.reached_end && m.straight_tractor_mean < 0.05 &&
                  m.straight_trailer_mean < 0.05 && m.curve_tractor_mean > 0.0 &&
                  m.curve_trailer_mean > 0.0 && m.curve_tractor_mean < 0.5 &&
                  m.curve_trailer_mean < 0.5;
  // Informational: the same run with the lookahead measured from the rear axle.
  ExperimentConfig rear = c;
  rear.reference.tractor_wheelbase = 0.0;
  const RunMetrics r = run_experiment(rear).metrics;
  return {ok, error_summary(m) + " [for reference, rear-axle anchor: " + error_summary(r) + "]"};
}

Outcome architecture_orderings() {
  const ExperimentConfig c = benchmark();
  const Comparison cmp =
      compare_variants(c, {ControllerVariant::kCooperative, ControllerVariant::kDecentralized,
                           ControllerVariant::kCentralized});
  std::string detail;
  bool ok = cmp.all_passed() && cmp.checks.size() == 4;
  for (const auto& chk : cmp.checks) {
    detail += (chk.passed ? "[ok] " : "[FAILED] ") + chk.name + ": " + chk.detail + "; ";
  }

  // (d) matched-seed runs with the two trailer formulations.
  ExperimentConfig coop = c;
  coop.controller.trailer_formulation = TrailerFormulation::kCooperative;
  ExperimentConfig indep = c;
  indep.controller.trailer_formulation = TrailerFormulation::kIndependent;
  const RunResult a = run_experiment(coop);
  const RunResult b = run_experiment(indep);
  double diff = a.trace.size() == b.trace.size() ? 0.0 : INFINITY;
  for (std::size_t k = 0; k < std::min(a.trace.size(), b.trace.size()); ++k) {
    diff = std::max(diff, (a.trace[k].command - b.trace[k].command).cwiseAbs().maxCoeff());
  }
  ok = ok && diff < 1e-8;
  detail += std::string(diff < 1e-8 ? "[ok] " : "[FAILED] ") +
            "cooperative vs independent trailer commands: max difference " + fmt("%.2e", diff) +
            " rad";
  return {ok, detail};
}

Outcome rho_oscillation() {
  ExperimentConfig trailer_heavy = benchmark();
  trailer_heavy.controller.rho1 = 0.1;
  trailer_heavy.controller.rho2 = 0.9;
  ExperimentConfig tractor_heavy = benchmark();
  tractor_heavy.controller.rho1 = 0.9;
  tractor_heavy.controller.rho2 = 0.1;
  const double tv_heavy = run_experiment(trailer_heavy).metrics.tractor_steering_variation;
  const double tv_nominal = run_experiment(tractor_heavy).metrics.tractor_steering_variation;
  return {tv_heavy > tv_nominal, "tractor steering total variation " + fmt("%.3f", tv_heavy) +
                                     " rad (rho2 = 0.9) vs " + fmt("%.3f", tv_nominal) +
                                     " rad (rho2 = 0.1)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "tdmpc_acceptance_determinism";
  fs::remove_all(root);
  ExperimentConfig a = benchmark();
  ExperimentConfig b = benchmark();
  a.output_dir = root / "a";
  b.output_dir = root / "b";
  run_experiment(a);
  run_experiment(b);
  const bool samples = slurp(a.output_dir / "samples.csv") == slurp(b.output_dir / "samples.csv");
  const bool plans = slurp(a.output_dir / "plans.csv") == slurp(b.output_dir / "plans.csv");
  const bool nonempty = !slurp(a.output_dir / "samples.csv").empty();
  fs::remove_all(root);
  return {samples && plans && nonempty,
          std::string("samples.csv ") + (samples ? "identical" : "differs") + ", plans.csv " +
              (plans ? "identical" : "differs")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace tdmpc

int main() {
  using namespace tdmpc;
  const std::vector<Criterion> criteria = {
      {1, "integrator order", 1.0, integrator_order},
      {2, "sensitivity correctness", 10.0, sensitivities},
      {3, "QP oracle equivalence", 30.0, qp_oracle},
      {4, "RTI fixed point", 5.0, rti_fixed_point},
      {5, "NMHE parameter recovery", 20.0, slip_recovery},
      {6, "tracking quality", 60.0, tracking_quality},
      {7, "architecture orderings", 180.0, architecture_orderings},
      {8, "rho oscillation", 120.0, rho_oscillation},
      {9, "determinism", 60.0, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.passed && in_time;
    if (!pass) ++failed;
    std::printf("%s criterion %d (%s): %s; runtime %.2f s (limit %.0f s%s)\n",
                pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs, c.limit_seconds,
                in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
