#ifndef TDMPC_NMPC_HPP_
#define TDMPC_NMPC_HPP_

// Tracking controllers for the tractor (subsystem 1) and the trailer
// (subsystem 2). Every formulation is a least-squares OCP solved with one
// real-time iteration per sample:
//
//   J_i = sum_k |x_i,k - x_i,ref|^2_Q_i + |u_i,k - u_i,ref|^2_R_i + |x_i,N - x_i,ref|^2_S_i
//
// with x_1 = (x_t, y_t, theta), x_2 = (x_i, y_i, psi). The cooperative tractor
// minimizes rho1 J1 + rho2 J2 over delta_t with the trailer plan fixed; the
// independent trailer minimizes J2 over delta_i with the tractor plan fixed.
//
// Prediction model. The hitch angle over the horizon follows the closure
// relation with the trailer steering frozen at its current estimate,
//
//   eta delta_i(t) + beta(t) = theta(t) - psi(t) + eta (delta_i(t) - delta_i_hat),
//
// so the trailer heading stays coupled to the tractor and the trailer
// steering acts relative to its present position.

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tdmpc/box_qp.hpp"
#include "tdmpc/reference.hpp"
#include "tdmpc/rti.hpp"
#include "tdmpc/vehicle_model.hpp"

namespace tdmpc {

enum class ControllerVariant { kCentralized, kCooperative, kIndependent, kDecentralized };
enum class TrailerFormulation { kIndependent, kCooperative };
enum class PlanExchange { kFreshTractorPlan, kPreviousSample };

std::string to_string(ControllerVariant v);
ControllerVariant parse_variant(const std::string& name);

struct SubsystemWeights {
  Eigen::Matrix3d q = Eigen::Vector3d(0.5, 0.5, 0.0).asDiagonal();
  double r = 5.0;
  Eigen::Matrix3d s = Eigen::Vector3d(5.0, 5.0, 0.0).asDiagonal();
};

/// Optional quadratic penalty on leaving a box of (x, y, yaw) for one body.
struct SoftStateBounds {
  bool enabled = false;
  Eigen::Vector3d lower = Eigen::Vector3d::Constant(-1e9);
  Eigen::Vector3d upper = Eigen::Vector3d::Constant(1e9);
  double weight = 10.0;
};

struct ControllerConfig {
  ControllerVariant variant = ControllerVariant::kCooperative;
  TrailerFormulation trailer_formulation = TrailerFormulation::kIndependent;
  PlanExchange exchange = PlanExchange::kFreshTractorPlan;
  /// Solve tractor and trailer on separate threads. Only meaningful with
  /// PlanExchange::kPreviousSample, where both solves are independent.
  bool concurrent = false;

  SubsystemWeights tractor;
  SubsystemWeights trailer;
  double rho1 = 0.9;
  double rho2 = 0.1;

  int horizon = 15;
  double sample_time = 0.2;
  int integrator_steps = 2;
  SteeringLimits limits;
  SoftStateBounds tractor_bounds;
  SoftStateBounds trailer_bounds;
  QpSettings qp;
  VehicleGeometry geometry;

  void validate() const;
};

/// What the controllers know at the start of a sample.
struct ControllerEstimate {
  VehicleState state;
  SlipParams slips = SlipParams::Ones();
  double beta = 0.0;                                  // estimated hitch angle
  ControlInput measured_input = ControlInput::Zero();  // input references
};

struct PredictedInputPlan {
  int subsystem = 0;  // 1 tractor, 2 trailer
  std::vector<double> inputs;
  long sample = 0;

  /// Value for horizon node k at `at_sample`, shifted by the plan age and
  /// holding the last element. An empty plan is the zero plan.
  double value(long at_sample, int k) const;
  static PredictedInputPlan zero(int subsystem, int horizon, long sample = 0);
};

/// One OCP per formulation; the distributed variants combine two of them.
enum class Formulation {
  kTractorCooperative,   // rho1 J1 + rho2 J2 over delta_t, trailer plan fixed
  kTractorOwn,           // J1 over delta_t (independent / decentralized tractor)
  kTrailerCooperative,   // rho1 J1 + rho2 J2 over delta_i, tractor plan fixed
  kTrailerIndependent,   // J2 over delta_i, tractor plan fixed
  kCentralized,          // rho1 J1 + rho2 J2 over both inputs
};

class ControllerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SubsystemOutput {
  ControlInput command = ControlInput::Zero();  // only the owned entries are meaningful
  PredictedInputPlan tractor_plan;               // set when delta_t is a decision
  PredictedInputPlan trailer_plan;               // set when delta_i is a decision
  double objective = 0.0;
  RtiReport report;
  double solve_seconds = 0.0;
  bool held = false;  // fail-safe: previous command repeated
};

/// Warm-started RTI solver for one formulation.
class SubsystemController {
 public:
  SubsystemController(Formulation formulation, ControllerConfig config);

  Formulation formulation() const { return formulation_; }

  /// `other_plan` is the fixed plan of the non-owned input (ignored for the
  /// centralized formulation).
  SubsystemOutput solve(const ControllerEstimate& estimate, const ReferenceWindow& refs,
                        const PredictedInputPlan& other_plan, long sample);

  /// The OCP solved at this sample, for inspection and tests.
  OcpProblem build_problem(const ControllerEstimate& estimate, const ReferenceWindow& refs,
                           const PredictedInputPlan& other_plan, long sample) const;
  /// Initial condition of the OCP state (the owned body states).
  VectorXd anchor(const ControllerEstimate& estimate) const;
  RtiIterate cold_iterate(const OcpProblem& problem, const ControllerEstimate& estimate) const;

  const std::optional<RtiIterate>& iterate() const { return iterate_; }
  void reset();

 private:
  Formulation formulation_;
  ControllerConfig config_;
  RtiEngine engine_;
  std::optional<RtiIterate> iterate_;
  SubsystemOutput last_output_;
  int consecutive_failures_ = 0;
  long last_sample_ = -1;
};

struct ControlOutput {
  ControlInput command = ControlInput::Zero();
  PredictedInputPlan tractor_plan;
  PredictedInputPlan trailer_plan;
  double tractor_objective = 0.0;
  double trailer_objective = 0.0;
  double tractor_seconds = 0.0;  // subsystem solvers; zero when unused
  double trailer_seconds = 0.0;
  double central_seconds = 0.0;
  int qp_iterations = 0;
  bool held = false;
};

/// Variant dispatcher owning the subsystem solvers and the plan exchange.
class NmpcController {
 public:
  explicit NmpcController(ControllerConfig config);

  const ControllerConfig& config() const { return config_; }

  ControlOutput step(const ControllerEstimate& estimate, const ReferenceWindow& refs, long sample);

  SubsystemOutput tractor_control_step(const ControllerEstimate& estimate,
                                       const ReferenceWindow& refs,
                                       const PredictedInputPlan& trailer_plan, long sample);
  SubsystemOutput trailer_control_step_cooperative(const ControllerEstimate& estimate,
                                                   const ReferenceWindow& refs,
                                                   const PredictedInputPlan& tractor_plan,
                                                   long sample);
  SubsystemOutput trailer_control_step_independent(const ControllerEstimate& estimate,
                                                   const ReferenceWindow& refs,
                                                   const PredictedInputPlan& tractor_plan,
                                                   long sample);
  SubsystemOutput centralized_control_step(const ControllerEstimate& estimate,
                                           const ReferenceWindow& refs, long sample);
  ControlOutput decentralized_control_step(const ControllerEstimate& estimate,
                                           const ReferenceWindow& refs, long sample);

  SubsystemController& subsystem(Formulation f);

 private:
  ControlOutput distributed_step(Formulation tractor_f, Formulation trailer_f,
                                 const ControllerEstimate& estimate, const ReferenceWindow& refs,
                                 long sample, bool zero_tractor_plan);

  ControllerConfig config_;
  std::map<Formulation, std::unique_ptr<SubsystemController>> solvers_;
  PredictedInputPlan last_tractor_plan_;
  PredictedInputPlan last_trailer_plan_;
};

}  // namespace tdmpc

#endif  // TDMPC_NMPC_HPP_
