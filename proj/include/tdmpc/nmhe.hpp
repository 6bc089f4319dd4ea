#ifndef TDMPC_NMHE_HPP_
#define TDMPC_NMHE_HPP_

// Moving-horizon estimation of the vehicle state and the slip coefficients.
//
// Over a window of M measurements the estimator solves
//
//   min  sum_k |(y_k - h(x_k, u_k, p)) / sigma_y|^2 + |(u_m,k - u_k) / sigma_u|^2
//        + sum_k |W w_k|^2 + |V_s ([x_0; p] - [x_hat; p_hat])|^2
//   s.t. x_{k+1} = Phi(x_k, u_k, p) + w_k,   0.25 <= p <= 1
//
// with one real-time iteration per sample. When the window is full, the
// oldest node is absorbed into the arrival cost (x_hat, p_hat, V_s) by an
// EKF measurement and time update linearized at the current solution.

#include <deque>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "tdmpc/plant.hpp"
#include "tdmpc/rti.hpp"
#include "tdmpc/vehicle_model.hpp"

namespace tdmpc {

inline constexpr int kAugmentedDim = kStateDim + kParamDim;

struct EstimatorConfig {
  OutputVec<double> output_sigma = (OutputVec<double>() << 0.03, 0.03, 0.03, 0.03, 0.0175, 0.01)
                                       .finished();
  ControlInput input_sigma = ControlInput(0.0175, 0.0175);
  SlipParams param_lower = SlipBounds::lower();
  SlipParams param_upper = SlipBounds::upper();
  int window = 15;
  double sample_time = 0.2;
  int integrator_steps = 2;
  /// Weight of the additive state corrections (residual w / (1 / weight)).
  VehicleState process_weight = VehicleState::Constant(1e3);
  /// Random-walk std dev of the slips per sample, used in the arrival-cost
  /// time update only.
  SlipParams param_drift_sigma = SlipParams::Constant(0.001);
  VehicleState prior_state_sigma =
      (VehicleState() << 0.05, 0.05, 0.3, 0.05, 0.05, 0.3, 0.2).finished();
  SlipParams prior_param_sigma = SlipParams::Constant(0.25);
  double min_fix_displacement = 0.05;
  VehicleGeometry geometry;

  void validate() const;
  /// V_s of the configured prior.
  MatrixXd prior_weight() const;
  /// Std devs of the time update noise on [x; p].
  VectorXd process_sigma() const;
};

struct ArrivalCost {
  VectorXd anchor;  // [x_hat; p_hat]
  MatrixXd weight;  // V_s, symmetric positive definite
};

struct EstimationWindow {
  std::deque<Measurement> measurements;
  int capacity = 15;
  ArrivalCost arrival;

  bool full() const { return static_cast<int>(measurements.size()) >= capacity; }
  /// Throws DomainError unless the window invariants hold.
  void check() const;
};

/// Linearization of the oldest window node at the current solution z*.
struct ArrivalLinearization {
  VectorXd z_star;           // [x_0*; p*]
  VectorXd predicted;        // [Phi(x_0*, u_0*, p*); p*]
  MatrixXd transition;       // d predicted / d z
  VectorXd output;           // h(x_0*, u_0*, p*)
  MatrixXd output_jacobian;  // d h / d z
  VectorXd measured;         // y_0
  VectorXd output_weight;    // 1 / sigma_y
};

struct ArrivalUpdate {
  ArrivalCost cost;
  bool reinitialized = false;
};

/// EKF update of the arrival cost in covariance form, P = (V_s' V_s)^-1:
/// measurement update at z*, propagation through the linearized shooting map
/// with additive noise, and V_s = P^{-1/2} (symmetric root). Falls back to
/// `fallback_weight` when the propagated covariance is not positive definite.
ArrivalUpdate update_arrival_cost(const ArrivalCost& prior, const ArrivalLinearization& lin,
                                  const VectorXd& process_sigma, const MatrixXd& fallback_weight);

/// Initial window from the first measurements: positions from the first fix,
/// yaws from the displacement to the first fix more than min_fix_displacement
/// away, slips at the box midpoint. Empty until such a fix exists.
std::optional<EstimationWindow> cold_start(const std::vector<Measurement>& first,
                                           const EstimatorConfig& config);

struct Estimate {
  double timestamp = 0.0;
  VehicleState state = VehicleState::Zero();
  SlipParams slips = SlipBounds::midpoint();
  ControlInput input = ControlInput::Zero();
  double beta = 0.0;
  bool degraded = false;
};

class MovingHorizonEstimator {
 public:
  explicit MovingHorizonEstimator(EstimatorConfig config);

  /// Adds a measurement and re-estimates. Empty until the cold start has
  /// enough motion to initialize the yaw angles.
  std::optional<Estimate> step(const Measurement& m);

  /// One RTI on the current window (the measurement must already be added).
  Estimate estimate_step();

  bool initialized() const { return initialized_; }
  const EstimationWindow& window() const { return window_; }
  const RtiIterate& iterate() const { return iterate_; }
  const EstimatorConfig& config() const { return config_; }
  int reinitializations() const { return reinitializations_; }

  OcpProblem build_problem() const;
  ArrivalLinearization linearize_oldest() const;
  /// Moves the oldest node into the arrival cost and drops it from the window.
  void absorb_oldest();

 private:

  EstimatorConfig config_;
  std::vector<Measurement> pending_;
  EstimationWindow window_;
  RtiIterate iterate_;
  RtiEngine engine_;
  Estimate last_;
  bool initialized_ = false;
  int reinitializations_ = 0;
};

}  // namespace tdmpc

#endif  // TDMPC_NMHE_HPP_
