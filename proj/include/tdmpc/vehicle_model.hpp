#ifndef TDMPC_VEHICLE_MODEL_HPP_
#define TDMPC_VEHICLE_MODEL_HPP_

// Kinematic tricycle model of the tractor-trailer with slip coefficients.
//
// State layout (all angles unwrapped, radians):
//   [x_t, y_t, theta, x_i, y_i, psi, v]
// tractor rear-axle position and yaw, trailer axle position and yaw, and the
// longitudinal wheel speed (augmented, dv/dt = 0 in the model).
// Inputs: [delta_t, delta_i], tractor front-wheel and trailer steering.
// Parameters: [mu, kappa, eta], longitudinal slip and tractor / trailer
// side-slip.

#include <cmath>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include "tdmpc/common.hpp"

namespace tdmpc {

inline constexpr int kStateDim = 7;
inline constexpr int kInputDim = 2;
inline constexpr int kParamDim = 3;
inline constexpr int kOutputDim = 6;

namespace st {
enum Index : int { kXt = 0, kYt, kTheta, kXi, kYi, kPsi, kSpeed };
}
namespace in {
enum Index : int { kTractorSteer = 0, kTrailerSteer };
}
namespace par {
enum Index : int { kMu = 0, kKappa, kEta };
}
namespace out {
enum Index : int { kXt = 0, kYt, kXi, kYi, kBeta, kSpeed };
}

template <typename Scalar>
using StateVec = Vec<Scalar, kStateDim>;
template <typename Scalar>
using InputVec = Vec<Scalar, kInputDim>;
template <typename Scalar>
using ParamVec = Vec<Scalar, kParamDim>;
template <typename Scalar>
using OutputVec = Vec<Scalar, kOutputDim>;

using VehicleState = StateVec<double>;
using ControlInput = InputVec<double>;
using SlipParams = ParamVec<double>;

struct VehicleGeometry {
  double tractor_wheelbase = 1.4;  // L_t, front to rear axle
  double trailer_length = 1.3;     // L_i, RJ2 to trailer axle
  double drawbar_length = 1.1;     // l, RJ1 to RJ2

  void validate() const {
    if (!(tractor_wheelbase > 0.0 && trailer_length > 0.0 && drawbar_length > 0.0) ||
        !std::isfinite(tractor_wheelbase) || !std::isfinite(trailer_length) ||
        !std::isfinite(drawbar_length)) {
      throw DomainError("vehicle geometry lengths must be finite and strictly positive");
    }
  }
};

/// Box on the slip coefficients used for the estimates.
struct SlipBounds {
  static constexpr double kLower = 0.25;
  static constexpr double kUpper = 1.0;
  static SlipParams lower() { return SlipParams::Constant(kLower); }
  static SlipParams upper() { return SlipParams::Constant(kUpper); }
  static SlipParams midpoint() { return SlipParams::Constant(0.5 * (kLower + kUpper)); }
};

struct SteeringLimits {
  double tractor = deg2rad(35.0);
  double trailer = deg2rad(25.0);

  ControlInput upper() const { return ControlInput(tractor, trailer); }
  ControlInput lower() const { return -upper(); }
};

inline VehicleState make_state(double x_t, double y_t, double theta, double x_i, double y_i,
                               double psi, double v) {
  VehicleState x;
  x << x_t, y_t, theta, x_i, y_i, psi, v;
  return x;
}

inline SlipParams make_slips(double mu, double kappa, double eta) {
  return SlipParams(mu, kappa, eta);
}

inline ControlInput make_input(double delta_t, double delta_i) {
  return ControlInput(delta_t, delta_i);
}

namespace detail {

inline double value_of(double s) { return s; }

template <typename Der>
double value_of(const Eigen::AutoDiffScalar<Der>& s) {
  return s.value();
}

template <typename Derived>
bool values_finite(const Eigen::MatrixBase<Derived>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(value_of(v(i)))) return false;
  }
  return true;
}

}  // namespace detail

/// Right-hand side of the equations of motion. The hitch angle is an explicit
/// argument; callers decide how it evolves (closure relation in the plant and
/// estimator, see hitch_angle()).
template <typename Scalar>
StateVec<Scalar> state_derivative(const StateVec<Scalar>& x, const InputVec<Scalar>& u,
                                  const Scalar& beta, const ParamVec<Scalar>& p,
                                  const VehicleGeometry& geom) {
  using std::cos;
  using std::sin;
  using std::tan;
  if (!detail::values_finite(x) || !detail::values_finite(u) || !detail::values_finite(p) ||
      !std::isfinite(detail::value_of(beta))) {
    throw DomainError("state_derivative: non-finite state, input, hitch angle or slip");
  }
  const Scalar speed = p(par::kMu) * x(st::kSpeed);
  const Scalar steer = tan(p(par::kKappa) * u(in::kTractorSteer));
  const Scalar joint = p(par::kEta) * u(in::kTrailerSteer) + beta;

  StateVec<Scalar> dx;
  dx(st::kXt) = speed * cos(x(st::kTheta));
  dx(st::kYt) = speed * sin(x(st::kTheta));
  dx(st::kTheta) = speed * steer / geom.tractor_wheelbase;
  dx(st::kXi) = speed * cos(x(st::kPsi));
  dx(st::kYi) = speed * sin(x(st::kPsi));
  dx(st::kPsi) = speed / geom.trailer_length *
                 (sin(joint) - geom.drawbar_length / geom.tractor_wheelbase * steer * cos(joint));
  dx(st::kSpeed) = Scalar(0);
  return dx;
}

/// Hitch angle from the geometric closure eta * delta_i + beta = theta - psi.
template <typename Scalar>
Scalar hitch_angle(const StateVec<Scalar>& x, const InputVec<Scalar>& u,
                   const ParamVec<Scalar>& p) {
  return x(st::kTheta) - x(st::kPsi) - p(par::kEta) * u(in::kTrailerSteer);
}

/// Vector field with the hitch angle given by the closure relation. This is
/// the model of the simulated plant and of the estimator.
template <typename Scalar>
StateVec<Scalar> closure_derivative(const StateVec<Scalar>& x, const InputVec<Scalar>& u,
                                    const ParamVec<Scalar>& p, const VehicleGeometry& geom) {
  return state_derivative<Scalar>(x, u, hitch_angle<Scalar>(x, u, p), p, geom);
}

/// Predicted sensor outputs [x_t, y_t, x_i, y_i, beta, v].
template <typename Scalar>
OutputVec<Scalar> measurement_function(const StateVec<Scalar>& x, const InputVec<Scalar>& u,
                                       const ParamVec<Scalar>& p) {
  OutputVec<Scalar> y;
  y(out::kXt) = x(st::kXt);
  y(out::kYt) = x(st::kYt);
  y(out::kXi) = x(st::kXi);
  y(out::kYi) = x(st::kYi);
  y(out::kBeta) = hitch_angle<Scalar>(x, u, p);
  y(out::kSpeed) = x(st::kSpeed);
  return y;
}

}  // namespace tdmpc

#endif  // TDMPC_VEHICLE_MODEL_HPP_
