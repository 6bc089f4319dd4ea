#ifndef TDMPC_INTEGRATOR_HPP_
#define TDMPC_INTEGRATOR_HPP_

// Fixed-step classical Runge-Kutta integration over one shooting interval.
//
// Sensitivities are obtained by running the very same RK4 recursion in
// forward-mode automatic differentiation, which is the exact derivative of
// the discrete integrator map (internal numerical differentiation).

#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include "tdmpc/common.hpp"
#include "tdmpc/vehicle_model.hpp"

namespace tdmpc {

class IntegrationError : public std::runtime_error {
 public:
  explicit IntegrationError(int substep)
      : std::runtime_error("integration produced non-finite values at substep " +
                           std::to_string(substep)),
        substep_(substep) {}

  int substep() const { return substep_; }

 private:
  int substep_;
};

/// Integrates dx/dt = field(x) with `steps` RK4 substeps over `dt`.
template <typename Scalar, int N, typename Field>
Vec<Scalar, N> rk4(const Field& field, Vec<Scalar, N> x, double dt, int steps) {
  if (!(dt > 0.0) || steps < 1) {
    throw DomainError("rk4: interval length must be positive and steps >= 1");
  }
  const Scalar h(dt / steps);
  const Scalar half = h / Scalar(2);
  const Scalar sixth = h / Scalar(6);
  for (int i = 0; i < steps; ++i) {
    const Vec<Scalar, N> k1 = field(x);
    const Vec<Scalar, N> k2 = field(Vec<Scalar, N>(x + half * k1));
    const Vec<Scalar, N> k3 = field(Vec<Scalar, N>(x + half * k2));
    const Vec<Scalar, N> k4 = field(Vec<Scalar, N>(x + h * k3));
    x += sixth * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    if (!detail::values_finite(x)) throw IntegrationError(i);
  }
  return x;
}

/// End state plus Jacobians with respect to the first NA start-state entries
/// and the C interval-constant controls. States NA..N-1 are carried along
/// without derivatives (exogenous sub-states).
template <int N, int NA, int C>
struct IntervalSensitivity {
  Vec<double, N> end;
  Mat<double, NA, NA> d_state;
  Mat<double, NA, C> d_control;
};

template <int N, int NA, int C, typename Field>
IntervalSensitivity<N, NA, C> rk4_sensitivities(const Field& field, const Vec<double, N>& x0,
                                                const Vec<double, C>& controls, double dt,
                                                int steps) {
  static_assert(NA <= N);
  using Der = Vec<double, NA + C>;
  using Ad = Eigen::AutoDiffScalar<Der>;

  Vec<Ad, N> x;
  for (int i = 0; i < N; ++i) {
    x(i) = i < NA ? Ad(x0(i), NA + C, i) : Ad(x0(i), Der::Zero());
  }
  Vec<Ad, C> c;
  for (int j = 0; j < C; ++j) c(j) = Ad(controls(j), NA + C, NA + j);

  const auto rhs = [&](const Vec<Ad, N>& s) -> Vec<Ad, N> { return field(s, c); };
  const Vec<Ad, N> end = rk4<Ad, N>(rhs, x, dt, steps);

  IntervalSensitivity<N, NA, C> out;
  for (int i = 0; i < N; ++i) out.end(i) = end(i).value();
  for (int i = 0; i < NA; ++i) {
    const Der& d = end(i).derivatives();
    out.d_state.row(i) = d.template head<NA>().transpose();
    if constexpr (C > 0) out.d_control.row(i) = d.template tail<C>().transpose();
  }
  return out;
}

/// Shooting map of the full vehicle model over one interval.
struct ShootingResult {
  VehicleState end_state;
  Mat<double, kStateDim, kStateDim> sens_state;
  Mat<double, kStateDim, kInputDim> sens_input;
  Mat<double, kStateDim, kParamDim> sens_param;
};

/// Integrates the closure-form vehicle model with piecewise-constant inputs.
inline VehicleState integrate(const VehicleState& start, const ControlInput& input,
                              const SlipParams& slips, const VehicleGeometry& geom, double dt,
                              int steps) {
  const auto field = [&](const VehicleState& x) {
    return closure_derivative<double>(x, input, slips, geom);
  };
  return rk4<double, kStateDim>(field, start, dt, steps);
}

inline ShootingResult integrate_with_sensitivities(const VehicleState& start,
                                                   const ControlInput& input,
                                                   const SlipParams& slips,
                                                   const VehicleGeometry& geom, double dt,
                                                   int steps) {
  constexpr int kControls = kInputDim + kParamDim;
  Vec<double, kControls> controls;
  controls << input, slips;
  const auto field = [&geom](const auto& x, const auto& c) {
    using S = typename std::decay_t<decltype(x)>::Scalar;
    const InputVec<S> u = c.template head<kInputDim>();
    const ParamVec<S> p = c.template tail<kParamDim>();
    return closure_derivative<S>(x, u, p, geom);
  };
  const auto sens =
      rk4_sensitivities<kStateDim, kStateDim, kControls>(field, start, controls, dt, steps);
  ShootingResult r;
  r.end_state = sens.end;
  r.sens_state = sens.d_state;
  r.sens_input = sens.d_control.template leftCols<kInputDim>();
  r.sens_param = sens.d_control.template rightCols<kParamDim>();
  return r;
}

}  // namespace tdmpc

#endif  // TDMPC_INTEGRATOR_HPP_
