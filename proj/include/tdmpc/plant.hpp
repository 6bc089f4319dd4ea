#ifndef TDMPC_PLANT_HPP_
#define TDMPC_PLANT_HPP_

// Simulated vehicle: true slips, speed profile, first-order steering
// actuators and noisy sensors.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "tdmpc/vehicle_model.hpp"

namespace tdmpc {

using Rng = std::mt19937_64;

/// Piecewise-linear in time, held constant outside the knot range.
struct SlipProfile {
  struct Knot {
    double time = 0.0;
    SlipParams slips = SlipParams::Constant(0.9);
  };
  std::vector<Knot> knots{Knot{}};

  static SlipProfile constant(const SlipParams& slips) { return {{Knot{0.0, slips}}}; }
  SlipParams at(double t) const;
  void validate() const;
};

struct SpeedProfile {
  struct Knot {
    double time = 0.0;
    double speed = 1.0;
  };
  std::vector<Knot> knots{Knot{}};

  static SpeedProfile constant(double v) { return {{Knot{0.0, v}}}; }
  double at(double t) const;
  void validate() const;
};

struct ActuatorConfig {
  double tractor_time_constant = 0.3;  // 0: ideal actuator
  double trailer_time_constant = 0.6;
  double tractor_rate_limit = deg2rad(45.0);  // rad/s, <= 0: unlimited
  double trailer_rate_limit = deg2rad(30.0);

  void validate() const;
};

struct PlantConfig {
  VehicleGeometry geometry;
  SlipProfile slips;
  SpeedProfile speed;
  ActuatorConfig actuator;
  SteeringLimits limits;
  int inner_steps = 20;

  void validate() const;
};

struct PlantState {
  VehicleState x = VehicleState::Zero();
  ControlInput steering = ControlInput::Zero();  // actual wheel / drawbar angles
  double time = 0.0;
};

/// Advances the true plant by dt: actuator lag and rate limits on the
/// commands, closure-form model integrated with inner_steps RK4 substeps,
/// speed from the profile.
PlantState plant_step(const PlantState& state, const ControlInput& command, double dt,
                      const PlantConfig& config);

/// True hitch angle from the closure relation.
double plant_hitch_angle(const PlantState& state, const PlantConfig& config);

struct NoiseConfig {
  double position = 0.03;   // m
  double beta = 0.0175;     // rad
  double speed = 0.1;       // m/s
  double steering = 0.0175; // rad

  void validate() const;
};

struct Measurement {
  double timestamp = 0.0;
  double x_t = 0.0;
  double y_t = 0.0;
  double x_i = 0.0;
  double y_i = 0.0;
  double beta = 0.0;
  double v = 0.0;
  double delta_t = 0.0;
  double delta_i = 0.0;

  /// [x_t, y_t, x_i, y_i, beta, v], the layout of measurement_function().
  OutputVec<double> outputs() const;
  ControlInput inputs() const { return ControlInput(delta_t, delta_i); }
};

Measurement sensor_sample(const VehicleState& x, const ControlInput& actual_input, double beta,
                          const NoiseConfig& noise, Rng& rng, double timestamp);

/// Same with a freshly seeded generator.
Measurement sensor_sample(const VehicleState& x, const ControlInput& actual_input, double beta,
                          const NoiseConfig& noise, std::uint64_t seed, double timestamp);

}  // namespace tdmpc

#endif  // TDMPC_PLANT_HPP_
