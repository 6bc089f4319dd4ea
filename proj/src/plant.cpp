#include "tdmpc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tdmpc/integrator.hpp"

namespace tdmpc {
namespace {

template <typename Knot, typename Get>
auto interpolate(const std::vector<Knot>& knots, double t, Get get) {
  if (t <= knots.front().time) return get(knots.front());
  if (t >= knots.back().time) return get(knots.back());
  const auto it = std::upper_bound(knots.begin(), knots.end(), t,
                                   [](double v, const Knot& k) { return v < k.time; });
  const Knot& b = *it;
  const Knot& a = *(it - 1);
  const double s = (t - a.time) / (b.time - a.time);
  return decltype(get(a))(get(a) + s * (get(b) - get(a)));
}

template <typename Knot>
void check_times(const std::vector<Knot>& knots, const char* what) {
  if (knots.empty()) throw DomainError(std::string(what) + " profile needs at least one knot");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (!std::isfinite(knots[i].time) || (i > 0 && !(knots[i].time > knots[i - 1].time))) {
      throw DomainError(std::string(what) + " profile times must be finite and increasing");
    }
  }
}

double lag(double actual, double command, double h, double tau, double rate) {
  double next = tau > 0.0 ? actual + (command - actual) * (1.0 - std::exp(-h / tau)) : command;
  if (rate > 0.0) next = std::clamp(next, actual - rate * h, actual + rate * h);
  return next;
}

}  // namespace

SlipParams SlipProfile::at(double t) const {
  return interpolate(knots, t, [](const Knot& k) -> SlipParams { return k.slips; });
}

void SlipProfile::validate() const {
  check_times(knots, "slip");
  for (const auto& k : knots) {
    if ((k.slips.array() < SlipBounds::kLower).any() || (k.slips.array() > SlipBounds::kUpper).any()) {
      throw DomainError("plant slips must lie in [0.25, 1]");
    }
  }
}

double SpeedProfile::at(double t) const {
  return interpolate(knots, t, [](const Knot& k) { return k.speed; });
}

void SpeedProfile::validate() const {
  check_times(knots, "speed");
  for (const auto& k : knots) {
    if (!(k.speed >= 0.0) || !std::isfinite(k.speed)) {
      throw DomainError("speed profile values must be finite and non-negative");
    }
  }
}

void ActuatorConfig::validate() const {
  if (!(tractor_time_constant >= 0.0) || !(trailer_time_constant >= 0.0)) {
    throw DomainError("actuator time constants must be non-negative");
  }
  if (std::isnan(tractor_rate_limit) || std::isnan(trailer_rate_limit)) {
    throw DomainError("actuator rate limits must be numbers");
  }
}

void PlantConfig::validate() const {
  geometry.validate();
  slips.validate();
  speed.validate();
  actuator.validate();
  if (inner_steps < 1) throw DomainError("plant inner_steps must be >= 1");
  if (!(limits.tractor > 0.0) || !(limits.trailer > 0.0)) {
    throw DomainError("steering limits must be positive");
  }
}

PlantState plant_step(const PlantState& state, const ControlInput& command, double dt,
                      const PlantConfig& config) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("plant_step: dt must be positive");
  if (!command.allFinite()) throw DomainError("plant_step: non-finite steering command");
  const ControlInput cmd(std::clamp(command(0), -config.limits.tractor, config.limits.tractor),
                         std::clamp(command(1), -config.limits.trailer, config.limits.trailer));
  PlantState s = state;
  const double h = dt / config.inner_steps;
  for (int i = 0; i < config.inner_steps; ++i) {
    const SlipParams p = config.slips.at(s.time);
    s.x(st::kSpeed) = config.speed.at(s.time);
    const ControlInput u = s.steering;
    const auto field = [&](const VehicleState& x) {
      return closure_derivative<double>(x, u, p, config.geometry);
    };
    s.x = rk4<double, kStateDim>(field, s.x, h, 1);
    s.steering(0) = lag(s.steering(0), cmd(0), h, config.actuator.tractor_time_constant,
                        config.actuator.tractor_rate_limit);
    s.steering(1) = lag(s.steering(1), cmd(1), h, config.actuator.trailer_time_constant,
                        config.actuator.trailer_rate_limit);
    s.time = state.time + (i + 1) * h;
  }
  s.time = state.time + dt;
  s.x(st::kSpeed) = config.speed.at(s.time);
  return s;
}

double plant_hitch_angle(const PlantState& state, const PlantConfig& config) {
  return hitch_angle<double>(state.x, state.steering, config.slips.at(state.time));
}

void NoiseConfig::validate() const {
  for (double s : {position, beta, speed, steering}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw DomainError("noise std devs must be >= 0");
  }
}

OutputVec<double> Measurement::outputs() const {
  OutputVec<double> y;
  y << x_t, y_t, x_i, y_i, beta, v;
  return y;
}

Measurement sensor_sample(const VehicleState& x, const ControlInput& actual_input, double beta,
                          const NoiseConfig& noise, Rng& rng, double timestamp) {
  noise.validate();
  std::normal_distribution<double> unit(0.0, 1.0);
  // Draw every channel even when its std dev is zero so the random stream
  // does not depend on the noise settings.
  const auto noisy = [&](double truth, double sigma) { return truth + sigma * unit(rng); };
  Measurement m;
  m.timestamp = timestamp;
  m.x_t = noisy(x(st::kXt), noise.position);
  m.y_t = noisy(x(st::kYt), noise.position);
  m.x_i = noisy(x(st::kXi), noise.position);
  m.y_i = noisy(x(st::kYi), noise.position);
  m.beta = noisy(beta, noise.beta);
  m.v = noisy(x(st::kSpeed), noise.speed);
  m.delta_t = noisy(actual_input(in::kTractorSteer), noise.steering);
  m.delta_i = noisy(actual_input(in::kTrailerSteer), noise.steering);
  return m;
}

Measurement sensor_sample(const VehicleState& x, const ControlInput& actual_input, double beta,
                          const NoiseConfig& noise, std::uint64_t seed, double timestamp) {
  Rng rng(seed);
  return sensor_sample(x, actual_input, beta, noise, rng, timestamp);
}

}  // namespace tdmpc
