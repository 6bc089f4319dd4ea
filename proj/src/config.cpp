#include "tdmpc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace tdmpc {
namespace {

using Keys = std::set<std::string>;

void check_keys(const YAML::Node& node, const std::string& path, const Keys& allowed) {
  if (!node.IsMap()) throw ConfigError(path + ": expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (allowed.count(key) == 0) throw ConfigError(path + "." + key + ": unknown key");
  }
}

template <typename T>
T get(const YAML::Node& node, const std::string& path) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

template <typename T>
void read(const YAML::Node& parent, const std::string& path, const char* key, T& out) {
  if (const YAML::Node n = parent[key]) out = get<T>(n, path + "." + key);
}

void read_deg(const YAML::Node& parent, const std::string& path, const char* key, double& out) {
  if (const YAML::Node n = parent[key]) out = deg2rad(get<double>(n, path + "." + key));
}

VectorXd read_vector(const YAML::Node& n, const std::string& path, int size) {
  if (n.IsScalar()) return VectorXd::Constant(size, get<double>(n, path));
  if (!n.IsSequence() || static_cast<int>(n.size()) != size) {
    throw ConfigError(path + ": expected a scalar or a list of " + std::to_string(size));
  }
  VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = get<double>(n[i], path);
  return v;
}

template <typename Derived>
void read_vec(const YAML::Node& parent, const std::string& path, const char* key,
              Eigen::MatrixBase<Derived>& out) {
  if (const YAML::Node n = parent[key]) {
    out = read_vector(n, path + "." + key, static_cast<int>(out.size()));
  }
}

Eigen::Vector2d read_point(const YAML::Node& n, const std::string& path) {
  if (!n) throw ConfigError(path + ": missing");
  const VectorXd v = read_vector(n, path, 2);
  return {v(0), v(1)};
}

void parse_weights(const YAML::Node& n, const std::string& path, SubsystemWeights& w) {
  check_keys(n, path, {"q", "r", "s"});
  if (n["q"]) w.q = read_vector(n["q"], path + ".q", 3).asDiagonal();
  read(n, path, "r", w.r);
  if (n["s"]) w.s = read_vector(n["s"], path + ".s", 3).asDiagonal();
}

void parse_soft_bounds(const YAML::Node& n, const std::string& path, SoftStateBounds& b) {
  check_keys(n, path, {"enabled", "lower", "upper", "weight"});
  read(n, path, "enabled", b.enabled);
  read_vec(n, path, "lower", b.lower);
  read_vec(n, path, "upper", b.upper);
  read(n, path, "weight", b.weight);
}

TrajectorySpec parse_trajectory(const YAML::Node& n, const std::string& path) {
  if (n.IsScalar()) {
    if (get<std::string>(n, path) == "benchmark") return TrajectorySpec::benchmark();
    throw ConfigError(path + ": unknown trajectory name");
  }
  if (!n.IsSequence() || n.size() == 0) throw ConfigError(path + ": expected a segment list");
  std::vector<Segment> segs;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const YAML::Node s = n[i];
    check_keys(s, p, {"line", "arc"});
    if (s.size() != 1) throw ConfigError(p + ": expected exactly one of line / arc");
    if (const YAML::Node l = s["line"]) {
      check_keys(l, p + ".line", {"start", "end"});
      segs.emplace_back(LineSegment{read_point(l["start"], p + ".line.start"),
                                    read_point(l["end"], p + ".line.end")});
    } else {
      const YAML::Node a = s["arc"];
      const std::string pa = p + ".arc";
      check_keys(a, pa, {"center", "radius", "start_angle_deg", "end_angle_deg", "direction"});
      ArcSegment arc;
      arc.center = read_point(a["center"], pa + ".center");
      if (!a["radius"] || !a["start_angle_deg"] || !a["end_angle_deg"] || !a["direction"]) {
        throw ConfigError(pa + ": radius, start_angle_deg, end_angle_deg and direction are required");
      }
      arc.radius = get<double>(a["radius"], pa + ".radius");
      arc.start_angle = deg2rad(get<double>(a["start_angle_deg"], pa + ".start_angle_deg"));
      arc.end_angle = deg2rad(get<double>(a["end_angle_deg"], pa + ".end_angle_deg"));
      const auto dir = get<std::string>(a["direction"], pa + ".direction");
      if (dir == "left") {
        arc.direction = TurnDirection::kLeft;
      } else if (dir == "right") {
        arc.direction = TurnDirection::kRight;
      } else {
        throw ConfigError(pa + ".direction: expected left or right");
      }
      segs.emplace_back(arc);
    }
  }
  try {
    return TrajectorySpec(std::move(segs));
  } catch (const DomainError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

SlipParams read_slips(const YAML::Node& n, const std::string& path, double& time) {
  check_keys(n, path, {"time", "mu", "kappa", "eta"});
  SlipParams s = SlipProfile{}.knots.front().slips;
  read(n, path, "time", time);
  read(n, path, "mu", s(par::kMu));
  read(n, path, "kappa", s(par::kKappa));
  read(n, path, "eta", s(par::kEta));
  return s;
}

void parse_plant(const YAML::Node& n, const std::string& path, PlantConfig& plant) {
  check_keys(n, path, {"slips", "speed", "actuator", "inner_steps"});
  if (const YAML::Node s = n["slips"]) {
    plant.slips.knots.clear();
    if (s.IsSequence()) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        double t = 0.0;
        const SlipParams p = read_slips(s[i], path + ".slips[" + std::to_string(i) + "]", t);
        plant.slips.knots.push_back({t, p});
      }
    } else {
      double t = 0.0;
      plant.slips.knots.push_back({t, read_slips(s, path + ".slips", t)});
    }
  }
  if (const YAML::Node v = n["speed"]) {
    plant.speed.knots.clear();
    if (v.IsSequence()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string p = path + ".speed[" + std::to_string(i) + "]";
        check_keys(v[i], p, {"time", "speed"});
        SpeedProfile::Knot k;
        read(v[i], p, "time", k.time);
        read(v[i], p, "speed", k.speed);
        plant.speed.knots.push_back(k);
      }
    } else {
      plant.speed.knots.push_back({0.0, get<double>(v, path + ".speed")});
    }
  }
  if (const YAML::Node a = n["actuator"]) {
    const std::string p = path + ".actuator";
    check_keys(a, p, {"tractor_time_constant", "trailer_time_constant",
                      "tractor_rate_limit_deg_s", "trailer_rate_limit_deg_s"});
    read(a, p, "tractor_time_constant", plant.actuator.tractor_time_constant);
    read(a, p, "trailer_time_constant", plant.actuator.trailer_time_constant);
    read_deg(a, p, "tractor_rate_limit_deg_s", plant.actuator.tractor_rate_limit);
    read_deg(a, p, "trailer_rate_limit_deg_s", plant.actuator.trailer_rate_limit);
  }
  read(n, path, "inner_steps", plant.inner_steps);
}

void parse_controller(const YAML::Node& n, const std::string& path, ControllerConfig& c) {
  check_keys(n, path,
             {"variant", "trailer_formulation", "plan_exchange", "concurrent", "rho1", "rho2",
              "horizon", "sample_time", "integrator_steps", "tractor_weights", "trailer_weights",
              "tractor_soft_bounds", "trailer_soft_bounds", "qp_max_iterations"});
  if (const YAML::Node v = n["variant"]) c.variant = parse_variant(get<std::string>(v, path + ".variant"));
  if (const YAML::Node v = n["trailer_formulation"]) {
    const auto s = get<std::string>(v, path + ".trailer_formulation");
    if (s == "independent") {
      c.trailer_formulation = TrailerFormulation::kIndependent;
    } else if (s == "cooperative") {
      c.trailer_formulation = TrailerFormulation::kCooperative;
    } else {
      throw ConfigError(path + ".trailer_formulation: expected independent or cooperative");
    }
  }
  if (const YAML::Node v = n["plan_exchange"]) {
    const auto s = get<std::string>(v, path + ".plan_exchange");
    if (s == "fresh") {
      c.exchange = PlanExchange::kFreshTractorPlan;
    } else if (s == "previous") {
      c.exchange = PlanExchange::kPreviousSample;
    } else {
      throw ConfigError(path + ".plan_exchange: expected fresh or previous");
    }
  }
  read(n, path, "concurrent", c.concurrent);
  read(n, path, "rho1", c.rho1);
  read(n, path, "rho2", c.rho2);
  read(n, path, "horizon", c.horizon);
  read(n, path, "sample_time", c.sample_time);
  read(n, path, "integrator_steps", c.integrator_steps);
  if (n["tractor_weights"]) parse_weights(n["tractor_weights"], path + ".tractor_weights", c.tractor);
  if (n["trailer_weights"]) parse_weights(n["trailer_weights"], path + ".trailer_weights", c.trailer);
  if (n["tractor_soft_bounds"]) {
    parse_soft_bounds(n["tractor_soft_bounds"], path + ".tractor_soft_bounds", c.tractor_bounds);
  }
  if (n["trailer_soft_bounds"]) {
    parse_soft_bounds(n["trailer_soft_bounds"], path + ".trailer_soft_bounds", c.trailer_bounds);
  }
  read(n, path, "qp_max_iterations", c.qp.max_iterations);
}

void parse_estimator(const YAML::Node& n, const std::string& path, EstimatorConfig& e) {
  check_keys(n, path,
             {"window", "integrator_steps", "output_sigma", "input_sigma", "param_lower",
              "param_upper", "process_weight", "param_drift_sigma", "prior_state_sigma",
              "prior_param_sigma", "min_fix_displacement"});
  read(n, path, "window", e.window);
  read(n, path, "integrator_steps", e.integrator_steps);
  read_vec(n, path, "output_sigma", e.output_sigma);
  read_vec(n, path, "input_sigma", e.input_sigma);
  read_vec(n, path, "param_lower", e.param_lower);
  read_vec(n, path, "param_upper", e.param_upper);
  read_vec(n, path, "process_weight", e.process_weight);
  read_vec(n, path, "param_drift_sigma", e.param_drift_sigma);
  read_vec(n, path, "prior_state_sigma", e.prior_state_sigma);
  read_vec(n, path, "prior_param_sigma", e.prior_param_sigma);
  read(n, path, "min_fix_displacement", e.min_fix_displacement);
}

ExperimentConfig parse(const YAML::Node& root) {
  ExperimentConfig c;
  if (!root || root.IsNull()) return c;
  const std::string path = "config";
  check_keys(root, path,
             {"name", "seed", "duration", "max_samples", "output_dir", "geometry",
              "steering_limits_deg", "controller", "estimator", "plant", "noise", "reference",
              "trajectory", "initial"});
  read(root, path, "name", c.name);
  read(root, path, "seed", c.seed);
  if (const YAML::Node d = root["duration"]) {
    if (d.IsScalar() && d.Scalar() == "auto") {
      c.duration.reset();
    } else {
      c.duration = get<double>(d, path + ".duration");
    }
  }
  read(root, path, "max_samples", c.max_samples);
  if (const YAML::Node o = root["output_dir"]) c.output_dir = get<std::string>(o, path + ".output_dir");

  VehicleGeometry geom;
  bool rear_anchor = false;
  if (const YAML::Node g = root["geometry"]) {
    check_keys(g, path + ".geometry", {"tractor_wheelbase", "trailer_length", "drawbar_length"});
    read(g, path + ".geometry", "tractor_wheelbase", geom.tractor_wheelbase);
    read(g, path + ".geometry", "trailer_length", geom.trailer_length);
    read(g, path + ".geometry", "drawbar_length", geom.drawbar_length);
  }
  SteeringLimits limits;
  if (const YAML::Node l = root["steering_limits_deg"]) {
    check_keys(l, path + ".steering_limits_deg", {"tractor", "trailer"});
    read_deg(l, path + ".steering_limits_deg", "tractor", limits.tractor);
    read_deg(l, path + ".steering_limits_deg", "trailer", limits.trailer);
  }
  if (root["controller"]) parse_controller(root["controller"], path + ".controller", c.controller);
  if (root["estimator"]) parse_estimator(root["estimator"], path + ".estimator", c.estimator);
  if (root["plant"]) parse_plant(root["plant"], path + ".plant", c.plant);
  if (const YAML::Node n = root["noise"]) {
    const std::string p = path + ".noise";
    check_keys(n, p, {"position", "beta_rad", "speed", "steering_rad"});
    read(n, p, "position", c.noise.position);
    read(n, p, "beta_rad", c.noise.beta);
    read(n, p, "speed", c.noise.speed);
    read(n, p, "steering_rad", c.noise.steering);
  }
  if (const YAML::Node n = root["reference"]) {
    const std::string p = path + ".reference";
    check_keys(n, p, {"tractor_anchor", "tractor_lookahead", "trailer_lookahead"});
    if (const YAML::Node a = n["tractor_anchor"]) {
      const std::string v = a.as<std::string>();
      if (v == "rear_axle") {
        rear_anchor = true;
      } else if (v != "front_axle") {
        throw ConfigError(p + ".tractor_anchor: expected front_axle or rear_axle, got '" + v + "'");
      }
    }
    read(n, p, "tractor_lookahead", c.reference.tractor_lookahead);
    read(n, p, "trailer_lookahead", c.reference.trailer_lookahead);
  }
  if (root["trajectory"]) c.trajectory = parse_trajectory(root["trajectory"], path + ".trajectory");
  if (const YAML::Node n = root["initial"]) {
    const std::string p = path + ".initial";
    check_keys(n, p, {"station", "lateral_offset", "heading_offset_deg"});
    read(n, p, "station", c.initial.station);
    read(n, p, "lateral_offset", c.initial.lateral_offset);
    read_deg(n, p, "heading_offset_deg", c.initial.heading_offset);
  }

  // Shared settings.
  c.controller.geometry = geom;
  c.estimator.geometry = geom;
  c.plant.geometry = geom;
  c.reference.tractor_wheelbase = rear_anchor ? 0.0 : geom.tractor_wheelbase;
  c.controller.limits = limits;
  c.plant.limits = limits;
  c.estimator.sample_time = c.controller.sample_time;

  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& yaml_text) {
  try {
    return parse(YAML::Load(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_experiment_config(ss.str());
}

}  // namespace tdmpc
