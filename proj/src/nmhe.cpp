#include "tdmpc/nmhe.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "tdmpc/integrator.hpp"

namespace tdmpc {
namespace {

constexpr int kResidualRows = kOutputDim + kInputDim;

VectorXd stack(const VectorXd& a, const VectorXd& b) {
  VectorXd z(a.size() + b.size());
  z << a, b;
  return z;
}

// Symmetric inverse square root of an SPD matrix; empty when not SPD.
std::optional<MatrixXd> inverse_sqrt(const MatrixXd& p) {
  if (!p.allFinite()) return std::nullopt;
  const MatrixXd sym = 0.5 * (p + p.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const VectorXd& d = eig.eigenvalues();
  if (!(d.minCoeff() > 1e-14 * std::max(1.0, d.maxCoeff()))) return std::nullopt;
  const MatrixXd& v = eig.eigenvectors();
  MatrixXd root = v * d.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  return MatrixXd(0.5 * (root + root.transpose()));
}

double heading_of(double dx, double dy) { return std::atan2(dy, dx); }

}  // namespace

void EstimatorConfig::validate() const {
  geometry.validate();
  if (!(output_sigma.array() > 0.0).all() || !output_sigma.allFinite() ||
      !(input_sigma.array() > 0.0).all() || !input_sigma.allFinite()) {
    throw DomainError("estimator weights must be positive");
  }
  if (!(param_lower.array() < param_upper.array()).all() || !param_lower.allFinite() ||
      !param_upper.allFinite()) {
    throw DomainError("estimator parameter bounds must be ordered");
  }
  if (window < 2) throw DomainError("estimator window must hold at least 2 samples");
  if (!(sample_time > 0.0) || integrator_steps < 1) {
    throw DomainError("estimator sample time and integrator steps must be positive");
  }
  if (!(process_weight.array() > 0.0).all() || !(prior_state_sigma.array() > 0.0).all() ||
      !(prior_param_sigma.array() > 0.0).all() || !(param_drift_sigma.array() >= 0.0).all()) {
    throw DomainError("estimator process weights and prior sigmas must be positive");
  }
  if (!(min_fix_displacement > 0.0)) throw DomainError("min_fix_displacement must be positive");
}

MatrixXd EstimatorConfig::prior_weight() const {
  return stack(prior_state_sigma, prior_param_sigma).cwiseInverse().asDiagonal();
}

VectorXd EstimatorConfig::process_sigma() const {
  return stack(process_weight.cwiseInverse(), param_drift_sigma);
}

void EstimationWindow::check() const {
  if (capacity < 2) throw DomainError("window capacity must be >= 2");
  if (static_cast<int>(measurements.size()) > capacity) {
    throw DomainError("window holds more measurements than its capacity");
  }
  for (std::size_t i = 1; i < measurements.size(); ++i) {
    if (!(measurements[i].timestamp > measurements[i - 1].timestamp)) {
      throw DomainError("window measurements must be ordered by timestamp");
    }
  }
  if (arrival.anchor.size() != kAugmentedDim || !arrival.anchor.allFinite()) {
    throw DomainError("arrival anchor must be a finite [state; slips] vector");
  }
  const MatrixXd& v = arrival.weight;
  if (v.rows() != kAugmentedDim || v.cols() != kAugmentedDim || !v.allFinite()) {
    throw DomainError("arrival weight has the wrong shape");
  }
  if (!v.isApprox(v.transpose(), 1e-9)) throw DomainError("arrival weight must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(v, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw DomainError("arrival weight must be positive definite");
  }
}

ArrivalUpdate update_arrival_cost(const ArrivalCost& prior, const ArrivalLinearization& lin,
                                  const VectorXd& process_sigma, const MatrixXd& fallback_weight) {
  const int n = static_cast<int>(prior.anchor.size());
  if (prior.weight.rows() != n || lin.z_star.size() != n || lin.transition.rows() != n ||
      lin.transition.cols() != n || lin.output_jacobian.cols() != n ||
      process_sigma.size() != n) {
    throw DomainError("update_arrival_cost: inconsistent dimensions");
  }
  const MatrixXd info_prior = prior.weight.transpose() * prior.weight;
  const MatrixXd ry = lin.output_weight.cwiseAbs2().asDiagonal();
  const MatrixXd& h = lin.output_jacobian;

  // Measurement update at z*.
  const MatrixXd info = info_prior + h.transpose() * ry * h;
  const Eigen::LDLT<MatrixXd> ldlt(info);
  ArrivalUpdate out;
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    out.cost = {lin.predicted, fallback_weight};
    out.reinitialized = true;
    return out;
  }
  const MatrixXd p_meas = ldlt.solve(MatrixXd::Identity(n, n));
  const VectorXd innovation = lin.measured - lin.output - h * (prior.anchor - lin.z_star);
  const VectorXd z_meas = prior.anchor + p_meas * h.transpose() * ry * innovation;

  // Time update through the linearized shooting map.
  const MatrixXd& a = lin.transition;
  const VectorXd z_next = lin.predicted + a * (z_meas - lin.z_star);
  const MatrixXd p_next =
      a * p_meas * a.transpose() + MatrixXd(process_sigma.cwiseAbs2().asDiagonal());

  const auto root = inverse_sqrt(p_next);
  if (!root || !z_next.allFinite()) {
    out.cost = {lin.predicted, fallback_weight};
    out.reinitialized = true;
    return out;
  }
  out.cost = {z_next, *root};
  return out;
}

std::optional<EstimationWindow> cold_start(const std::vector<Measurement>& first,
                                           const EstimatorConfig& config) {
  config.validate();
  if (first.empty()) throw DomainError("cold_start needs at least one measurement");
  const std::size_t keep = std::min<std::size_t>(first.size(), config.window);
  const std::vector<Measurement> kept(first.end() - static_cast<long>(keep), first.end());
  const Measurement& m0 = kept.front();

  std::optional<double> theta;
  std::optional<double> psi;
  for (std::size_t i = 1; i < kept.size(); ++i) {
    const double dxt = kept[i].x_t - m0.x_t;
    const double dyt = kept[i].y_t - m0.y_t;
    const double dxi = kept[i].x_i - m0.x_i;
    const double dyi = kept[i].y_i - m0.y_i;
    if (!theta && std::hypot(dxt, dyt) > config.min_fix_displacement) theta = heading_of(dxt, dyt);
    if (!psi && std::hypot(dxi, dyi) > config.min_fix_displacement) psi = heading_of(dxi, dyi);
  }
  if (!theta) return std::nullopt;

  double v = 0.0;
  for (const auto& m : kept) v += m.v;
  v /= static_cast<double>(kept.size());

  EstimationWindow w;
  w.capacity = config.window;
  w.measurements.assign(kept.begin(), kept.end());
  const VehicleState x0 = make_state(m0.x_t, m0.y_t, *theta, m0.x_i, m0.y_i, psi.value_or(*theta), v);
  w.arrival.anchor = stack(x0, SlipBounds::midpoint());
  w.arrival.weight = config.prior_weight();
  w.check();
  return w;
}

MovingHorizonEstimator::MovingHorizonEstimator(EstimatorConfig config)
    : config_(std::move(config)) {
  config_.validate();
  window_.capacity = config_.window;
}

OcpProblem MovingHorizonEstimator::build_problem() const {
  const int m = static_cast<int>(window_.measurements.size());
  if (m < 2) throw DomainError("estimator problem needs at least 2 measurements");
  OcpProblem p;
  p.horizon = m - 1;
  p.sample_time = config_.sample_time;
  p.state_dim = kStateDim;
  p.input_dim = kInputDim;
  p.param_dim = kParamDim;
  p.free_initial_state = true;
  p.inputs_at_terminal_node = true;

  const VehicleGeometry geom = config_.geometry;
  const double dt = config_.sample_time;
  const int steps = config_.integrator_steps;
  p.shoot = [geom, dt, steps](int, const VectorXd& x, const VectorXd& u, const VectorXd& q) {
    const ShootingResult r =
        integrate_with_sensitivities(VehicleState(x), ControlInput(u), SlipParams(q), geom, dt, steps);
    return ShootingBlock{r.end_state, r.sens_state, r.sens_input, r.sens_param};
  };

  std::vector<Measurement> meas(window_.measurements.begin(), window_.measurements.end());
  const OutputVec<double> wy = config_.output_sigma.cwiseInverse();
  const ControlInput wu = config_.input_sigma.cwiseInverse();
  p.residual = [meas = std::move(meas), wy, wu](int node, const VectorXd& x, const VectorXd& u,
                                                const VectorXd& q) {
    const Measurement& mk = meas[node];
    const VehicleState xs(x);
    const ControlInput us(u);
    const SlipParams ps(q);
    ResidualBlock r;
    r.value.resize(kResidualRows);
    r.value.head<kOutputDim>() =
        wy.cwiseProduct(measurement_function<double>(xs, us, ps) - mk.outputs());
    r.value.tail<kInputDim>() = wu.cwiseProduct(us - mk.inputs());

    r.d_state = MatrixXd::Zero(kResidualRows, kStateDim);
    r.d_input = MatrixXd::Zero(kResidualRows, kInputDim);
    r.d_param = MatrixXd::Zero(kResidualRows, kParamDim);
    r.d_state(out::kXt, st::kXt) = wy(out::kXt);
    r.d_state(out::kYt, st::kYt) = wy(out::kYt);
    r.d_state(out::kXi, st::kXi) = wy(out::kXi);
    r.d_state(out::kYi, st::kYi) = wy(out::kYi);
    r.d_state(out::kSpeed, st::kSpeed) = wy(out::kSpeed);
    // beta = theta - psi - eta * delta_i
    r.d_state(out::kBeta, st::kTheta) = wy(out::kBeta);
    r.d_state(out::kBeta, st::kPsi) = -wy(out::kBeta);
    r.d_input(out::kBeta, in::kTrailerSteer) = -wy(out::kBeta) * ps(par::kEta);
    r.d_param(out::kBeta, par::kEta) = -wy(out::kBeta) * us(in::kTrailerSteer);
    r.d_input(kOutputDim + in::kTractorSteer, in::kTractorSteer) = wu(in::kTractorSteer);
    r.d_input(kOutputDim + in::kTrailerSteer, in::kTrailerSteer) = wu(in::kTrailerSteer);
    return r;
  };

  p.process_weight = config_.process_weight;
  p.prior_anchor = window_.arrival.anchor;
  p.prior_weight = window_.arrival.weight;
  p.param_lower = config_.param_lower;
  p.param_upper = config_.param_upper;
  return p;
}

ArrivalLinearization MovingHorizonEstimator::linearize_oldest() const {
  if (iterate_.states.empty()) throw DomainError("no estimator solution to linearize");
  const VehicleState x0(iterate_.states.front());
  const ControlInput u0(iterate_.inputs.front());
  const SlipParams p(iterate_.params);
  const ShootingResult r = integrate_with_sensitivities(x0, u0, p, config_.geometry,
                                                        config_.sample_time,
                                                        config_.integrator_steps);
  ArrivalLinearization lin;
  lin.z_star = stack(x0, p);
  lin.predicted = stack(r.end_state, p);
  lin.transition = MatrixXd::Identity(kAugmentedDim, kAugmentedDim);
  lin.transition.topLeftCorner<kStateDim, kStateDim>() = r.sens_state;
  lin.transition.topRightCorner<kStateDim, kParamDim>() = r.sens_param;
  lin.output = measurement_function<double>(x0, u0, p);
  lin.output_jacobian = MatrixXd::Zero(kOutputDim, kAugmentedDim);
  lin.output_jacobian(out::kXt, st::kXt) = 1.0;
  lin.output_jacobian(out::kYt, st::kYt) = 1.0;
  lin.output_jacobian(out::kXi, st::kXi) = 1.0;
  lin.output_jacobian(out::kYi, st::kYi) = 1.0;
  lin.output_jacobian(out::kSpeed, st::kSpeed) = 1.0;
  lin.output_jacobian(out::kBeta, st::kTheta) = 1.0;
  lin.output_jacobian(out::kBeta, st::kPsi) = -1.0;
  lin.output_jacobian(out::kBeta, kStateDim + par::kEta) = -u0(in::kTrailerSteer);
  lin.measured = window_.measurements.front().outputs();
  lin.output_weight = config_.output_sigma.cwiseInverse();
  return lin;
}

void MovingHorizonEstimator::absorb_oldest() {
  const ArrivalUpdate up = update_arrival_cost(window_.arrival, linearize_oldest(),
                                               config_.process_sigma(), config_.prior_weight());
  window_.arrival = up.cost;
  window_.arrival.anchor.tail<kParamDim>() = window_.arrival.anchor.tail<kParamDim>()
                                                 .cwiseMax(config_.param_lower)
                                                 .cwiseMin(config_.param_upper);
  if (up.reinitialized) ++reinitializations_;
  window_.measurements.pop_front();
  iterate_.states.erase(iterate_.states.begin());
  iterate_.inputs.erase(iterate_.inputs.begin());
  iterate_.corrections.erase(iterate_.corrections.begin());
}

std::optional<Estimate> MovingHorizonEstimator::step(const Measurement& m) {
  if (!initialized_) {
    if (!pending_.empty() && !(m.timestamp > pending_.back().timestamp)) {
      throw DomainError("measurements must arrive in timestamp order");
    }
    pending_.push_back(m);
    auto w = cold_start(pending_, config_);
    if (!w) {
      if (static_cast<int>(pending_.size()) > config_.window) pending_.erase(pending_.begin());
      return std::nullopt;
    }
    window_ = std::move(*w);
    pending_.clear();
    const OcpProblem problem = build_problem();
    std::vector<VectorXd> inputs;
    for (const auto& mk : window_.measurements) inputs.emplace_back(mk.inputs());
    iterate_ = initial_guess(problem, window_.arrival.anchor.head<kStateDim>(), inputs,
                             window_.arrival.anchor.tail<kParamDim>());
    initialized_ = true;
    engine_.reset();
    return estimate_step();
  }

  if (!(m.timestamp > window_.measurements.back().timestamp)) {
    throw DomainError("measurements must arrive in timestamp order");
  }
  if (window_.full()) absorb_oldest();
  // New node: extrapolate the newest state with its input.
  const VehicleState last(iterate_.states.back());
  const VehicleState next =
      integrate(last, ControlInput(iterate_.inputs.back()), SlipParams(iterate_.params),
                config_.geometry, config_.sample_time, config_.integrator_steps);
  window_.measurements.push_back(m);
  iterate_.states.emplace_back(next);
  iterate_.inputs.emplace_back(m.inputs());
  iterate_.corrections.emplace_back(VectorXd::Zero(kStateDim));
  return estimate_step();
}

Estimate MovingHorizonEstimator::estimate_step() {
  Estimate e;
  try {
    const OcpProblem problem = build_problem();
    iterate_ = engine_.step(problem, iterate_, VectorXd());
    const VehicleState x(iterate_.states.back());
    const ControlInput u(iterate_.inputs.back());
    const SlipParams p(iterate_.params);
    if (!x.allFinite() || !p.allFinite()) throw RtiError("non-finite estimate", problem.horizon);
    e.timestamp = window_.measurements.back().timestamp;
    e.state = x;
    e.slips = p.cwiseMax(config_.param_lower).cwiseMin(config_.param_upper);
    e.input = u;
    e.beta = hitch_angle<double>(x, u, e.slips);
    last_ = e;
  } catch (const std::exception&) {
    e = last_;
    e.timestamp = window_.measurements.empty() ? e.timestamp : window_.measurements.back().timestamp;
    e.degraded = true;
    engine_.reset();
  }
  return e;
}

}  // namespace tdmpc
