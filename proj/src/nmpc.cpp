#include "tdmpc/nmpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>

#include <Eigen/Eigenvalues>

#include "tdmpc/integrator.hpp"

namespace tdmpc {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct PredictionContext {
  double speed = 0.0;
  SlipParams slips = SlipParams::Ones();
  double hitch_offset = 0.0;
  VehicleGeometry geometry;
};

/// Rates of (tractor, trailer) body states under the frozen-steering closure.
template <typename S>
Vec<S, 6> coupled_rates(const Vec<S, 3>& tractor, const Vec<S, 3>& trailer, const S& delta_t,
                        const S& delta_i, const PredictionContext& c) {
  StateVec<S> x;
  x << tractor, trailer, S(c.speed);
  const InputVec<S> u(delta_t, delta_i);
  const ParamVec<S> p = c.slips.template cast<S>();
  const S beta = tractor(2) - trailer(2) - S(c.hitch_offset);
  return state_derivative<S>(x, u, beta, p, c.geometry).template head<6>();
}

enum class Layout { kBoth, kTractorOnly, kTrailerOnly };

struct FormulationTraits {
  Layout layout;
  bool owns_tractor;
  bool owns_trailer;
  bool cooperative_cost;  // rho-weighted plant objective, else own objective only
};

FormulationTraits traits(Formulation f) {
  switch (f) {
    case Formulation::kTractorCooperative:
      return {Layout::kBoth, true, false, true};
    case Formulation::kTractorOwn:
      return {Layout::kTractorOnly, true, false, false};
    case Formulation::kTrailerCooperative:
      return {Layout::kTrailerOnly, false, true, true};
    case Formulation::kTrailerIndependent:
      return {Layout::kTrailerOnly, false, true, false};
    case Formulation::kCentralized:
      return {Layout::kBoth, true, true, true};
  }
  throw DomainError("unknown formulation");
}

/// Rows of L with L' L = W (W symmetric positive semidefinite).
MatrixXd psd_root(const Eigen::Matrix3d& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(w);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  std::vector<int> keep;
  for (int i = 0; i < 3; ++i) {
    if (eig.eigenvalues()(i) > 1e-14 * scale) keep.push_back(i);
  }
  MatrixXd l(static_cast<Eigen::Index>(keep.size()), 3);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const int i = keep[r];
    l.row(static_cast<Eigen::Index>(r)) =
        std::sqrt(eig.eigenvalues()(i)) * eig.eigenvectors().col(i).transpose();
  }
  return l;
}

/// Path heading shifted by a multiple of 2 pi to lie next to `yaw`.
double unwrap_near(double heading, double yaw) {
  return heading + 2.0 * kPi * std::round((yaw - heading) / (2.0 * kPi));
}

struct BodyCost {
  MatrixXd stage_root;     // rows of sqrt(Q)
  MatrixXd terminal_root;  // rows of sqrt(S)
  double input_root = 0.0;
  SoftStateBounds bounds;
};

BodyCost body_cost(const SubsystemWeights& w, const SoftStateBounds& b, double scale) {
  BodyCost c;
  const double root = std::sqrt(scale);
  c.stage_root = root * psd_root(w.q);
  c.terminal_root = root * psd_root(w.s);
  c.input_root = root * std::sqrt(w.r);
  c.bounds = b;
  c.bounds.weight *= root;
  return c;
}

// Residual rows of one body: weighted pose error, input deviation and soft
// bounds. `state_col` < 0 marks an exogenous body (no state derivative).
void add_body_rows(ResidualBlock& res, int& row, const BodyCost& cost, bool terminal,
                   const Eigen::Vector3d& pose, const ReferencePoint& ref, int state_col,
                   double input, double input_ref, int input_col) {
  Eigen::Vector3d err(pose(0) - ref.position.x(), pose(1) - ref.position.y(),
                      pose(2) - unwrap_near(ref.heading, pose(2)));
  const MatrixXd& root = terminal ? cost.terminal_root : cost.stage_root;
  for (Eigen::Index i = 0; i < root.rows(); ++i) {
    res.value(row) = root.row(i).dot(err);
    if (state_col >= 0) res.d_state.block(row, state_col, 1, 3) = root.row(i);
    ++row;
  }
  if (!terminal && cost.input_root > 0.0) {
    res.value(row) = cost.input_root * (input - input_ref);
    if (input_col >= 0) res.d_input(row, input_col) = cost.input_root;
    ++row;
  }
  if (cost.bounds.enabled) {
    for (int j = 0; j < 3; ++j) {
      const double over = pose(j) - cost.bounds.upper(j);
      const double under = cost.bounds.lower(j) - pose(j);
      const double wgt = cost.bounds.weight;
      res.value(row) = over > 0.0 ? wgt * over : 0.0;
      if (state_col >= 0 && over > 0.0) res.d_state(row, state_col + j) = wgt;
      ++row;
      res.value(row) = under > 0.0 ? wgt * under : 0.0;
      if (state_col >= 0 && under > 0.0) res.d_state(row, state_col + j) = -wgt;
      ++row;
    }
  }
}

template <int N, int NA, int C, typename Field>
ShootingBlock shooting_block(const Field& field, const Vec<double, N>& x0,
                             const Vec<double, C>& c, double dt, int steps) {
  const auto s = rk4_sensitivities<N, NA, C>(field, x0, c, dt, steps);
  ShootingBlock b;
  b.end = s.end.template head<NA>();
  b.d_state = s.d_state;
  b.d_input = s.d_control;
  b.d_param.resize(NA, 0);
  return b;
}

}  // namespace

std::string to_string(ControllerVariant v) {
  switch (v) {
    case ControllerVariant::kCentralized:
      return "centralized";
    case ControllerVariant::kCooperative:
      return "cooperative";
    case ControllerVariant::kIndependent:
      return "independent";
    case ControllerVariant::kDecentralized:
      return "decentralized";
  }
  return "unknown";
}

ControllerVariant parse_variant(const std::string& name) {
  if (name == "centralized") return ControllerVariant::kCentralized;
  if (name == "cooperative") return ControllerVariant::kCooperative;
  if (name == "independent") return ControllerVariant::kIndependent;
  if (name == "decentralized") return ControllerVariant::kDecentralized;
  throw ConfigError("unknown controller variant '" + name +
                    "' (expected centralized, cooperative, independent or decentralized)");
}

void ControllerConfig::validate() const {
  if (!(rho1 > 0.0) || !(rho2 > 0.0)) throw DomainError("rho1 and rho2 must be positive");
  if (horizon < 1) throw DomainError("controller horizon must be >= 1");
  if (!(sample_time > 0.0)) throw DomainError("controller sample_time must be positive");
  if (integrator_steps < 1) throw DomainError("integrator_steps must be >= 1");
  if (!(limits.tractor > 0.0) || !(limits.trailer > 0.0)) {
    throw DomainError("steering limits must be positive");
  }
  for (const SubsystemWeights* w : {&tractor, &trailer}) {
    for (const Eigen::Matrix3d* m : {&w->q, &w->s}) {
      if (!m->allFinite() || (*m - m->transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw DomainError("weight matrices must be finite and symmetric");
      }
      if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(*m).eigenvalues().minCoeff() < -1e-12) {
        throw DomainError("weight matrices must be positive semidefinite");
      }
    }
    if (!(w->r >= 0.0)) throw DomainError("input weight must be non-negative");
  }
  if (concurrent && exchange != PlanExchange::kPreviousSample) {
    throw DomainError("concurrent subsystem solves require the previous-sample plan exchange");
  }
  geometry.validate();
}

double PredictedInputPlan::value(long at_sample, int k) const {
  if (inputs.empty()) return 0.0;
  const long idx = std::clamp<long>(k + (at_sample - sample), 0,
                                    static_cast<long>(inputs.size()) - 1);
  return inputs[static_cast<std::size_t>(idx)];
}

PredictedInputPlan PredictedInputPlan::zero(int subsystem, int horizon, long sample) {
  return {subsystem, std::vector<double>(static_cast<std::size_t>(horizon), 0.0), sample};
}

SubsystemController::SubsystemController(Formulation formulation, ControllerConfig config)
    : formulation_(formulation), config_(std::move(config)), engine_(config_.qp) {
  config_.validate();
}

void SubsystemController::reset() {
  iterate_.reset();
  last_sample_ = -1;
  engine_.reset();
  consecutive_failures_ = 0;
}

VectorXd SubsystemController::anchor(const ControllerEstimate& estimate) const {
  switch (traits(formulation_).layout) {
    case Layout::kBoth:
      return estimate.state.head<6>();
    case Layout::kTractorOnly:
      return estimate.state.head<3>();
    case Layout::kTrailerOnly:
      return estimate.state.segment<3>(3);
  }
  return {};
}

OcpProblem SubsystemController::build_problem(const ControllerEstimate& estimate,
                                              const ReferenceWindow& refs,
                                              const PredictedInputPlan& other_plan,
                                              long sample) const {
  const FormulationTraits tr = traits(formulation_);
  const int n = config_.horizon;
  if (static_cast<int>(refs.tractor.size()) != n + 1 ||
      static_cast<int>(refs.trailer.size()) != n + 1) {
    throw DomainError("reference window does not match the controller horizon");
  }
  if (!estimate.state.allFinite() || !estimate.slips.allFinite() || !std::isfinite(estimate.beta)) {
    throw DomainError("controller estimate must be finite");
  }

  PredictionContext ctx;
  ctx.speed = std::max(0.0, estimate.state(st::kSpeed));
  ctx.slips = estimate.slips;
  ctx.hitch_offset = estimate.state(st::kTheta) - estimate.state(st::kPsi) - estimate.beta;
  ctx.geometry = config_.geometry;

  const double dt = config_.sample_time;
  const int steps = config_.integrator_steps;
  std::vector<double> fixed(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) fixed[static_cast<std::size_t>(k)] = other_plan.value(sample, k);

  const double w1 = tr.cooperative_cost ? config_.rho1 : (tr.owns_tractor ? 1.0 : 0.0);
  const double w2 = tr.cooperative_cost ? config_.rho2 : (tr.owns_trailer ? 1.0 : 0.0);
  const BodyCost c1 = body_cost(config_.tractor, config_.tractor_bounds, w1);
  const BodyCost c2 = body_cost(config_.trailer, config_.trailer_bounds, w2);

  OcpProblem p;
  p.horizon = n;
  p.sample_time = dt;
  p.state_dim = tr.layout == Layout::kBoth ? 6 : 3;
  p.input_dim = (tr.owns_tractor ? 1 : 0) + (tr.owns_trailer ? 1 : 0);
  p.param_dim = 0;
  p.free_initial_state = false;
  p.input_lower.resize(p.input_dim);
  p.input_upper.resize(p.input_dim);
  {
    int i = 0;
    if (tr.owns_tractor) {
      p.input_lower(i) = -config_.limits.tractor;
      p.input_upper(i++) = config_.limits.tractor;
    }
    if (tr.owns_trailer) {
      p.input_lower(i) = -config_.limits.trailer;
      p.input_upper(i) = config_.limits.trailer;
    }
  }

  // Trailer formulations see the tractor as an exogenous body driven by the
  // fixed tractor plan.
  std::vector<Eigen::Vector3d> tractor_path;
  if (tr.layout == Layout::kTrailerOnly) {
    tractor_path.push_back(estimate.state.head<3>());
    for (int k = 0; k < n; ++k) {
      const double delta_t = fixed[static_cast<std::size_t>(k)];
      const auto field = [&](const Vec<double, 3>& x) -> Vec<double, 3> {
        return coupled_rates<double>(x, x, delta_t, 0.0, ctx).head<3>();
      };
      tractor_path.push_back(rk4<double, 3>(field, tractor_path.back(), dt, steps));
    }
  }

  switch (tr.layout) {
    case Layout::kBoth: {
      const bool central = tr.owns_trailer;
      p.shoot = [ctx, fixed, dt, steps, central](int k, const VectorXd& x, const VectorXd& u,
                                                  const VectorXd&) {
        const double delta_i = fixed[static_cast<std::size_t>(k)];
        if (central) {
          const auto field = [&ctx](const auto& s, const auto& c) {
            using S = typename std::decay_t<decltype(s)>::Scalar;
            return Vec<S, 6>(coupled_rates<S>(s.template head<3>(), s.template tail<3>(), c(0),
                                              c(1), ctx));
          };
          return shooting_block<6, 6, 2>(field, Vec<double, 6>(x), Vec<double, 2>(u), dt, steps);
        }
        const auto field = [&ctx, delta_i](const auto& s, const auto& c) {
          using S = typename std::decay_t<decltype(s)>::Scalar;
          return Vec<S, 6>(coupled_rates<S>(s.template head<3>(), s.template tail<3>(), c(0),
                                            S(delta_i), ctx));
        };
        return shooting_block<6, 6, 1>(field, Vec<double, 6>(x), Vec<double, 1>(u), dt, steps);
      };
      break;
    }
    case Layout::kTractorOnly: {
      p.shoot = [ctx, dt, steps](int, const VectorXd& x, const VectorXd& u, const VectorXd&) {
        const auto field = [&ctx](const auto& s, const auto& c) {
          using S = typename std::decay_t<decltype(s)>::Scalar;
          return Vec<S, 3>(coupled_rates<S>(s, s, c(0), S(0), ctx).template head<3>());
        };
        return shooting_block<3, 3, 1>(field, Vec<double, 3>(x), Vec<double, 1>(u), dt, steps);
      };
      break;
    }
    case Layout::kTrailerOnly: {
      p.shoot = [ctx, fixed, tractor_path, dt, steps](int k, const VectorXd& x,
                                                      const VectorXd& u, const VectorXd&) {
        const auto ks = static_cast<std::size_t>(k);
        const double delta_t = fixed[ks];
        // Active trailer states first, passive tractor states after.
        Vec<double, 6> x0;
        x0 << x, tractor_path[ks];
        const auto field = [&ctx, delta_t](const auto& s, const auto& c) {
          using S = typename std::decay_t<decltype(s)>::Scalar;
          const Vec<S, 6> r = coupled_rates<S>(s.template tail<3>(), s.template head<3>(),
                                               S(delta_t), c(0), ctx);
          Vec<S, 6> out;
          out << r.template tail<3>(), r.template head<3>();
          return out;
        };
        return shooting_block<6, 3, 1>(field, x0, Vec<double, 1>(u), dt, steps);
      };
      break;
    }
  }

  const ControlInput u_ref = estimate.measured_input;
  const int max_rows = 2 * (3 + 1 + 6);
  const Layout layout = tr.layout;
  const bool owns_t = tr.owns_tractor;
  const bool owns_i = tr.owns_trailer;
  const bool use1 = w1 > 0.0;
  const bool use2 = w2 > 0.0;
  const int nx = p.state_dim;
  const int nu = p.input_dim;
  p.residual = [=](int k, const VectorXd& x, const VectorXd& u, const VectorXd&) {
    const bool terminal = k == n;
    const auto ks = static_cast<std::size_t>(k);
    ResidualBlock res;
    res.value.setZero(max_rows);
    res.d_state.setZero(max_rows, nx);
    res.d_input.setZero(max_rows, terminal ? 0 : nu);
    int row = 0;

    const double other = terminal ? 0.0 : fixed[ks];
    const double delta_t = owns_t ? (terminal ? 0.0 : u(0)) : other;
    const double delta_i = owns_i ? (terminal ? 0.0 : u(owns_t ? 1 : 0)) : other;
    const int col_t = owns_t && !terminal ? 0 : -1;
    const int col_i = owns_i && !terminal ? (owns_t ? 1 : 0) : -1;

    if (use1) {
      const bool exo = layout == Layout::kTrailerOnly;
      const Eigen::Vector3d pose = exo ? tractor_path[ks] : Eigen::Vector3d(x.head<3>());
      add_body_rows(res, row, c1, terminal, pose, refs.tractor[ks], exo ? -1 : 0, delta_t,
                    u_ref(in::kTractorSteer), col_t);
    }
    if (use2) {
      const int col = layout == Layout::kBoth ? 3 : 0;
      const Eigen::Vector3d pose = x.segment<3>(col);
      add_body_rows(res, row, c2, terminal, pose, refs.trailer[ks], col, delta_i,
                    u_ref(in::kTrailerSteer), col_i);
    }
    res.value.conservativeResize(row);
    res.d_state.conservativeResize(row, nx);
    res.d_input.conservativeResize(row, res.d_input.cols());
    res.d_param.resize(row, 0);
    return res;
  };
  return p;
}

RtiIterate SubsystemController::cold_iterate(const OcpProblem& problem,
                                             const ControllerEstimate& estimate) const {
  const FormulationTraits tr = traits(formulation_);
  VectorXd u(problem.input_dim);
  int i = 0;
  if (tr.owns_tractor) {
    u(i++) = std::clamp(estimate.measured_input(in::kTractorSteer), -config_.limits.tractor,
                        config_.limits.tractor);
  }
  if (tr.owns_trailer) {
    u(i) = std::clamp(estimate.measured_input(in::kTrailerSteer), -config_.limits.trailer,
                      config_.limits.trailer);
  }
  return initial_guess(problem, anchor(estimate), {u}, VectorXd());
}

SubsystemOutput SubsystemController::solve(const ControllerEstimate& estimate,
                                           const ReferenceWindow& refs,
                                           const PredictedInputPlan& other_plan, long sample) {
  const auto t0 = Clock::now();
  const FormulationTraits tr = traits(formulation_);
  SubsystemOutput out;
  try {
    const OcpProblem problem = build_problem(estimate, refs, other_plan, sample);
    RtiIterate start;
    if (!iterate_) {
      start = cold_iterate(problem, estimate);
    } else if (sample > last_sample_) {
      start = problem.horizon >= 2 ? shift_warm_start(problem, *iterate_) : *iterate_;
    } else {
      start = *iterate_;
    }
    const RtiIterate next = engine_.step(problem, start, anchor(estimate), &out.report);
    iterate_ = next;

    const auto plan_of = [&](int subsystem, int idx) {
      PredictedInputPlan plan{subsystem, {}, sample};
      for (const auto& u : next.inputs) plan.inputs.push_back(u(idx));
      return plan;
    };
    int idx = 0;
    if (tr.owns_tractor) {
      out.tractor_plan = plan_of(1, idx);
      out.command(in::kTractorSteer) = out.tractor_plan.inputs.front();
      ++idx;
    }
    if (tr.owns_trailer) {
      out.trailer_plan = plan_of(2, idx);
      out.command(in::kTrailerSteer) = out.trailer_plan.inputs.front();
    }
    out.objective = out.report.objective;
    consecutive_failures_ = 0;
    last_sample_ = sample;
  } catch (const std::exception& e) {
    if (++consecutive_failures_ > 1) {
      throw ControllerError(std::string("controller failed on two consecutive samples: ") +
                            e.what());
    }
    iterate_.reset();
    engine_.reset();
    out = last_output_;
    out.held = true;
  }
  out.solve_seconds = seconds_since(t0);
  if (!out.held) last_output_ = out;
  return out;
}

NmpcController::NmpcController(ControllerConfig config) : config_(std::move(config)) {
  config_.validate();
}

SubsystemController& NmpcController::subsystem(Formulation f) {
  auto& slot = solvers_[f];
  if (!slot) slot = std::make_unique<SubsystemController>(f, config_);
  return *slot;
}

SubsystemOutput NmpcController::tractor_control_step(const ControllerEstimate& estimate,
                                                     const ReferenceWindow& refs,
                                                     const PredictedInputPlan& trailer_plan,
                                                     long sample) {
  return subsystem(Formulation::kTractorCooperative).solve(estimate, refs, trailer_plan, sample);
}

SubsystemOutput NmpcController::trailer_control_step_cooperative(
    const ControllerEstimate& estimate, const ReferenceWindow& refs,
    const PredictedInputPlan& tractor_plan, long sample) {
  return subsystem(Formulation::kTrailerCooperative).solve(estimate, refs, tractor_plan, sample);
}

SubsystemOutput NmpcController::trailer_control_step_independent(
    const ControllerEstimate& estimate, const ReferenceWindow& refs,
    const PredictedInputPlan& tractor_plan, long sample) {
  return subsystem(Formulation::kTrailerIndependent).solve(estimate, refs, tractor_plan, sample);
}

SubsystemOutput NmpcController::centralized_control_step(const ControllerEstimate& estimate,
                                                         const ReferenceWindow& refs,
                                                         long sample) {
  return subsystem(Formulation::kCentralized).solve(estimate, refs, PredictedInputPlan{}, sample);
}

ControlOutput NmpcController::decentralized_control_step(const ControllerEstimate& estimate,
                                                         const ReferenceWindow& refs,
                                                         long sample) {
  return distributed_step(Formulation::kTractorOwn, Formulation::kTrailerIndependent, estimate,
                          refs, sample, true);
}

ControlOutput NmpcController::distributed_step(Formulation tractor_f, Formulation trailer_f,
                                               const ControllerEstimate& estimate,
                                               const ReferenceWindow& refs, long sample,
                                               bool zero_tractor_plan) {
  const int n = config_.horizon;
  const PredictedInputPlan trailer_prev = last_trailer_plan_.inputs.empty()
                                              ? PredictedInputPlan::zero(2, n, sample)
                                              : last_trailer_plan_;
  const PredictedInputPlan zero_tractor = PredictedInputPlan::zero(1, n, sample);
  const PredictedInputPlan tractor_prev =
      zero_tractor_plan || last_tractor_plan_.inputs.empty() ? zero_tractor : last_tractor_plan_;

  SubsystemController& tractor = subsystem(tractor_f);
  SubsystemController& trailer = subsystem(trailer_f);
  SubsystemOutput t_out;
  SubsystemOutput i_out;
  if (config_.concurrent) {
    auto fut = std::async(std::launch::async, [&] {
      return trailer.solve(estimate, refs, tractor_prev, sample);
    });
    t_out = tractor.solve(estimate, refs, trailer_prev, sample);
    i_out = fut.get();
  } else {
    t_out = tractor.solve(estimate, refs, trailer_prev, sample);
    const PredictedInputPlan& tractor_for_trailer =
        zero_tractor_plan ? zero_tractor
        : config_.exchange == PlanExchange::kFreshTractorPlan ? t_out.tractor_plan
                                                               : tractor_prev;
    i_out = trailer.solve(estimate, refs, tractor_for_trailer, sample);
  }

  last_tractor_plan_ = t_out.tractor_plan;
  last_trailer_plan_ = i_out.trailer_plan;

  ControlOutput out;
  out.command = ControlInput(t_out.command(in::kTractorSteer), i_out.command(in::kTrailerSteer));
  out.tractor_plan = t_out.tractor_plan;
  out.trailer_plan = i_out.trailer_plan;
  out.tractor_objective = t_out.objective;
  out.trailer_objective = i_out.objective;
  out.tractor_seconds = t_out.solve_seconds;
  out.trailer_seconds = i_out.solve_seconds;
  out.qp_iterations = t_out.report.qp_iterations + i_out.report.qp_iterations;
  out.held = t_out.held || i_out.held;
  return out;
}

ControlOutput NmpcController::step(const ControllerEstimate& estimate,
                                   const ReferenceWindow& refs, long sample) {
  switch (config_.variant) {
    case ControllerVariant::kCentralized: {
      const SubsystemOutput c = centralized_control_step(estimate, refs, sample);
      last_tractor_plan_ = c.tractor_plan;
      last_trailer_plan_ = c.trailer_plan;
      ControlOutput out;
      out.command = c.command;
      out.tractor_plan = c.tractor_plan;
      out.trailer_plan = c.trailer_plan;
      out.tractor_objective = c.objective;
      out.trailer_objective = c.objective;
      out.central_seconds = c.solve_seconds;
      out.qp_iterations = c.report.qp_iterations;
      out.held = c.held;
      return out;
    }
    case ControllerVariant::kCooperative:
      return distributed_step(Formulation::kTractorCooperative,
                              config_.trailer_formulation == TrailerFormulation::kCooperative
                                  ? Formulation::kTrailerCooperative
                                  : Formulation::kTrailerIndependent,
                              estimate, refs, sample, false);
    case ControllerVariant::kIndependent:
      return distributed_step(Formulation::kTractorOwn, Formulation::kTrailerIndependent,
                              estimate, refs, sample, false);
    case ControllerVariant::kDecentralized:
      return decentralized_control_step(estimate, refs, sample);
  }
  throw DomainError("unknown controller variant");
}

}  // namespace tdmpc
