#include "tdmpc/rti.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tdmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Decision vector [dx_0 | dq | du_0 dw_0 | du_1 dw_1 | ... | du_N]: every node
// only adds columns, so the state maps of node k are zero past a prefix.
struct Layout {
  int nx, nu, np, n, nu_nodes, nw;
  int off_q, base, stride, size;

  explicit Layout(const OcpProblem& p)
      : nx(p.state_dim),
        nu(p.input_dim),
        np(p.param_dim),
        n(p.horizon),
        nu_nodes(p.input_nodes()),
        nw(p.has_corrections() ? p.state_dim : 0),
        off_q(p.free_initial_state ? p.state_dim : 0),
        base(off_q + p.param_dim),
        stride(p.input_dim + nw),
        size(base + p.horizon * stride + (p.inputs_at_terminal_node ? p.input_dim : 0)) {}

  int u_col(int k) const { return base + k * stride; }
  int w_col(int k) const { return base + k * stride + nu; }
  /// Columns that can be nonzero in the state map of node k.
  int prefix(int k) const { return base + k * stride; }
};

double bound_or(const VectorXd& b, int i, double fallback) {
  return b.size() == 0 ? fallback : b(i);
}

void check_block(const char* what, int node, const VectorXd& v, const MatrixXd& dx,
                 const MatrixXd& du, const MatrixXd& dq, int rows, const Layout& l, bool has_u) {
  const auto fail = [&](const std::string& msg) {
    throw RtiError(std::string(what) + " at node " + std::to_string(node) + ": " + msg, node);
  };
  if (rows >= 0 && v.size() != rows) fail("wrong output dimension");
  if (dx.rows() != v.size() || dx.cols() != l.nx) fail("state Jacobian has wrong shape");
  if (has_u && l.nu > 0 && (du.rows() != v.size() || du.cols() != l.nu)) {
    fail("input Jacobian has wrong shape");
  }
  if (l.np > 0 && (dq.rows() != v.size() || dq.cols() != l.np)) {
    fail("parameter Jacobian has wrong shape");
  }
  if (!v.allFinite() || !dx.allFinite()) fail("non-finite values");
}

ShootingBlock shoot_at(const OcpProblem& p, int k, const VectorXd& x, const VectorXd& u,
                       const VectorXd& q) {
  try {
    return p.shoot(k, x, u, q);
  } catch (const RtiError&) {
    throw;
  } catch (const std::exception& e) {
    throw RtiError("shooting interval " + std::to_string(k) + ": " + e.what(), k);
  }
}

ResidualBlock residual_at(const OcpProblem& p, int k, const VectorXd& x, const VectorXd& u,
                          const VectorXd& q) {
  try {
    return p.residual(k, x, u, q);
  } catch (const RtiError&) {
    throw;
  } catch (const std::exception& e) {
    throw RtiError("residual at node " + std::to_string(k) + ": " + e.what(), k);
  }
}

const VectorXd& input_at(const RtiIterate& it, int k, const Layout& l) {
  static const VectorXd kEmpty;
  return k < l.nu_nodes ? it.inputs[static_cast<std::size_t>(k)] : kEmpty;
}

}  // namespace

int OcpProblem::decision_size() const { return Layout(*this).size; }
int OcpProblem::param_offset() const { return Layout(*this).off_q; }
int OcpProblem::input_offset(int node) const { return Layout(*this).u_col(node); }
int OcpProblem::correction_offset(int node) const { return Layout(*this).w_col(node); }

void OcpProblem::validate() const {
  if (horizon < 1) throw DomainError("OcpProblem: horizon must be >= 1");
  if (!(sample_time > 0.0)) throw DomainError("OcpProblem: sample_time must be positive");
  if (state_dim < 1 || input_dim < 0 || param_dim < 0) {
    throw DomainError("OcpProblem: invalid dimensions");
  }
  if (!shoot || !residual) throw DomainError("OcpProblem: shooting and residual maps required");
  if (process_weight.size() != 0 &&
      (process_weight.size() != state_dim || (process_weight.array() < 0.0).any())) {
    throw DomainError("OcpProblem: process weight must be empty or a non-negative state vector");
  }
  const int prior_dim = (free_initial_state ? state_dim : 0) + param_dim;
  if (prior_anchor.size() != 0 &&
      (prior_anchor.size() != prior_dim || prior_weight.rows() != prior_dim ||
       prior_weight.cols() != prior_dim)) {
    throw DomainError("OcpProblem: prior dimensions do not match [x0; q]");
  }
  const auto check_bounds = [](const VectorXd& lo, const VectorXd& hi, int dim, const char* what) {
    if (lo.size() == 0 && hi.size() == 0) return;
    if (lo.size() != dim || hi.size() != dim || (lo.array() > hi.array()).any()) {
      throw DomainError(std::string("OcpProblem: inconsistent ") + what + " bounds");
    }
  };
  check_bounds(input_lower, input_upper, input_dim, "input");
  check_bounds(param_lower, param_upper, param_dim, "parameter");
}

void RtiIterate::check(const OcpProblem& problem) const {
  const Layout l(problem);
  const auto n_states = static_cast<std::size_t>(l.n + 1);
  if (states.size() != n_states || inputs.size() != static_cast<std::size_t>(l.nu_nodes)) {
    throw DomainError("RtiIterate: node counts do not match the problem");
  }
  for (const auto& x : states) {
    if (x.size() != l.nx || !x.allFinite()) throw DomainError("RtiIterate: bad state node");
  }
  for (const auto& u : inputs) {
    if (u.size() != l.nu || !u.allFinite()) throw DomainError("RtiIterate: bad input node");
  }
  if (problem.has_corrections()) {
    if (corrections.size() != static_cast<std::size_t>(l.n)) {
      throw DomainError("RtiIterate: correction count does not match the problem");
    }
    for (const auto& w : corrections) {
      if (w.size() != l.nx) throw DomainError("RtiIterate: bad correction node");
    }
  }
  if (params.size() != l.np || !params.allFinite()) {
    throw DomainError("RtiIterate: parameter vector has the wrong size");
  }
}

CondensedQp condense(const OcpProblem& problem, const RtiIterate& iterate,
                     const VectorXd& anchor) {
  problem.validate();
  iterate.check(problem);
  const Layout l(problem);
  if (!problem.free_initial_state && (anchor.size() != l.nx || !anchor.allFinite())) {
    throw DomainError("condense: anchor must be a finite state vector");
  }

  CondensedQp out;
  MatrixXd& h = out.qp.hessian;
  VectorXd& g = out.qp.gradient;
  h.setZero(l.size, l.size);
  g.setZero(l.size);
  out.qp.lower.setConstant(l.size, -kInf);
  out.qp.upper.setConstant(l.size, kInf);
  out.offsets.reserve(static_cast<std::size_t>(l.n + 1));
  out.maps.reserve(static_cast<std::size_t>(l.n + 1));

  // Rank update restricted to the leading `cols` decision columns.
  const auto accumulate = [&](const auto& jac, const VectorXd& rbar, int cols) {
    h.topLeftCorner(cols, cols).selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose());
    g.head(cols).noalias() += jac.transpose() * rbar;
  };

  VectorXd a(l.nx);
  MatrixXd e = MatrixXd::Zero(l.nx, l.size);
  if (problem.free_initial_state) {
    a.setZero();
    e.leftCols(l.nx).setIdentity();
  } else {
    a = anchor - iterate.states.front();
  }

  const VectorXd& q = iterate.params;
  MatrixXd jac(0, 0);
  MatrixXd e_next(l.nx, l.size);
  for (int k = 0; k <= l.n; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const VectorXd& x = iterate.states[ks];
    const VectorXd& u = input_at(iterate, k, l);
    const bool has_u = k < l.nu_nodes;
    const int c = l.prefix(k);
    out.offsets.push_back(a);
    out.maps.push_back(e);

    const ResidualBlock res = residual_at(problem, k, x, u, q);
    check_block("residual", k, res.value, res.d_state, res.d_input, res.d_param, -1, l, has_u);
    const int cr = c + (has_u ? l.nu : 0);
    jac.resize(res.value.size(), cr);
    jac.leftCols(c).noalias() = res.d_state * e.leftCols(c);
    if (has_u && l.nu > 0) jac.middleCols(l.u_col(k), l.nu) = res.d_input;
    if (l.np > 0) jac.middleCols(l.off_q, l.np) += res.d_param;
    accumulate(jac, res.value + res.d_state * a, cr);
    out.objective += res.value.squaredNorm();

    if (k == l.n) break;

    const ShootingBlock sh = shoot_at(problem, k, x, u, q);
    check_block("shooting", k, sh.end, sh.d_state, sh.d_input, sh.d_param, l.nx, l, true);
    VectorXd defect = sh.end - iterate.states[ks + 1];
    if (problem.has_corrections()) {
      const VectorXd& w = iterate.corrections[ks];
      defect += w;
      // Penalty rows W (w_k + dw_k) touch only the diagonal block of dw_k.
      const int j = l.w_col(k);
      const VectorXd w2 = problem.process_weight.cwiseAbs2();
      h.diagonal().segment(j, l.nx) += w2;
      g.segment(j, l.nx) += w2.cwiseProduct(w);
      out.objective += problem.process_weight.cwiseProduct(w).squaredNorm();
    }
    out.defect_norm = std::max(out.defect_norm, defect.cwiseAbs().maxCoeff());

    a = sh.d_state * a + defect;
    const int cn = l.prefix(k + 1);
    e_next.leftCols(c).noalias() = sh.d_state * e.leftCols(c);
    e_next.middleCols(c, cn - c).setZero();
    if (l.nu > 0) e_next.middleCols(l.u_col(k), l.nu) = sh.d_input;
    if (l.np > 0) e_next.middleCols(l.off_q, l.np) += sh.d_param;
    if (problem.has_corrections()) e_next.middleCols(l.w_col(k), l.nx).setIdentity();
    e.leftCols(cn) = e_next.leftCols(cn);
  }

  if (problem.prior_anchor.size() > 0) {
    const int nz = static_cast<int>(problem.prior_anchor.size());
    VectorXd z(nz);
    MatrixXd sel = MatrixXd::Zero(nz, l.base);
    int row = 0;
    if (problem.free_initial_state) {
      z.head(l.nx) = iterate.states.front();
      sel.block(0, 0, l.nx, l.nx).setIdentity();
      row = l.nx;
    }
    if (l.np > 0) {
      z.tail(l.np) = q;
      sel.block(row, l.off_q, l.np, l.np).setIdentity();
    }
    const VectorXd rp = problem.prior_weight * (z - problem.prior_anchor);
    accumulate(MatrixXd(problem.prior_weight * sel), rp, l.base);
    out.objective += rp.squaredNorm();
  }

  h.triangularView<Eigen::StrictlyUpper>() = h.transpose();

  for (int k = 0; k < l.nu_nodes; ++k) {
    const VectorXd& u = iterate.inputs[static_cast<std::size_t>(k)];
    for (int i = 0; i < l.nu; ++i) {
      const int j = l.u_col(k) + i;
      out.qp.lower(j) = bound_or(problem.input_lower, i, -kInf) - u(i);
      out.qp.upper(j) = bound_or(problem.input_upper, i, kInf) - u(i);
    }
  }
  for (int i = 0; i < l.np; ++i) {
    out.qp.lower(l.off_q + i) = bound_or(problem.param_lower, i, -kInf) - q(i);
    out.qp.upper(l.off_q + i) = bound_or(problem.param_upper, i, kInf) - q(i);
  }
  // A previous iterate outside its box (after a bound change) would make the
  // QP box empty on that side; the step then moves it onto the bound.
  out.qp.lower = out.qp.lower.cwiseMin(out.qp.upper);
  return out;
}

RtiIterate RtiEngine::step(const OcpProblem& problem, const RtiIterate& iterate,
                           const VectorXd& anchor, RtiReport* report) {
  const CondensedQp cq = condense(problem, iterate, anchor);
  QpSolution<double> sol;
  try {
    sol = solver_.solve(cq.qp, last_ ? &*last_ : nullptr);
  } catch (const QpError& e) {
    last_.reset();
    throw RtiError(std::string("condensed QP: ") + e.what(), -1);
  }
  const Layout l(problem);
  const VectorXd& d = sol.primal;

  const auto snapped = [&](double value, double step, double lo, double hi, BoundStatus s) {
    if (s == BoundStatus::kLower) return lo;
    if (s == BoundStatus::kUpper) return hi;
    return std::clamp(value + step, lo, hi);
  };

  RtiIterate next = iterate;
  for (int k = 0; k <= l.n; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    next.states[ks] += cq.offsets[ks] + cq.maps[ks] * d;
  }
  if (!problem.free_initial_state) next.states.front() = anchor;
  for (int k = 0; k < l.nu_nodes; ++k) {
    VectorXd& u = next.inputs[static_cast<std::size_t>(k)];
    for (int i = 0; i < l.nu; ++i) {
      const int j = l.u_col(k) + i;
      u(i) = snapped(u(i), d(j), bound_or(problem.input_lower, i, -kInf),
                     bound_or(problem.input_upper, i, kInf),
                     sol.active_set[static_cast<std::size_t>(j)]);
    }
  }
  if (problem.has_corrections()) {
    for (int k = 0; k < l.n; ++k) {
      next.corrections[static_cast<std::size_t>(k)] += d.segment(l.w_col(k), l.nx);
    }
  }
  for (int i = 0; i < l.np; ++i) {
    const int j = l.off_q + i;
    next.params(i) = snapped(next.params(i), d(j), bound_or(problem.param_lower, i, -kInf),
                             bound_or(problem.param_upper, i, kInf),
                             sol.active_set[static_cast<std::size_t>(j)]);
  }

  if (report != nullptr) {
    report->objective = cq.objective;
    report->defect_norm = cq.defect_norm;
    report->step_norm = d.size() > 0 ? d.cwiseAbs().maxCoeff() : 0.0;
    report->qp_iterations = sol.iterations;
    report->qp_regularization = sol.regularization;
  }
  last_ = std::move(sol);
  return next;
}

RtiIterate rti_step(const OcpProblem& problem, const RtiIterate& iterate, const VectorXd& anchor,
                    RtiReport* report) {
  RtiEngine engine;
  return engine.step(problem, iterate, anchor, report);
}

RtiIterate shift_warm_start(const OcpProblem& problem, const RtiIterate& iterate) {
  problem.validate();
  iterate.check(problem);
  const Layout l(problem);
  if (l.n < 2) throw DomainError("shift_warm_start: horizon must be >= 2");
  RtiIterate out = iterate;
  std::rotate(out.states.begin(), out.states.begin() + 1, out.states.end());
  std::rotate(out.inputs.begin(), out.inputs.begin() + 1, out.inputs.end());
  out.inputs.back() = out.inputs[out.inputs.size() - 2];
  if (problem.has_corrections()) {
    std::rotate(out.corrections.begin(), out.corrections.begin() + 1, out.corrections.end());
    out.corrections.back().setZero();
  }
  const int last = l.n - 1;
  const auto ls = static_cast<std::size_t>(last);
  out.states.back() =
      shoot_at(problem, last, out.states[ls], input_at(out, last, l), out.params).end;
  if (problem.has_corrections()) out.states.back() += out.corrections[ls];
  return out;
}

RtiIterate initial_guess(const OcpProblem& problem, const VectorXd& x0,
                         const std::vector<VectorXd>& inputs, const VectorXd& params) {
  problem.validate();
  const Layout l(problem);
  if (x0.size() != l.nx) throw DomainError("initial_guess: x0 has the wrong size");
  if (params.size() != l.np) throw DomainError("initial_guess: params have the wrong size");
  if (inputs.empty() && l.nu_nodes > 0) throw DomainError("initial_guess: no inputs given");
  RtiIterate it;
  it.params = params;
  for (int k = 0; k < l.nu_nodes; ++k) {
    it.inputs.push_back(inputs[std::min<std::size_t>(static_cast<std::size_t>(k),
                                                     inputs.size() - 1)]);
  }
  it.states.push_back(x0);
  for (int k = 0; k < l.n; ++k) {
    it.states.push_back(
        shoot_at(problem, k, it.states.back(), input_at(it, k, l), it.params).end);
  }
  if (problem.has_corrections()) {
    it.corrections.assign(static_cast<std::size_t>(l.n), VectorXd::Zero(l.nx));
  }
  it.check(problem);
  return it;
}

double objective(const OcpProblem& problem, const RtiIterate& iterate) {
  problem.validate();
  iterate.check(problem);
  const Layout l(problem);
  double total = 0.0;
  for (int k = 0; k <= l.n; ++k) {
    total += residual_at(problem, k, iterate.states[static_cast<std::size_t>(k)],
                         input_at(iterate, k, l), iterate.params)
                 .value.squaredNorm();
  }
  if (problem.has_corrections()) {
    for (const auto& w : iterate.corrections) {
      total += problem.process_weight.cwiseProduct(w).squaredNorm();
    }
  }
  if (problem.prior_anchor.size() > 0) {
    VectorXd z(problem.prior_anchor.size());
    if (problem.free_initial_state) z.head(l.nx) = iterate.states.front();
    if (l.np > 0) z.tail(l.np) = iterate.params;
    total += (problem.prior_weight * (z - problem.prior_anchor)).squaredNorm();
  }
  return total;
}

}  // namespace tdmpc
