#ifndef TDMPC_RTI_HPP_
#define TDMPC_RTI_HPP_

// Real-time iteration on a multiple-shooting least-squares problem
//
//   min  sum_k |r_k(x_k, u_k, q)|^2 + sum_k |W w_k|^2 + |P ([x_0; q] - z_bar)|^2
//   s.t. x_{k+1} = Phi_k(x_k, u_k, q) + w_k,   u_lo <= u_k <= u_hi,  q_lo <= q <= q_hi
//
// with x_0 either fixed to an anchor (control) or free (estimation). One call
// performs a single Gauss-Newton step: linearize at the current iterate,
// condense the states away, solve the box QP in the remaining variables and
// take the full step.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tdmpc/box_qp.hpp"
#include "tdmpc/common.hpp"

namespace tdmpc {

struct ShootingBlock {
  VectorXd end;
  MatrixXd d_state;
  MatrixXd d_input;
  MatrixXd d_param;
};

struct ResidualBlock {
  VectorXd value;
  MatrixXd d_state;
  MatrixXd d_input;
  MatrixXd d_param;
};

using ShootingFn =
    std::function<ShootingBlock(int node, const VectorXd& x, const VectorXd& u, const VectorXd& q)>;
/// Called for nodes 0..N. At node N the input is empty unless
/// inputs_at_terminal_node is set.
using ResidualFn =
    std::function<ResidualBlock(int node, const VectorXd& x, const VectorXd& u, const VectorXd& q)>;

struct OcpProblem {
  int horizon = 0;
  double sample_time = 0.0;
  int state_dim = 0;
  int input_dim = 0;
  int param_dim = 0;
  bool free_initial_state = false;
  bool inputs_at_terminal_node = false;

  ShootingFn shoot;
  ResidualFn residual;

  /// Per-state weight W of the additive corrections w_k. Empty: no corrections.
  VectorXd process_weight;
  /// Prior on [x_0 (if free); q]. Empty: no prior.
  VectorXd prior_anchor;
  MatrixXd prior_weight;

  VectorXd input_lower;
  VectorXd input_upper;
  VectorXd param_lower;
  VectorXd param_upper;

  void validate() const;
  int input_nodes() const { return horizon + (inputs_at_terminal_node ? 1 : 0); }
  bool has_corrections() const { return process_weight.size() > 0; }
  int decision_size() const;
  /// Positions in the condensed decision vector.
  int param_offset() const;
  int input_offset(int node) const;
  int correction_offset(int node) const;
};

struct RtiIterate {
  std::vector<VectorXd> states;       // N+1 nodes
  std::vector<VectorXd> inputs;       // input_nodes()
  std::vector<VectorXd> corrections;  // N when the problem has corrections
  VectorXd params;

  void check(const OcpProblem& problem) const;
};

class RtiError : public std::runtime_error {
 public:
  RtiError(const std::string& what, int node) : std::runtime_error(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

/// Condensed Gauss-Newton subproblem. The decision vector is ordered node by
/// node, [dx_0 (free initial state) | dq | du_0 dw_0 | ... | du_{N-1} dw_{N-1} | du_N],
/// and the state step at node k is dx_k = offsets[k] + maps[k] * d.
struct CondensedQp {
  BoxQp<double> qp;
  std::vector<VectorXd> offsets;
  std::vector<MatrixXd> maps;
  double objective = 0.0;        // at the linearization point
  double defect_norm = 0.0;      // max |Phi_k + w_k - x_{k+1}|
};

CondensedQp condense(const OcpProblem& problem, const RtiIterate& iterate,
                     const VectorXd& anchor);

struct RtiReport {
  double objective = 0.0;  // at the linearization point
  double defect_norm = 0.0;
  double step_norm = 0.0;  // max-norm of the decision step
  int qp_iterations = 0;
  double qp_regularization = 0.0;
};

/// One engine per controller or estimator; keeps QP scratch memory and the
/// previous working set.
class RtiEngine {
 public:
  explicit RtiEngine(QpSettings settings = {}) : solver_(settings) {}

  /// `anchor` is the current state when the initial state is fixed; ignored
  /// otherwise.
  RtiIterate step(const OcpProblem& problem, const RtiIterate& iterate, const VectorXd& anchor,
                  RtiReport* report = nullptr);

  void reset() { last_.reset(); }

 private:
  BoxQpSolver<double> solver_;
  std::optional<QpSolution<double>> last_;
};

RtiIterate rti_step(const OcpProblem& problem, const RtiIterate& iterate, const VectorXd& anchor,
                    RtiReport* report = nullptr);

/// Shifts every trajectory one node forward, duplicates the last input and
/// re-integrates the terminal node. Requires N >= 2.
RtiIterate shift_warm_start(const OcpProblem& problem, const RtiIterate& iterate);

/// Forward simulation from x0 with the given inputs (one per input node).
RtiIterate initial_guess(const OcpProblem& problem, const VectorXd& x0,
                         const std::vector<VectorXd>& inputs, const VectorXd& params = {});

/// Least-squares objective evaluated on the iterate's nodes.
double objective(const OcpProblem& problem, const RtiIterate& iterate);

}  // namespace tdmpc

#endif  // TDMPC_RTI_HPP_
