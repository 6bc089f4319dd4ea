#ifndef TDMPC_BOX_QP_HPP_
#define TDMPC_BOX_QP_HPP_

// Dense strictly convex QP with simple bounds,
//
//   min 1/2 x' H x + g' x   s.t.  lower <= x <= upper,
//
// solved with a primal active-set method. Each working-set change refactors
// the free block with a Cholesky decomposition; the problems produced by the
// condensed real-time iteration are small enough that this is cheaper than
// maintaining updatable factorizations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "tdmpc/common.hpp"

namespace tdmpc {

enum class BoundStatus { kFree, kLower, kUpper };

template <typename Scalar>
struct BoxQp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix hessian;
  Vector gradient;
  Vector lower;
  Vector upper;

  Eigen::Index size() const { return gradient.size(); }

  void validate() const {
    const Eigen::Index n = gradient.size();
    if (hessian.rows() != n || hessian.cols() != n || lower.size() != n || upper.size() != n) {
      throw DomainError("BoxQp: inconsistent dimensions");
    }
    if (!hessian.allFinite() || !gradient.allFinite()) {
      throw DomainError("BoxQp: non-finite hessian or gradient");
    }
    const Scalar scale = std::max(Scalar(1), hessian.cwiseAbs().maxCoeff());
    if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10) * scale) {
      throw DomainError("BoxQp: hessian is not symmetric");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) {
        throw DomainError("BoxQp: bound " + std::to_string(i) + " has lower > upper");
      }
    }
  }

  Scalar objective(const Vector& x) const {
    return Scalar(0.5) * x.dot(hessian * x) + gradient.dot(x);
  }
};

template <typename Scalar>
struct QpSolution {
  typename BoxQp<Scalar>::Vector primal;
  std::vector<BoundStatus> active_set;
  int iterations = 0;
  Scalar regularization = Scalar(0);
};

struct QpSettings {
  int max_iterations = 100;
  /// Smallest admissible Hessian eigenvalue; lambda*I is added to reach it.
  double min_eigenvalue = 1e-8;
};

class QpError : public std::runtime_error {
 public:
  QpError(const std::string& what, Eigen::VectorXd best_iterate)
      : std::runtime_error(what), best_iterate_(std::move(best_iterate)) {}

  const Eigen::VectorXd& best_iterate() const { return best_iterate_; }

 private:
  Eigen::VectorXd best_iterate_;
};

/// Largest violation of the first-order optimality conditions: gradient of
/// free variables, wrongly signed multipliers of bound variables, and bound
/// infeasibility.
template <typename Scalar>
Scalar kkt_residual(const BoxQp<Scalar>& qp, const typename BoxQp<Scalar>::Vector& x) {
  const typename BoxQp<Scalar>::Vector grad = qp.hessian * x + qp.gradient;
  Scalar worst(0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    worst = std::max({worst, qp.lower(i) - x(i), x(i) - qp.upper(i)});
    if (x(i) <= qp.lower(i) && x(i) >= qp.upper(i)) continue;  // fixed variable
    if (x(i) <= qp.lower(i)) {
      worst = std::max(worst, -grad(i));
    } else if (x(i) >= qp.upper(i)) {
      worst = std::max(worst, grad(i));
    } else {
      worst = std::max(worst, std::abs(grad(i)));
    }
  }
  return worst;
}

/// Active-set solver with reusable scratch storage. Not thread-safe; use one
/// instance per thread.
template <typename Scalar>
class BoxQpSolver {
 public:
  using Matrix = typename BoxQp<Scalar>::Matrix;
  using Vector = typename BoxQp<Scalar>::Vector;

  explicit BoxQpSolver(QpSettings settings = {}) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }

  QpSolution<Scalar> solve(const BoxQp<Scalar>& qp,
                           const QpSolution<Scalar>* warm_start = nullptr) {
    qp.validate();
    gradient_ = qp.gradient;
    const Eigen::Index n = qp.size();
    QpSolution<Scalar> sol;
    sol.primal = Vector::Zero(n);
    sol.active_set.assign(static_cast<std::size_t>(n), BoundStatus::kFree);

    regularize(qp, sol);

    const bool warm = warm_start != nullptr && warm_start->primal.size() == n &&
                      static_cast<Eigen::Index>(warm_start->active_set.size()) == n;
    Vector& x = sol.primal;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      BoundStatus s = BoundStatus::kFree;
      if (warm) {
        x(i) = warm_start->primal(i);
        s = warm_start->active_set[k];
      }
      if (qp.lower(i) == qp.upper(i) || s == BoundStatus::kLower || x(i) <= qp.lower(i)) {
        s = BoundStatus::kLower;
      } else if (s == BoundStatus::kUpper || x(i) >= qp.upper(i)) {
        s = BoundStatus::kUpper;
      }
      if (s == BoundStatus::kLower && std::isinf(qp.lower(i))) s = BoundStatus::kFree;
      if (s == BoundStatus::kUpper && std::isinf(qp.upper(i))) s = BoundStatus::kFree;
      sol.active_set[k] = s;
      if (s == BoundStatus::kLower) x(i) = qp.lower(i);
      if (s == BoundStatus::kUpper) x(i) = qp.upper(i);
      if (!std::isfinite(x(i))) x(i) = Scalar(0);
    }

    for (int iter = 0; iter < settings_.max_iterations; ++iter) {
      sol.iterations = iter + 1;
      const Vector target = subspace_minimizer(sol);

      // Ratio test along the step towards the subspace minimizer.
      Scalar alpha(1);
      Eigen::Index blocking = -1;
      bool blocking_lower = false;
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(free_.size()); ++j) {
        const Eigen::Index i = free_[static_cast<std::size_t>(j)];
        const Scalar d = target(j) - x(i);
        if (d < Scalar(0) && x(i) + d < qp.lower(i)) {
          const Scalar a = (qp.lower(i) - x(i)) / d;
          if (a < alpha) {
            alpha = a;
            blocking = i;
            blocking_lower = true;
          }
        } else if (d > Scalar(0) && x(i) + d > qp.upper(i)) {
          const Scalar a = (qp.upper(i) - x(i)) / d;
          if (a < alpha) {
            alpha = a;
            blocking = i;
            blocking_lower = false;
          }
        }
      }
      alpha = std::max(alpha, Scalar(0));
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(free_.size()); ++j) {
        const Eigen::Index i = free_[static_cast<std::size_t>(j)];
        x(i) += alpha * (target(j) - x(i));
        x(i) = std::clamp(x(i), qp.lower(i), qp.upper(i));
      }
      if (blocking >= 0) {
        const auto k = static_cast<std::size_t>(blocking);
        sol.active_set[k] = blocking_lower ? BoundStatus::kLower : BoundStatus::kUpper;
        x(blocking) = blocking_lower ? qp.lower(blocking) : qp.upper(blocking);
        continue;
      }

      // Full step taken: check multiplier signs of the bound variables.
      const Vector grad = h_ * x + qp.gradient;
      Eigen::Index release = -1;
      Scalar worst(0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (qp.lower(i) == qp.upper(i)) continue;
        Scalar violation(0);
        if (sol.active_set[k] == BoundStatus::kLower) violation = -grad(i);
        if (sol.active_set[k] == BoundStatus::kUpper) violation = grad(i);
        if (violation > worst) {
          worst = violation;
          release = i;
        }
      }
      if (release < 0 || worst <= multiplier_tolerance(grad)) return sol;
      sol.active_set[static_cast<std::size_t>(release)] = BoundStatus::kFree;
    }
    throw QpError("box QP: iteration cap of " + std::to_string(settings_.max_iterations) +
                      " exceeded",
                  x.template cast<double>());
  }

 private:
  // Adds lambda*I so the smallest eigenvalue is at least min_eigenvalue. The
  // smallest eigenvalue is estimated by inverse iteration on the Cholesky
  // factor; an exact eigen-solve is used only when the factorization fails.
  void regularize(const BoxQp<Scalar>& qp, QpSolution<Scalar>& sol) {
    const Eigen::Index n = qp.size();
    h_ = qp.hessian;
    if (n == 0) return;
    const Scalar floor(settings_.min_eigenvalue);
    Scalar lambda_min;
    Eigen::LLT<Matrix> llt(h_);
    if (llt.info() == Eigen::Success) {
      Vector v = Vector::Ones(n) / std::sqrt(Scalar(n));
      Scalar rayleigh = v.dot(h_ * v);
      for (int k = 0; k < 8; ++k) {
        v = llt.solve(v);
        const Scalar nv = v.norm();
        if (!(nv > Scalar(0)) || !std::isfinite(nv)) break;
        v /= nv;
        rayleigh = v.dot(h_ * v);
      }
      lambda_min = rayleigh;
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(h_, Eigen::EigenvaluesOnly);
      lambda_min = eig.eigenvalues().minCoeff();
    }
    const Scalar lambda = std::max(Scalar(0), floor - lambda_min);
    if (lambda > Scalar(0)) h_.diagonal().array() += lambda;
    sol.regularization = lambda;
  }

  Scalar multiplier_tolerance(const Vector& grad) const {
    return Scalar(1e-10) * std::max(Scalar(1), grad.cwiseAbs().maxCoeff());
  }

  // Minimizer over the free variables with the bound variables held fixed.
  Vector subspace_minimizer(const QpSolution<Scalar>& sol) {
    const Eigen::Index n = sol.primal.size();
    free_.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sol.active_set[static_cast<std::size_t>(i)] == BoundStatus::kFree) free_.push_back(i);
    }
    const auto nf = static_cast<Eigen::Index>(free_.size());
    Vector rhs(nf);
    hff_.resize(nf, nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index i = free_[static_cast<std::size_t>(a)];
      Scalar r = -gradient_(i);
      for (Eigen::Index k = 0; k < n; ++k) {
        if (sol.active_set[static_cast<std::size_t>(k)] != BoundStatus::kFree) {
          r -= h_(i, k) * sol.primal(k);
        }
      }
      rhs(a) = r;
      for (Eigen::Index b = 0; b < nf; ++b) hff_(a, b) = h_(i, free_[static_cast<std::size_t>(b)]);
    }
    if (nf == 0) return rhs;
    llt_.compute(hff_);
    if (llt_.info() != Eigen::Success) {
      throw QpError("box QP: free-variable Hessian block is not positive definite",
                    sol.primal.template cast<double>());
    }
    Vector sol_f = llt_.solve(rhs);
    sol_f += llt_.solve(Vector(rhs - hff_ * sol_f));  // one refinement sweep
    return sol_f;
  }

  QpSettings settings_;
  Matrix h_;
  Matrix hff_;
  Vector gradient_;
  std::vector<Eigen::Index> free_;
  Eigen::LLT<Matrix> llt_;
};

/// Convenience wrapper with a throw-away workspace.
template <typename Scalar>
QpSolution<Scalar> solve_box_qp(const BoxQp<Scalar>& qp,
                                const QpSolution<Scalar>* warm_start = nullptr,
                                QpSettings settings = {}) {
  BoxQpSolver<Scalar> solver(settings);
  return solver.solve(qp, warm_start);
}

}  // namespace tdmpc

#endif  // TDMPC_BOX_QP_HPP_
