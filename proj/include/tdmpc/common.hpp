#ifndef TDMPC_COMMON_HPP_
#define TDMPC_COMMON_HPP_

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace tdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar, int Rows>
using Vec = Eigen::Matrix<Scalar, Rows, 1>;

template <typename Scalar, int Rows, int Cols>
using Mat = Eigen::Matrix<Scalar, Rows, Cols>;

inline constexpr double kPi = std::numbers::pi;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle to (-pi, pi]. Only used for display and export.
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

/// Thrown when an argument violates a type invariant (non-finite values,
/// non-positive geometry, inverted bounds and the like).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown by configuration loading and validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace tdmpc

#endif  // TDMPC_COMMON_HPP_
