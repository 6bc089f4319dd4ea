#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "tdmpc/vehicle_model.hpp"

namespace tdmpc {
namespace {

const VehicleGeometry kGeom;

TEST(VehicleModel, StraightLineUnitSlips) {
  const VehicleState x = make_state(0, 0, 0, -2.4, 0, 0, 1.0);
  const StateVec<double> dx =
      state_derivative<double>(x, make_input(0, 0), 0.0, SlipParams::Ones(), kGeom);
  EXPECT_DOUBLE_EQ(dx(st::kXt), 1.0);
  EXPECT_DOUBLE_EQ(dx(st::kYt), 0.0);
  EXPECT_DOUBLE_EQ(dx(st::kTheta), 0.0);
  EXPECT_DOUBLE_EQ(dx(st::kXi), 1.0);
  EXPECT_DOUBLE_EQ(dx(st::kYi), 0.0);
  EXPECT_DOUBLE_EQ(dx(st::kPsi), 0.0);
  EXPECT_DOUBLE_EQ(dx(st::kSpeed), 0.0);
}

TEST(VehicleModel, LongitudinalSlipHalvesRates) {
  const VehicleState x = make_state(0, 0, 0, -2.4, 0, 0, 1.0);
  const StateVec<double> dx =
      state_derivative<double>(x, make_input(0, 0), 0.0, make_slips(0.5, 1, 1), kGeom);
  EXPECT_DOUBLE_EQ(dx(st::kXt), 0.5);
  EXPECT_DOUBLE_EQ(dx(st::kXi), 0.5);
}

TEST(VehicleModel, TenDegreeSteeringRates) {
  // Hand evaluation: beta = 0 and delta_i = 0 leave sin(0) = 0 and cos(0) = 1.
  const double t = std::tan(10.0 * 3.14159265358979323846 / 180.0);
  const double theta_dot = t / 1.4;
  const double psi_dot = -(1.1 / 1.4) * t / 1.3;
  EXPECT_NEAR(theta_dot, 0.1259478, 1e-7);
  EXPECT_NEAR(psi_dot, -0.1065713, 1e-7);

  const VehicleState x = make_state(0, 0, 0, -2.4, 0, 0, 1.0);
  const StateVec<double> dx = state_derivative<double>(x, make_input(deg2rad(10), 0), 0.0,
                                                       SlipParams::Ones(), kGeom);
  EXPECT_NEAR(dx(st::kTheta), theta_dot, 1e-15);
  EXPECT_NEAR(dx(st::kPsi), psi_dot, 1e-15);
}

TEST(VehicleModel, HitchClosure) {
  VehicleState x = make_state(0, 0, 0.3, 0, 0, 0.3, 1);
  EXPECT_DOUBLE_EQ(hitch_angle<double>(x, make_input(0, 0), SlipParams::Ones()), 0.0);
  x(st::kTheta) = 0.2;
  x(st::kPsi) = 0.0;
  EXPECT_NEAR(hitch_angle<double>(x, make_input(0, 0.05), SlipParams::Ones()), 0.15, 1e-15);
}

TEST(VehicleModel, RejectsNonFinite) {
  VehicleState x = make_state(0, 0, 0, 0, 0, 0, 1);
  x(st::kYi) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(closure_derivative<double>(x, make_input(0, 0), SlipParams::Ones(), kGeom),
               DomainError);
  x(st::kYi) = 0;
  EXPECT_THROW(closure_derivative<double>(x, make_input(INFINITY, 0), SlipParams::Ones(), kGeom),
               DomainError);
  EXPECT_THROW((VehicleGeometry{1.4, 0.0, 1.1}.validate()), DomainError);
}

TEST(VehicleModel, OutputsCopyPositionsExactly) {
  testing::Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const VehicleState x = gen.state();
    const OutputVec<double> y = measurement_function<double>(x, gen.input(), gen.slips());
    EXPECT_EQ(y(out::kXt), x(st::kXt));
    EXPECT_EQ(y(out::kYt), x(st::kYt));
    EXPECT_EQ(y(out::kXi), x(st::kXi));
    EXPECT_EQ(y(out::kYi), x(st::kYi));
    EXPECT_EQ(y(out::kSpeed), x(st::kSpeed));
  }
}

TEST(VehicleModelProperty, SlipLinearity) {
  testing::Gen gen(12);
  for (int trial = 0; trial < 500; ++trial) {
    const VehicleState x = gen.state();
    const ControlInput u = gen.input();
    SlipParams p = gen.slips();
    const double beta = gen.uniform(-0.5, 0.5);
    const double c = gen.uniform(0.1, 3.0);
    const StateVec<double> base = state_derivative<double>(x, u, beta, p, kGeom);
    p(par::kMu) *= c;
    const StateVec<double> scaled = state_derivative<double>(x, u, beta, p, kGeom);
    for (int i = 0; i < kStateDim; ++i) {
      EXPECT_NEAR(scaled(i), c * base(i), 1e-13 * (1 + std::abs(c * base(i))));
    }
  }
}

TEST(VehicleModelProperty, MirrorSymmetry) {
  testing::Gen gen(13);
  for (int trial = 0; trial < 500; ++trial) {
    const VehicleState x = gen.state();
    const ControlInput u = gen.input();
    const SlipParams p = gen.slips();
    const double beta = gen.uniform(-0.5, 0.5);
    VehicleState m = x;
    for (int i : {st::kYt, st::kTheta, st::kYi, st::kPsi}) m(i) = -m(i);
    const StateVec<double> d = state_derivative<double>(x, u, beta, p, kGeom);
    const StateVec<double> dm = state_derivative<double>(m, -u, -beta, p, kGeom);
    for (int i : {st::kXt, st::kXi, st::kSpeed}) EXPECT_NEAR(dm(i), d(i), 1e-14);
    for (int i : {st::kYt, st::kTheta, st::kYi, st::kPsi}) EXPECT_NEAR(dm(i), -d(i), 1e-14);
  }
}

TEST(VehicleModelProperty, StraightLineEquilibrium) {
  testing::Gen gen(14);
  for (int trial = 0; trial < 200; ++trial) {
    VehicleState x = gen.state();
    x(st::kPsi) = x(st::kTheta);
    const StateVec<double> d =
        closure_derivative<double>(x, make_input(0, 0), gen.slips(), kGeom);
    EXPECT_EQ(d(st::kTheta), 0.0);
    EXPECT_EQ(d(st::kPsi), 0.0);
  }
}

}  // namespace
}  // namespace tdmpc
