#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "generators.hpp"
#include "tdmpc/integrator.hpp"
#include "tdmpc/nmhe.hpp"

namespace tdmpc {
namespace {

Measurement fix(double t, double xt, double yt, double xi, double yi) {
  Measurement m;
  m.timestamp = t;
  m.x_t = xt;
  m.y_t = yt;
  m.x_i = xi;
  m.y_i = yi;
  m.v = 0.15;
  return m;
}

struct WeavingRun {
  std::vector<Measurement> measurements;
  std::vector<VehicleState> truth;
};

// Measurement stream of the plant under a weaving steering input. The ideal
// actuator is set to each command before sampling, so the measured steering
// is the one held over the following interval.
WeavingRun weaving_run(const SlipParams& slips, int samples, const NoiseConfig& noise,
                double amplitude = 0.3, std::uint64_t seed = 1) {
  PlantConfig c;
  c.slips = SlipProfile::constant(slips);
  c.actuator.tractor_time_constant = 0.0;
  c.actuator.trailer_time_constant = 0.0;
  PlantState s;
  s.x = make_state(0, 0, 0, -2.4, 0, 0, 1.0);
  Rng rng(seed);
  WeavingRun out;
  for (int k = 0; k < samples; ++k) {
    const double t = 0.2 * k;
    const ControlInput cmd =
        make_input(amplitude * std::sin(0.4 * t), 0.2 * std::sin(0.25 * t + 1.0));
    s.steering = cmd;
    out.measurements.push_back(
        sensor_sample(s.x, s.steering, plant_hitch_angle(s, c), noise, rng, t));
    out.truth.push_back(s.x);
    s = plant_step(s, cmd, 0.2, c);
  }
  return out;
}

std::vector<Measurement> noise_free_run(const SlipParams& slips, int samples) {
  return weaving_run(slips, samples, NoiseConfig{0, 0, 0, 0}).measurements;
}

TEST(Nmhe, ColdStartWaitsForDisplacement) {
  EstimatorConfig cfg;
  std::vector<Measurement> ms;
  for (int k = 0; k < 3; ++k) ms.push_back(fix(0.2 * k, 1.0, 2.0 + 0.03 * k, 1.0, -0.4 + 0.03 * k));
  EXPECT_FALSE(cold_start({ms[0]}, cfg).has_value());
  EXPECT_FALSE(cold_start({ms[0], ms[1]}, cfg).has_value());
  const auto w = cold_start(ms, cfg);
  ASSERT_TRUE(w.has_value());
  EXPECT_NEAR(w->arrival.anchor(st::kTheta), 0.5 * kPi, 1e-12);
  EXPECT_NEAR(w->arrival.anchor(st::kPsi), 0.5 * kPi, 1e-12);
  EXPECT_EQ(w->arrival.anchor(st::kXt), 1.0);
  EXPECT_EQ(w->arrival.anchor(st::kYt), 2.0);
  for (int i = 0; i < kParamDim; ++i) EXPECT_EQ(w->arrival.anchor(kStateDim + i), 0.625);
  EXPECT_EQ(w->measurements.size(), 3u);

  MovingHorizonEstimator mhe(cfg);
  EXPECT_FALSE(mhe.step(ms[0]).has_value());
  EXPECT_FALSE(mhe.step(ms[1]).has_value());
  EXPECT_TRUE(mhe.step(ms[2]).has_value());
  EXPECT_TRUE(mhe.initialized());
}

TEST(Nmhe, ArrivalCostFixedPoint) {
  ArrivalCost prior{(VectorXd(kAugmentedDim) << 1, 2, 0.3, -1, 2, 0.3, 1, 0.9, 0.8, 0.7).finished(),
                    MatrixXd::Identity(kAugmentedDim, kAugmentedDim)};
  ArrivalLinearization lin;
  lin.z_star = prior.anchor;
  lin.predicted = prior.anchor;
  lin.transition = MatrixXd::Identity(kAugmentedDim, kAugmentedDim);
  lin.output = VectorXd::Zero(kOutputDim);
  lin.output_jacobian = MatrixXd::Zero(kOutputDim, kAugmentedDim);
  lin.measured = VectorXd::Ones(kOutputDim);
  lin.output_weight = VectorXd::Zero(kOutputDim);
  const ArrivalUpdate up = update_arrival_cost(prior, lin, VectorXd::Zero(kAugmentedDim),
                                               MatrixXd::Identity(kAugmentedDim, kAugmentedDim));
  EXPECT_FALSE(up.reinitialized);
  EXPECT_LT((up.cost.anchor - prior.anchor).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((up.cost.weight - prior.weight).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nmhe, ArrivalCostMatchesCovarianceKalmanOracle) {
  // Oracle in gain form: K = P H' (H P H' + R)^-1, P+ = (I - K H) P.
  testing::Gen gen(81);
  const int n = kAugmentedDim;
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd b = gen.vector(n * n, -1, 1).reshaped(n, n);
    const MatrixXd p0 = b * b.transpose() + MatrixXd::Identity(n, n);
    ArrivalCost prior;
    prior.anchor = gen.vector(n, -1, 1);
    prior.weight = Eigen::SelfAdjointEigenSolver<MatrixXd>(p0).operatorInverseSqrt();
    ArrivalLinearization lin;
    lin.z_star = prior.anchor + 0.1 * gen.vector(n, -1, 1);
    lin.predicted = gen.vector(n, -1, 1);
    lin.transition = MatrixXd::Identity(n, n) + 0.2 * gen.vector(n * n, -1, 1).reshaped(n, n);
    lin.output = gen.vector(kOutputDim, -1, 1);
    lin.output_jacobian = gen.vector(kOutputDim * n, -1, 1).reshaped(kOutputDim, n);
    lin.measured = gen.vector(kOutputDim, -1, 1);
    lin.output_weight = gen.vector(kOutputDim, 0.5, 3.0);
    const VectorXd q = gen.vector(n, 0.01, 0.3);

    const MatrixXd r = lin.output_weight.cwiseAbs2().cwiseInverse().asDiagonal();
    const MatrixXd& h = lin.output_jacobian;
    const MatrixXd k = p0 * h.transpose() * (h * p0 * h.transpose() + r).inverse();
    const VectorXd z = prior.anchor +
                       k * (lin.measured - lin.output - h * (prior.anchor - lin.z_star));
    const MatrixXd pm = (MatrixXd::Identity(n, n) - k * h) * p0;
    const VectorXd z_next = lin.predicted + lin.transition * (z - lin.z_star);
    const MatrixXd p_next =
        lin.transition * pm * lin.transition.transpose() + MatrixXd(q.cwiseAbs2().asDiagonal());

    const ArrivalUpdate up = update_arrival_cost(prior, lin, q, MatrixXd::Identity(n, n));
    ASSERT_FALSE(up.reinitialized);
    EXPECT_LT((up.cost.anchor - z_next).cwiseAbs().maxCoeff(), 1e-8 * (1 + z_next.norm()));
    const MatrixXd info = up.cost.weight.transpose() * up.cost.weight;
    EXPECT_LT((info * p_next - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((up.cost.weight - up.cost.weight.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Nmhe, ArrivalCostFallsBackWhenSingular) {
  const int n = kAugmentedDim;
  ArrivalCost prior{VectorXd::Zero(n), MatrixXd::Identity(n, n)};
  ArrivalLinearization lin;
  lin.z_star = VectorXd::Zero(n);
  lin.predicted = VectorXd::Constant(n, 0.5);
  lin.transition = MatrixXd::Zero(n, n);
  lin.output = VectorXd::Zero(kOutputDim);
  lin.output_jacobian = MatrixXd::Zero(kOutputDim, n);
  lin.measured = VectorXd::Zero(kOutputDim);
  lin.output_weight = VectorXd::Ones(kOutputDim);
  const MatrixXd fallback = 3.0 * MatrixXd::Identity(n, n);
  const ArrivalUpdate up = update_arrival_cost(prior, lin, VectorXd::Zero(n), fallback);
  EXPECT_TRUE(up.reinitialized);
  EXPECT_EQ(up.cost.anchor, lin.predicted);
  EXPECT_EQ(up.cost.weight, fallback);
}

TEST(Nmhe, NoiseFreeConvergence) {
  const SlipParams truth = make_slips(0.8, 0.9, 0.85);
  MovingHorizonEstimator mhe{EstimatorConfig{}};
  std::optional<Estimate> e;
  int k = 0;
  for (const Measurement& m : noise_free_run(truth, 130)) {
    e = mhe.step(m);
    if (e && ++k >= 100) {
      EXPECT_LT((e->slips - truth).cwiseAbs().maxCoeff(), 0.02) << "sample " << k;
    }
  }
  ASSERT_TRUE(e.has_value());
  EXPECT_FALSE(e->degraded);
  EXPECT_EQ(mhe.reinitializations(), 0);
}

TEST(NmheProperty, NoiseFreeFixedPointIsTruth) {
  const SlipParams truth = make_slips(0.8, 0.9, 0.85);
  const WeavingRun run = weaving_run(truth, 2000, NoiseConfig{0, 0, 0, 0});
  MovingHorizonEstimator mhe{EstimatorConfig{}};
  for (std::size_t k = 0; k < run.measurements.size(); ++k) {
    const auto e = mhe.step(run.measurements[k]);
    if (e && k >= 1900) {
      EXPECT_LT((e->state - run.truth[k]).cwiseAbs().maxCoeff(), 1e-6) << "sample " << k;
      EXPECT_LT((e->slips - truth).cwiseAbs().maxCoeff(), 1e-6) << "sample " << k;
    }
  }
}

TEST(NmheProperty, InformationAccumulatesWithoutProcessNoise) {
  // Information after each absorption dominates the previous information
  // carried through the shooting map. Single eigenvalues need not grow since
  // the map is not orthogonal: the first update mixes the loose yaw prior into
  // the positions. The smallest eigenvalue grows from then on.
  EstimatorConfig cfg;
  cfg.process_weight = VehicleState::Constant(1e15);
  cfg.param_drift_sigma = SlipParams::Zero();
  MovingHorizonEstimator mhe(cfg);
  const auto information = [](const MatrixXd& v) { return (v.transpose() * v).eval(); };
  const auto min_eig = [](const MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(m).eigenvalues().minCoeff();
  };
  double previous_min = 0.0;
  int updates = 0;
  for (const Measurement& m : noise_free_run(make_slips(0.8, 0.9, 0.85), 80)) {
    const bool absorbs = mhe.initialized() && mhe.window().full();
    MatrixXd carried;
    if (absorbs) {
      const ArrivalLinearization lin = mhe.linearize_oldest();
      const MatrixXd t_inv = lin.transition.inverse();
      carried = t_inv.transpose() * information(mhe.window().arrival.weight) * t_inv;
    }
    mhe.step(m);
    if (!absorbs) continue;
    const MatrixXd now = information(mhe.window().arrival.weight);
    const MatrixXd gain = 0.5 * (now - carried + (now - carried).transpose());
    EXPECT_GE(min_eig(gain), -1e-8 * now.norm()) << "update " << updates;
    const double m_now = min_eig(now);
    if (updates >= 1) {
      EXPECT_GE(m_now, previous_min * (1 - 1e-9)) << "update " << updates;
    }
    previous_min = m_now;
    ++updates;
  }
  EXPECT_GT(updates, 50);
  EXPECT_EQ(mhe.reinitializations(), 0);
}

TEST(NmheProperty, YawObservableFromPositions) {
  // Straight run, position noise only: the unmeasured yaw angles follow from
  // the position track.
  const NoiseConfig positions_only{0.03, 0, 0, 0};
  const WeavingRun run = weaving_run(SlipParams::Constant(0.9), 250, positions_only, 0.0, 7);
  MovingHorizonEstimator mhe{EstimatorConfig{}};
  double sq_t = 0.0, sq_i = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < run.measurements.size(); ++k) {
    const auto e = mhe.step(run.measurements[k]);
    if (!e || k < 100) continue;
    sq_t += std::pow(e->state(st::kTheta) - run.truth[k](st::kTheta), 2);
    sq_i += std::pow(e->state(st::kPsi) - run.truth[k](st::kPsi), 2);
    ++n;
  }
  ASSERT_GT(n, 0);
  EXPECT_LT(std::sqrt(sq_t / n), deg2rad(1.0));
  EXPECT_LT(std::sqrt(sq_i / n), deg2rad(1.0));
}

TEST(NmheProperty, InnovationsMatchNoiseLevels) {
  // Predicted-minus-measured positions at the newest node before the update.
  const NoiseConfig nominal;
  const WeavingRun run = weaving_run(make_slips(0.8, 0.9, 0.85), 400, nominal, 0.3, 11);
  MovingHorizonEstimator mhe{EstimatorConfig{}};
  std::vector<double> innov;
  std::optional<Estimate> prev;
  for (std::size_t k = 0; k < run.measurements.size(); ++k) {
    const Measurement& m = run.measurements[k];
    if (prev && k > 100) {
      const VehicleState pred = integrate(prev->state, prev->input, prev->slips, VehicleGeometry{},
                                          0.2, 2);
      innov.push_back(m.x_t - pred(st::kXt));
      innov.push_back(m.y_t - pred(st::kYt));
      innov.push_back(m.x_i - pred(st::kXi));
      innov.push_back(m.y_i - pred(st::kYi));
    }
    prev = mhe.step(m);
  }
  double mean = 0.0;
  for (double v : innov) mean += v;
  mean /= static_cast<double>(innov.size());
  double var = 0.0;
  for (double v : innov) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(innov.size() - 1));
  EXPECT_LT(std::abs(mean), 0.1 * nominal.position);
  EXPECT_NEAR(sd, nominal.position, 0.25 * nominal.position);
}

TEST(NmheProperty, WindowShiftIsConsistent) {
  // Converged estimate at the newest node, before and after the oldest node
  // is absorbed into the arrival cost.
  const WeavingRun run = weaving_run(make_slips(0.8, 0.9, 0.85), 150, NoiseConfig{}, 0.3, 13);
  MovingHorizonEstimator mhe{EstimatorConfig{}};
  const auto settle = [](MovingHorizonEstimator& e) {
    Estimate out;
    for (int i = 0; i < 10; ++i) out = e.estimate_step();
    return out;
  };
  int checked = 0;
  for (std::size_t k = 0; k < run.measurements.size(); ++k) {
    mhe.step(run.measurements[k]);
    if (k < 60 || k % 5 != 0 || !mhe.window().full()) continue;
    MovingHorizonEstimator full = mhe;
    const Estimate before = settle(full);
    MovingHorizonEstimator shifted = full;
    shifted.absorb_oldest();
    const Estimate after = settle(shifted);
    EXPECT_LT((after.state - before.state).cwiseAbs().maxCoeff(), 1e-3) << "sample " << k;
    EXPECT_LT((after.slips - before.slips).cwiseAbs().maxCoeff(), 1e-3) << "sample " << k;
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(NmheProperty, WindowInvariantsAlongRun) {
  testing::Gen gen(82);
  for (int trial = 0; trial < 3; ++trial) {
    const SlipParams truth = gen.slips().cwiseMax(0.3);
    EstimatorConfig cfg;
    cfg.window = gen.integer(5, 15);
    MovingHorizonEstimator mhe(cfg);
    for (const Measurement& m : noise_free_run(truth, 60)) {
      const auto e = mhe.step(m);
      if (!e) continue;
      EXPECT_NO_THROW(mhe.window().check());
      EXPECT_LE(static_cast<int>(mhe.window().measurements.size()), cfg.window);
      EXPECT_TRUE((e->slips.array() >= 0.25).all() && (e->slips.array() <= 1.0).all());
      EXPECT_EQ(mhe.iterate().states.size(), mhe.window().measurements.size());
    }
  }
}

TEST(Nmhe, DegradedEstimateRepeatsLast) {
  MovingHorizonEstimator mhe{EstimatorConfig{}};
  std::optional<Estimate> last;
  const auto ms = noise_free_run(SlipParams::Constant(0.9), 20);
  for (const Measurement& m : ms) last = mhe.step(m);
  ASSERT_TRUE(last.has_value());
  Measurement bad = ms.back();
  bad.timestamp += 0.2;
  bad.x_t = std::nan("");
  const auto e = mhe.step(bad);
  ASSERT_TRUE(e.has_value());
  EXPECT_TRUE(e->degraded);
  EXPECT_EQ(e->state, last->state);
  EXPECT_EQ(e->slips, last->slips);
  EXPECT_DOUBLE_EQ(e->timestamp, bad.timestamp);
}

TEST(Nmhe, RejectsOutOfOrderAndBrokenWindows) {
  MovingHorizonEstimator mhe{EstimatorConfig{}};
  const auto ms = noise_free_run(SlipParams::Constant(0.9), 10);
  for (const Measurement& m : ms) mhe.step(m);
  EXPECT_THROW(mhe.step(ms.front()), DomainError);

  EstimationWindow w = *cold_start(ms, EstimatorConfig{});
  w.arrival.weight(0, 1) = 1.0;
  EXPECT_THROW(w.check(), DomainError);
  w = *cold_start(ms, EstimatorConfig{});
  w.measurements.push_back(w.measurements.front());
  EXPECT_THROW(w.check(), DomainError);
  EXPECT_THROW(cold_start({}, EstimatorConfig{}), DomainError);
}

}  // namespace
}  // namespace tdmpc
