#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "wlf/transport_eval.hpp"

using namespace wlf;

namespace {

FieldParams ot_field(const Eigen::VectorXd& a) { return fixtures::linear_field(a, -0.5 * a.squaredNorm()); }

TrajectoryBundle circle(int steps) {
  TrajectoryBundle b;
  for (int k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) / steps, ang = 2 * std::numbers::pi * t;
    b.times.push_back(t);
    b.states.push_back(Eigen::Vector2d(std::cos(ang), std::sin(ang)));
  }
  b.log_weights = Eigen::MatrixXd::Zero(1, steps + 1);
  return b;
}

}  // namespace

TEST(Simulate, AnalyticOtFieldTransportsToTarget) {
  const Eigen::Vector2d a(3, -1);
  SimulateOptions o;
  o.steps = 100;
  const auto b = simulate(ProblemSpec{}, ot_field(a), Points::Zero(2, 4), o);
  ASSERT_FALSE(b.diverged);
  EXPECT_EQ(b.steps(), 100u);
  EXPECT_LT((b.final_state().colwise() - a).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(b.times.back(), 1.0, 1e-12);
}

TEST(Simulate, SingleStepMap) {
  const Eigen::Vector2d a(0.5, 2);
  SimulateOptions o;
  o.mode = SimMode::single_step;
  const Points x0 = Points::Random(2, 5);
  const auto b = simulate(ProblemSpec{}, ot_field(a), x0, o);
  ASSERT_EQ(b.steps(), 1u);
  EXPECT_LT((b.final_state() - (x0.colwise() + a)).norm(), 1e-14);
}

TEST(Simulate, ZeroFieldIsStationary) {
  const Points x0 = Points::Random(3, 6);
  const auto b = simulate(ProblemSpec{}, fixtures::constant_field(3, 2.0), x0);
  for (const auto& s : b.states) EXPECT_EQ(s, x0);
  EXPECT_EQ(straightness(b), 0.0);
}

TEST(Simulate, ModeMustMatchProblem) {
  const auto f = fixtures::constant_field(2, 0.0);
  SimulateOptions sde;
  sde.mode = SimMode::sde;
  EXPECT_THROW(simulate(ProblemSpec{}, f, Points::Zero(2, 1), sde), ConfigError);
  ProblemSpec sb;
  sb.entropic = SigmaSchedule::constant_sigma(1.0);
  EXPECT_THROW(simulate(sb, f, Points::Zero(2, 1)), ConfigError);
  EXPECT_NO_THROW(simulate(sb, f, Points::Zero(2, 1), sde));
  SimulateOptions none;
  none.steps = 0;
  EXPECT_THROW(simulate(ProblemSpec{}, f, Points::Zero(2, 1), none), ConfigError);
}

TEST(Simulate, SdeNoiseMatchesSigma) {
  ProblemSpec sb;
  sb.entropic = SigmaSchedule::constant_sigma(0.5);
  SimulateOptions o;
  o.mode = SimMode::sde;
  o.steps = 50;
  o.seed = 3;
  const auto b = simulate(sb, fixtures::constant_field(1, 0.0), Points::Zero(1, 20000), o);
  const Eigen::VectorXd x = b.final_state().row(0).transpose();
  EXPECT_NEAR(x.mean(), 0.0, 0.02);
  EXPECT_NEAR((x.array() - x.mean()).square().mean(), 0.25, 0.01);
  const auto again = simulate(sb, fixtures::constant_field(1, 0.0), Points::Zero(1, 20000), o);
  EXPECT_EQ(again.final_state(), b.final_state());
}

TEST(Simulate, WfrLogWeightsIntegrateGrowth) {
  ProblemSpec wfr;
  wfr.kinetic = Kinetic::wfr;
  wfr.lambda = 2.0;
  // s = 3 t, so log w(1) = lambda * 3 / 2.
  const auto b = simulate(wfr, fixtures::linear_field(Eigen::Vector2d::Zero(), 3.0), Points::Random(2, 3));
  for (Eigen::Index p = 0; p < 3; ++p) EXPECT_NEAR(b.log_weights(p, b.log_weights.cols() - 1), 3.0, 1e-12);
  EXPECT_EQ(b.log_weights.col(0).norm(), 0.0);
}

TEST(Simulate, DivergenceTruncates) {
  SimulateOptions o;
  o.bound = 2.0;
  const auto b = simulate(ProblemSpec{}, ot_field(Eigen::Vector2d(10, 0)), Points::Zero(2, 2), o);
  EXPECT_TRUE(b.diverged);
  EXPECT_GT(b.diverged_at, 0);
  EXPECT_EQ(b.states.size(), static_cast<std::size_t>(b.diverged_at));
  EXPECT_EQ(b.log_weights.cols(), static_cast<Eigen::Index>(b.states.size()));
}

TEST(Simulate, CsvLayout) {
  const auto b = simulate(ProblemSpec{}, ot_field(Eigen::Vector2d(1, 0)), Points::Zero(2, 2), SimulateOptions{2});
  const std::string csv = b.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "particle,step,t,x0,x1,log_weight");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3);
}

TEST(Straightness, CircleHasCentripetalAcceleration) {
  const double omega = 2 * std::numbers::pi;
  EXPECT_NEAR(straightness(circle(100)), omega * omega, 0.01 * omega * omega);
}

TEST(Straightness, AffineTrajectoriesAreStraight) {
  TrajectoryBundle b;
  const Points x0 = Points::Random(2, 4), v = Points::Random(2, 4);
  for (double t : {0.0, 0.1, 0.35, 0.5, 1.0}) {
    b.times.push_back(t);
    b.states.push_back(x0 + t * v);
  }
  EXPECT_LT(straightness(b), 1e-12);
}

TEST(HjResidual, ZeroForAnalyticOtField) {
  const Points cloud = Points::Random(2, 50) * 4;
  EXPECT_LT(hj_residual(ProblemSpec{}, ot_field(Eigen::Vector2d(2, 1)), cloud, 0.3), 1e-12);
}

TEST(HjResidual, ConstantFieldMeasuresPotentialSpread) {
  ProblemSpec p;
  p.potential = PotentialSpec::constant_accel(Eigen::Vector2d(1, 0));
  const Points cloud = Points::Random(2, 40);
  const Eigen::VectorXd V = -cloud.row(0).transpose();
  EXPECT_NEAR(hj_residual(p, fixtures::constant_field(2, 1.0), cloud, 0.5), (V.array() - V.mean()).abs().mean(), 1e-12);
}

TEST(HjResidual, PositiveForGenericFieldAndPerSlice) {
  const auto f = fixtures::random_field(2, 9);
  const Points cloud = Points::Random(2, 30);
  const Eigen::VectorXd r = hj_residual(ProblemSpec{}, f, cloud, std::vector<double>{0.0, 0.5, 1.0});
  EXPECT_GT(r.minCoeff(), 0.0);
  EXPECT_EQ(r(1), hj_residual(ProblemSpec{}, f, cloud, 0.5));
  EXPECT_THROW(hj_residual(ProblemSpec{}, f, Points(2, 0), 0.5), ContractError);
}

TEST(LeaveOneOut, EndpointsCannotBeHeldOut) {
  const auto data = synth(SynthKind::gaussian_drift_3pt, 1, 200, 2);
  LooConfig cfg;
  cfg.held_out = {0};
  FieldSpec fs;
  fs.input_dim = 2;
  PathSpec ps;
  ps.dim = 2;
  EXPECT_THROW(leave_one_out(data, ProblemSpec{}, fs, ps, TrainConfig{}, cfg), ConfigError);
  cfg.held_out = {2};
  EXPECT_THROW(leave_one_out(data, ProblemSpec{}, fs, ps, TrainConfig{}, cfg), ConfigError);
  EXPECT_THROW(leave_one_out(synth(SynthKind::gaussian_shift, 1, 50, 2), ProblemSpec{}, fs, ps, TrainConfig{}, {}),
               ConfigError);
}

TEST(LeaveOneOut, ReproducibleAndTabulated) {
  const auto data = synth(SynthKind::gaussian_drift_3pt, 1, 400, 2);
  FieldSpec fs;
  fs.input_dim = 2;
  fs.hidden_widths = {16, 16};
  PathSpec ps;
  ps.dim = 2;
  ps.hidden_widths = {16, 16};
  TrainConfig tc;
  tc.iterations = 60;
  tc.batch_size = 64;
  tc.eval_samples = 256;
  LooConfig cfg;
  cfg.seeds = {0, 1};
  cfg.max_w1_samples = 128;
  cfg.sim_steps = 20;
  const auto a = leave_one_out(data, ProblemSpec{}, fs, ps, tc, cfg);
  const auto b = leave_one_out(data, ProblemSpec{}, fs, ps, tc, cfg);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.method, "WLF-OT");
  for (const auto& r : a.rows) {
    EXPECT_EQ(r.held_out, 1);
    EXPECT_DOUBLE_EQ(r.time, data.times[1]);
    EXPECT_TRUE(std::isfinite(r.w1_path));
    EXPECT_TRUE(std::isfinite(r.w1_simulated));
  }
  const std::string csv = a.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(a.summary_csv().find("WLF-OT,w1_path,"), std::string::npos);
}

TEST(EvalTable, AggregatesPerSeedThenAcrossSeeds) {
  EvalTable t;
  t.rows = {{1, 0.3, 0, 1.0}, {2, 0.6, 0, 3.0}, {1, 0.3, 1, 4.0}, {2, 0.6, 1, 6.0}};
  const auto s = t.over_seeds(&LooRow::w1_path);
  EXPECT_DOUBLE_EQ(s.mean, 3.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(4.5));
}
