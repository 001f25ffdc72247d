#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "wlf/hamiltonians.hpp"

using namespace wlf;

namespace {

FieldEval field_eval(double value, Eigen::VectorXd grad, double dt = 0, std::optional<double> lap = {}) {
  FieldEval fe;
  fe.value = value;
  fe.grad_x = std::move(grad);
  fe.dt = dt;
  fe.laplacian = lap;
  return fe;
}

ProblemSpec wfr(double lambda) {
  ProblemSpec p;
  p.kinetic = Kinetic::wfr;
  p.lambda = lambda;
  return p;
}

ProblemSpec entropic(double sigma) {
  ProblemSpec p;
  p.entropic = SigmaSchedule::constant_sigma(sigma);
  return p;
}

}  // namespace

TEST(KStar, W2HalfSquaredGradient) {
  EXPECT_DOUBLE_EQ(kstar_density(ProblemSpec{}, field_eval(7, Eigen::Vector2d(3, 4)), 0.5), 12.5);
}

TEST(KStar, WfrAddsGrowthTerm) {
  EXPECT_DOUBLE_EQ(kstar_density(wfr(2), field_eval(3, Eigen::Vector2d(0, 0)), 0.5), 9.0);
}

TEST(KStar, EntropicAddsScaledLaplacian) {
  EXPECT_DOUBLE_EQ(kstar_density(entropic(1), field_eval(0, Eigen::Vector2d(1, 0), 0, -2.0), 0.5), -0.5);
  EXPECT_THROW(kstar_density(entropic(1), field_eval(0, Eigen::Vector2d(1, 0)), 0.5), ContractError);
}

TEST(Potential, AbsentIsZero) {
  EXPECT_EQ(potential_density(ProblemSpec{}, Eigen::Vector2d(5, -3), 0.2), 0.0);
}

TEST(Potential, LinearPerInterval) {
  ProblemSpec p;
  p.potential = PotentialSpec::constant_accel(Eigen::Vector2d(0, 4));
  EXPECT_DOUBLE_EQ(potential_density(p, Eigen::Vector2d(1, 1), 0.3), -4.0);
  EXPECT_THROW(potential_density(p, Eigen::Vector2d(1, 1), 1.5), ConfigError);
}

TEST(Potential, PiecewiseIntervalsSelectByTime) {
  ProblemSpec p;
  p.potential = PotentialSpec::linear({0.0, 0.4, 1.0}, {Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)});
  EXPECT_DOUBLE_EQ(potential_density(p, Eigen::Vector2d(2, 3), 0.1), -2.0);
  EXPECT_DOUBLE_EQ(potential_density(p, Eigen::Vector2d(2, 3), 0.7), -3.0);
  EXPECT_DOUBLE_EQ(potential_density(p, Eigen::Vector2d(2, 3), 1.0), -3.0);
}

TEST(Potential, AnalyticQuadraticWeighted) {
  ProblemSpec p;
  p.potential = PotentialSpec::quadratic(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  p.potential_weight = 0.5;
  EXPECT_DOUBLE_EQ(potential_density(p, Eigen::Vector2d(1, 2), 0.0), 1.25);
}

TEST(Integrand, LinearFieldIsConstant) {
  const auto fe = field_eval(0.3, Eigen::Vector2d(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(integrand(ProblemSpec{}, fe, Eigen::Vector2d(5, 5), 0.1).integrand, 2.5);
  EXPECT_DOUBLE_EQ(integrand(ProblemSpec{}, fe, Eigen::Vector2d(-1, 9), 0.1).integrand, 2.5);
}

TEST(Integrand, EntropicQuadraticPotentialField) {
  const Eigen::Vector2d x(1, 1);
  const auto fe = field_eval(0.5 * x.squaredNorm(), x, 0.0, 2.0);
  EXPECT_DOUBLE_EQ(integrand(entropic(1), fe, x, 0.5).integrand, 2.0);
}

TEST(Integrand, WfrReducesToW2AtZeroLambda) {
  ProblemSpec zero;
  zero.kinetic = Kinetic::wfr;
  zero.lambda = 0.0;
  const auto fe = field_eval(1.7, Eigen::Vector3d(0.2, -1, 4), -0.4);
  EXPECT_EQ(integrand(zero, fe, Eigen::Vector3d::Zero(), 0.2).integrand,
            integrand(ProblemSpec{}, fe, Eigen::Vector3d::Zero(), 0.2).integrand);
}

TEST(Integrand, PotentialComposesAdditively) {
  ProblemSpec with;
  with.potential = PotentialSpec::quadratic(Eigen::Matrix2d::Identity() * 3, Eigen::Vector2d(1, -1));
  with.potential_weight = 0.7;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d x(z(rng), z(rng));
    const auto fe = field_eval(z(rng), Eigen::Vector2d(z(rng), z(rng)), z(rng));
    const double diff = integrand(with, fe, x, 0.3).integrand - integrand(ProblemSpec{}, fe, x, 0.3).integrand;
    EXPECT_NEAR(diff, 0.7 * with.potential->value(x, 0.3), 1e-12);
  }
}

TEST(Integrand, BatchAgreesWithPointwise) {
  ProblemSpec p = wfr(0.6);
  p.potential = PotentialSpec::constant_accel(Eigen::Vector2d(1, 2));
  const auto field = fixtures::random_field(2, 3);
  const Points x = Points::Random(2, 6);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(6, 0, 1);
  const auto fe = eval_batch(field, t, x, nullptr, Needs{true, false});
  const Eigen::VectorXd F = integrand_batch(p, fe, x, t);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(F(i), integrand(p, fe.at(i), x.col(i), t(i)).integrand, 1e-13);
}

TEST(Dynamics, ModeSpecificComponents) {
  auto d = dynamics(ProblemSpec{}, field_eval(0.9, Eigen::Vector2d(1, 2)), 0.3);
  EXPECT_EQ(d.velocity, Eigen::Vector2d(1, 2));
  EXPECT_EQ(d.growth, 0.0);
  EXPECT_EQ(d.diffusion, 0.0);
  d = dynamics(wfr(1), field_eval(0.5, Eigen::Vector2d::Zero()), 0.3);
  EXPECT_EQ(d.velocity, Eigen::Vector2d::Zero());
  EXPECT_EQ(d.growth, 0.5);
  for (double t : {0.0, 0.5, 1.0}) EXPECT_EQ(dynamics(entropic(2), field_eval(0, Eigen::Vector2d(3, 3)), t).diffusion, 2.0);
}

TEST(ProblemValidation, RejectsInconsistentModes) {
  ProblemSpec p = wfr(1);
  p.entropic = SigmaSchedule::constant_sigma(1);
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_THROW(wfr(0).validate(), ConfigError);
  EXPECT_THROW(entropic(-1).validate(), ConfigError);
  ProblemSpec pot;
  pot.potential = PotentialSpec::constant_accel(Eigen::Vector3d(0, 0, 1));
  EXPECT_THROW(pot.validate(2), ConfigError);
  EXPECT_NO_THROW(pot.validate(3));
}

TEST(SigmaSchedule, PiecewiseAndAffine) {
  SigmaSchedule pw;
  pw.kind = SigmaSchedule::Kind::piecewise_constant;
  pw.breakpoints = {0.25, 0.75};
  pw.values = {1.0, 2.0, 3.0};
  EXPECT_EQ(pw(0.1), 1.0);
  EXPECT_EQ(pw(0.5), 2.0);
  EXPECT_EQ(pw(0.9), 3.0);
  SigmaSchedule af;
  af.kind = SigmaSchedule::Kind::affine;
  af.sigma0 = 1.0;
  af.sigma1 = 3.0;
  EXPECT_DOUBLE_EQ(af(0.25), 1.5);
  pw.values.pop_back();
  EXPECT_THROW(pw.validate(), ConfigError);
}

TEST(IntegrandGradX, QuadraticPotentialGradient) {
  ProblemSpec p;
  const Eigen::Matrix2d Q = (Eigen::Matrix2d() << 2, 1, 1, 3).finished();
  p.potential = PotentialSpec::quadratic(Q, Eigen::Vector2d(0.5, 0));
  const auto field = fixtures::linear_field(Eigen::Vector2d(1, 1), 0);
  const Points x = Points::Random(2, 4);
  const Points g = integrand_grad_x(p, field, Eigen::VectorXd::Constant(4, 0.5), x);
  const Points expect = (Q * x).colwise() + Eigen::Vector2d(0.5, 0);
  EXPECT_LT((g - expect).norm(), 1e-12);
}
