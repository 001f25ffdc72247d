#include <gtest/gtest.h>

#include "wlf/activation.hpp"

using namespace wlf;

namespace {

Eigen::MatrixXd eval(Activation a, const Eigen::MatrixXd& x, int order) {
  Eigen::MatrixXd y, d1, d2, d3;
  activate(a, x, y, &d1, &d2, &d3);
  switch (order) {
    case 0: return y;
    case 1: return d1;
    case 2: return d2;
    default: return d3;
  }
}

}  // namespace

class ActivationDerivatives : public ::testing::TestWithParam<Activation> {};

TEST_P(ActivationDerivatives, MatchCentralDifferences) {
  const Eigen::MatrixXd x = Eigen::VectorXd::LinSpaced(41, -4.0, 4.0);
  const double h = 1e-5;
  for (int order = 1; order <= 3; ++order) {
    const Eigen::MatrixXd exact = eval(GetParam(), x, order);
    const Eigen::MatrixXd num =
        (eval(GetParam(), (x.array() + h).matrix(), order - 1) - eval(GetParam(), (x.array() - h).matrix(), order - 1)) /
        (2 * h);
    EXPECT_LT((exact - num).cwiseAbs().maxCoeff(), 1e-7) << "order " << order;
  }
}

INSTANTIATE_TEST_SUITE_P(All, ActivationDerivatives,
                         ::testing::Values(Activation::tanh, Activation::softplus, Activation::linear,
                                           Activation::square));

TEST(Activation, TanhSaturatesWithoutOverflow) {
  Eigen::MatrixXd x(1, 2);
  x << -800.0, 800.0;
  const Eigen::MatrixXd y = eval(Activation::tanh, x, 0);
  EXPECT_EQ(y(0, 0), -1.0);
  EXPECT_EQ(y(0, 1), 1.0);
  const Eigen::MatrixXd s = eval(Activation::softplus, x, 0);
  EXPECT_EQ(s(0, 0), 0.0);
  EXPECT_EQ(s(0, 1), 800.0);
}

TEST(Activation, NamesRoundTrip) {
  for (auto a : {Activation::tanh, Activation::softplus, Activation::linear, Activation::square})
    EXPECT_EQ(activation_from_string(to_string(a)), a);
}

TEST(Activation, NonSmoothActivationsRejected) {
  EXPECT_THROW(activation_from_string("relu"), ConfigError);
  EXPECT_THROW(activation_from_string("gelu2"), ConfigError);
}
