#include <gtest/gtest.h>

#include <cstring>

#include "fixtures.hpp"
#include "wlf/field.hpp"

using namespace wlf;
using fixtures::linear_field;
using fixtures::quadratic_field;
using fixtures::random_field;

namespace {

FieldEvalBatch eval1(const FieldParams& p, double t, const Eigen::VectorXd& x, bool lap = true) {
  return eval_batch(p, Eigen::VectorXd::Constant(1, t), x, nullptr, Needs{true, lap});
}

double value_at(const FieldParams& p, double t, const Eigen::VectorXd& x) {
  return eval_batch(p, Eigen::VectorXd::Constant(1, t), x, nullptr, Needs{false, false}).value(0);
}

}  // namespace

TEST(FieldInit, ParameterCountFollowsLayerShapes) {
  FieldSpec spec;
  spec.input_dim = 2;
  spec.hidden_widths = {64, 64};
  const auto p = init_params(spec, 0);
  const Eigen::Index expected = 64 * (2 + 1 + 1) + 64 * 64 + 64 + 64 + 1;
  EXPECT_EQ(p.theta.size(), expected);
  EXPECT_EQ(p.theta.size(), 4481);
}

TEST(FieldInit, DeterministicForSeed) {
  FieldSpec spec;
  spec.input_dim = 2;
  const auto a = init_params(spec, 0), b = init_params(spec, 0), c = init_params(spec, 1);
  ASSERT_EQ(a.theta.size(), b.theta.size());
  EXPECT_EQ(std::memcmp(a.theta.data(), b.theta.data(), sizeof(double) * a.theta.size()), 0);
  EXPECT_NE(a.theta, c.theta);
}

TEST(FieldInit, BiasesStartAtZero) {
  FieldSpec spec;
  spec.input_dim = 3;
  spec.hidden_widths = {5, 7};
  const auto p = init_params(spec, 4);
  const auto layout = spec.layout();
  for (std::size_t l = 0; l < layout.depth(); ++l) EXPECT_EQ(layout.bias(p.theta, l).norm(), 0.0);
}

TEST(FieldInit, InvalidSpecsRejected) {
  FieldSpec spec;
  spec.input_dim = 2;
  spec.hidden_widths = {};
  EXPECT_THROW(init_params(spec, 0), ConfigError);
  spec.hidden_widths = {4};
  spec.input_dim = 0;
  EXPECT_THROW(init_params(spec, 0), ConfigError);
  spec.input_dim = 1;
  spec.time_embedding = TimeEmbedding::sinusoidal;
  spec.frequencies = 0;
  EXPECT_THROW(init_params(spec, 0), ConfigError);
}

TEST(FieldEval, LinearFieldDerivatives) {
  const auto p = linear_field(Eigen::Vector2d(1, 2), 3);
  for (double t : {0.0, 0.3, 1.0}) {
    const auto fe = eval1(p, t, Eigen::Vector2d(-0.7, 2.5));
    EXPECT_NEAR(fe.value(0), -0.7 + 5.0 + 3 * t, 1e-14);
    EXPECT_NEAR(fe.grad_x(0, 0), 1.0, 1e-14);
    EXPECT_NEAR(fe.grad_x(1, 0), 2.0, 1e-14);
    EXPECT_NEAR(fe.dt(0), 3.0, 1e-14);
    EXPECT_NEAR((*fe.laplacian)(0), 0.0, 1e-14);
  }
}

TEST(FieldEval, QuadraticFieldLaplacianIsDimension) {
  const auto p = quadratic_field(5);
  const Points x = fixtures::gaussian(5, 7, Eigen::VectorXd::Zero(5), 2.0, 3);
  const auto fe = eval_batch(p, Eigen::VectorXd::LinSpaced(7, 0, 1), x, nullptr, Needs{true, true});
  for (Eigen::Index i = 0; i < 7; ++i) {
    EXPECT_NEAR((*fe.laplacian)(i), 5.0, 1e-12);
    EXPECT_NEAR(fe.value(i), 0.5 * x.col(i).squaredNorm(), 1e-12);
    EXPECT_LT((fe.grad_x.col(i) - x.col(i)).norm(), 1e-12);
  }
}

TEST(FieldEval, GradientMatchesFiniteDifferences) {
  FieldSpec spec;
  spec.input_dim = 2;
  const auto p = init_params(spec, 0);
  const Eigen::Vector2d x(0.1, -0.2);
  const double t = 0.3, h = 1e-4;
  const auto fe = eval1(p, t, x, false);
  for (int k = 0; k < 2; ++k) {
    Eigen::Vector2d e = Eigen::Vector2d::Zero();
    e(k) = h;
    const double num = (value_at(p, t, x + e) - value_at(p, t, x - e)) / (2 * h);
    EXPECT_LT(std::abs(num - fe.grad_x(k, 0)) / std::abs(fe.grad_x(k, 0)), 1e-5);
  }
  const double dt_num = (value_at(p, t + h, x) - value_at(p, t - h, x)) / (2 * h);
  EXPECT_LT(std::abs(dt_num - fe.dt(0)) / std::abs(fe.dt(0)), 1e-5);
}

TEST(FieldEval, LaplacianMatchesSecondDifferences) {
  for (auto emb : {TimeEmbedding::raw, TimeEmbedding::sinusoidal}) {
    auto p = random_field(3, 9);
    if (emb == TimeEmbedding::sinusoidal) {
      p.spec.time_embedding = emb;
      p.spec.frequencies = 3;
      p = init_params(p.spec, 9);
    }
    const Eigen::Vector3d x(0.4, -0.3, 1.1);
    const double t = 0.6, h = 1e-4;
    double num = 0;
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e(k) = h;
      num += (value_at(p, t, x + e) - 2 * value_at(p, t, x) + value_at(p, t, x - e)) / (h * h);
    }
    const double exact = (*eval1(p, t, x).laplacian)(0);
    EXPECT_NEAR(exact, num, 1e-5 * std::max(1.0, std::abs(exact)));
  }
}

TEST(FieldEval, IndicatorInputSwitchesAtHalf) {
  FieldSpec spec;
  spec.input_dim = 1;
  spec.hidden_widths = {6};
  spec.use_indicator = true;
  const auto p = init_params(spec, 2);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.3);
  Eigen::VectorXd k1 = Eigen::VectorXd::Ones(1), k0 = Eigen::VectorXd::Zero(1);
  const double t = 0.49;
  const double implicit = eval_batch(p, Eigen::VectorXd::Constant(1, t), x, nullptr, Needs{false, false}).value(0);
  const double explicit1 = eval_batch(p, Eigen::VectorXd::Constant(1, t), x, &k1, Needs{false, false}).value(0);
  const double explicit0 = eval_batch(p, Eigen::VectorXd::Constant(1, t), x, &k0, Needs{false, false}).value(0);
  EXPECT_EQ(implicit, explicit1);
  EXPECT_NE(explicit1, explicit0);
}

TEST(FieldEval, RejectsBadInputs) {
  const auto p = random_field(2, 1);
  Points x(2, 1);
  x << std::nan(""), 0.0;
  EXPECT_THROW(eval_batch(p, Eigen::VectorXd::Zero(1), x), NumericError);
  EXPECT_THROW(eval_batch(p, Eigen::VectorXd::Zero(2), Points::Zero(2, 1)), ContractError);
  EXPECT_THROW(eval_batch(p, Eigen::VectorXd::Zero(1), Points::Zero(3, 1)), ContractError);
}

TEST(FieldGradParams, LastLayerGradientIsPenultimateActivation) {
  const auto p = random_field(2, 5, {6, 4});
  const auto layout = p.spec.layout();
  const Eigen::Vector2d x(0.3, -1.2);
  const double t = 0.7;
  Eigen::VectorXd z(3);
  z << x, t;
  const Eigen::VectorXd h1 = (layout.weight(p.theta, 0) * z + layout.bias(p.theta, 0)).array().tanh().matrix();
  const Eigen::VectorXd h2 = (layout.weight(p.theta, 1) * h1 + layout.bias(p.theta, 1)).array().tanh().matrix();

  FieldCotangent w;
  w.value = Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd g = grad_params(p, Eigen::VectorXd::Constant(1, t), x, nullptr, w);
  const auto& last = layout.layers().back();
  EXPECT_LT((g.segment(last.offset, last.in) - h2).norm(), 1e-13);
  EXPECT_NEAR(g(last.offset + last.in), 1.0, 1e-15);
}

TEST(FieldGradParams, ZeroCotangentGivesZero) {
  const auto p = random_field(2, 5);
  FieldCotangent w;
  w.value = Eigen::VectorXd::Zero(3);
  w.grad_x = Points::Zero(2, 3);
  w.dt = Eigen::VectorXd::Zero(3);
  w.laplacian = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd g = grad_params(p, Eigen::VectorXd::Constant(3, 0.2), Points::Random(2, 3), nullptr, w);
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(FieldGradParams, MatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_field(2, 20 + trial);
    const Eigen::Index n = 4;
    const Eigen::VectorXd t = (Eigen::VectorXd::Random(n).array() * 0.5 + 0.5).matrix();
    const Points x = Points::Random(2, n);
    FieldCotangent w;
    w.value = Eigen::VectorXd::NullaryExpr(n, [&] { return z(rng); });
    w.grad_x = Points::NullaryExpr(2, n, [&] { return z(rng); });
    w.dt = Eigen::VectorXd::NullaryExpr(n, [&] { return z(rng); });
    w.laplacian = Eigen::VectorXd::NullaryExpr(n, [&] { return z(rng); });
    auto aggregate = [&](const FieldParams& q) {
      const auto fe = eval_batch(q, t, x, nullptr, Needs{true, true});
      return w.value.dot(fe.value) + (w.grad_x.array() * fe.grad_x.array()).sum() + w.dt.dot(fe.dt) +
             w.laplacian.dot(*fe.laplacian);
    };
    const Eigen::VectorXd g = grad_params(p, t, x, nullptr, w);
    Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(g.size(), [&] { return z(rng); });
    v.normalize();
    const double h = 1e-5;
    FieldParams plus = p, minus = p;
    plus.theta += h * v;
    minus.theta -= h * v;
    const double num = (aggregate(plus) - aggregate(minus)) / (2 * h);
    EXPECT_LT(std::abs(num - g.dot(v)) / std::max(1e-6, std::abs(num)), 1e-4);
  }
}

TEST(FieldGradInputs, KineticTermOfAnalyticFields) {
  const auto kinetic = [](const FieldEvalBatch& fe, const Eigen::VectorXd&) {
    FieldCotangent w;
    w.grad_x = fe.grad_x;  // d/d(grad s) of 1/2 |grad s|^2
    return w;
  };
  const Points x = Points::Random(2, 5);
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(5, 0.4);
  const Points g_lin = grad_inputs(linear_field(Eigen::Vector2d(1, -3), 2), t, x, nullptr, false, kinetic);
  EXPECT_LT(g_lin.norm(), 1e-14);
  const Points g_quad = grad_inputs(quadratic_field(2), t, x, nullptr, false, kinetic);
  EXPECT_LT((g_quad - x).norm(), 1e-13);
}

TEST(FieldGradInputs, MatchesFiniteDifferencesWithLaplacian) {
  const auto p = random_field(2, 33);
  const auto selector = [](const FieldEvalBatch& fe, const Eigen::VectorXd&) {
    FieldCotangent w;
    w.dt = Eigen::VectorXd::Ones(fe.size());
    w.grad_x = fe.grad_x;
    w.laplacian = Eigen::VectorXd::Constant(fe.size(), 0.5);
    return w;
  };
  const auto scalar = [&](const Points& x, const Eigen::VectorXd& t) {
    const auto fe = eval_batch(p, t, x, nullptr, Needs{true, true});
    return (fe.dt + 0.5 * fe.grad_x.colwise().squaredNorm().transpose() + 0.5 * *fe.laplacian).sum();
  };
  const Eigen::Index n = 10;
  const Points x = Points::Random(2, n);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n, 0.05, 0.95);
  const Points g = grad_inputs(p, t, x, nullptr, true, selector);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < 2; ++k) {
      Points e = Points::Zero(2, n);
      e(k, i) = h;
      const double num = (scalar(x + e, t) - scalar(x - e, t)) / (2 * h);
      EXPECT_LT(std::abs(num - g(k, i)) / std::max(1e-3, std::abs(num)), 1e-4);
    }
}
