#pragma once

#include <Eigen/Dense>
#include <random>

#include "wlf/dataset.hpp"
#include "wlf/field.hpp"

namespace fixtures {

using wlf::Points;

/// s(t, x) = <w, x> + b t, realized by a one-unit linear hidden layer.
inline wlf::FieldParams linear_field(const Eigen::VectorXd& w, double b) {
  wlf::FieldSpec spec;
  spec.input_dim = static_cast<int>(w.size());
  spec.hidden_widths = {1};
  spec.activation = wlf::Activation::linear;
  const auto layout = spec.layout();
  wlf::FieldParams p{spec, Eigen::VectorXd::Zero(layout.parameter_count())};
  auto W0 = layout.weight(p.theta, 0);
  W0.leftCols(w.size()) = w.transpose();
  W0(0, w.size()) = b;
  layout.weight(p.theta, 1)(0, 0) = 1.0;
  return p;
}

/// s(t, x) = 1/2 |x|^2 through square activations.
inline wlf::FieldParams quadratic_field(int d) {
  wlf::FieldSpec spec;
  spec.input_dim = d;
  spec.hidden_widths = {d};
  spec.activation = wlf::Activation::square;
  const auto layout = spec.layout();
  wlf::FieldParams p{spec, Eigen::VectorXd::Zero(layout.parameter_count())};
  layout.weight(p.theta, 0).leftCols(d).setIdentity();
  layout.weight(p.theta, 1).setOnes();
  return p;
}

/// Field whose output is the constant c.
inline wlf::FieldParams constant_field(int d, double c) {
  wlf::FieldSpec spec;
  spec.input_dim = d;
  spec.hidden_widths = {4};
  const auto layout = spec.layout();
  wlf::FieldParams p{spec, Eigen::VectorXd::Zero(layout.parameter_count())};
  layout.bias(p.theta, 1)(0) = c;
  return p;
}

/// Small random tanh field.
inline wlf::FieldParams random_field(int d, std::uint64_t seed, std::vector<int> widths = {8, 8}) {
  wlf::FieldSpec spec;
  spec.input_dim = d;
  spec.hidden_widths = std::move(widths);
  auto p = wlf::init_params(spec, seed);
  p.theta *= 1.5;
  return p;
}

inline Points gaussian(int d, Eigen::Index n, const Eigen::VectorXd& mean, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Points x = Points::NullaryExpr(d, n, [&] { return scale * z(rng); });
  x.colwise() += mean;
  return x;
}

/// Every sample of marginal i sits at centers[i].
inline wlf::MarginalDataset point_masses(const std::vector<Eigen::VectorXd>& centers, std::vector<double> times,
                                         Eigen::Index n = 64) {
  wlf::MarginalDataset ds;
  ds.dim = static_cast<int>(centers.front().size());
  ds.times = std::move(times);
  ds.name = "points";
  for (const auto& c : centers) ds.snapshots.push_back(c.replicate(1, n));
  return ds;
}

}  // namespace fixtures
