#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <string_view>

#include "wlf/error.hpp"

namespace wlf {

/// Elementwise nonlinearities with closed-form derivatives up to third order.
///
/// `tanh` and `softplus` are the production choices. `linear` and `square`
/// (a -> a^2/2) exist so that fields with known polynomial closed forms can be
/// built by hand in tests and oracles.
enum class Activation { tanh, softplus, linear, square };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::linear: return "linear";
    case Activation::square: return "square";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  if (name == "linear") return Activation::linear;
  if (name == "square") return Activation::square;
  if (name == "relu")
    throw ConfigError("activation 'relu' is not twice differentiable; use tanh or softplus");
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

/// Highest derivative order with a closed form for the activation.
inline int max_derivative_order(Activation) { return 3; }

/// Value and derivatives of the activation at every entry of `a`.
/// Derivative outputs may be null when not needed.
inline void activate(Activation act, const Eigen::MatrixXd& a, Eigen::MatrixXd& y,
                     Eigen::MatrixXd* d1, Eigen::MatrixXd* d2, Eigen::MatrixXd* d3) {
  switch (act) {
    case Activation::tanh: {
      // 1 - 2/(1+e^{2a}) vectorizes through exp and saturates correctly at +-inf.
      y = (1.0 - 2.0 / (1.0 + (2.0 * a.array()).exp())).matrix();
      if (!d1) return;
      *d1 = (1.0 - y.array().square()).matrix();
      if (d2) *d2 = (-2.0 * y.array() * d1->array()).matrix();
      if (d3) *d3 = (2.0 * d1->array() * (2.0 * y.array().square() - d1->array())).matrix();
      return;
    }
    case Activation::softplus: {
      y = a.unaryExpr([](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); });
      if (!d1) return;
      Eigen::ArrayXXd sig = a.unaryExpr([](double v) {
                              return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                            }).array();
      *d1 = sig.matrix();
      Eigen::ArrayXXd s2 = sig * (1.0 - sig);
      if (d2) *d2 = s2.matrix();
      if (d3) *d3 = (s2 * (1.0 - 2.0 * sig)).matrix();
      return;
    }
    case Activation::linear: {
      y = a;
      if (d1) d1->setOnes(a.rows(), a.cols());
      if (d2) d2->setZero(a.rows(), a.cols());
      if (d3) d3->setZero(a.rows(), a.cols());
      return;
    }
    case Activation::square: {
      y = (0.5 * a.array().square()).matrix();
      if (d1) *d1 = a;
      if (d2) d2->setOnes(a.rows(), a.cols());
      if (d3) d3->setZero(a.rows(), a.cols());
      return;
    }
  }
}

}  // namespace wlf
