#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "wlf/activation.hpp"
#include "wlf/error.hpp"

namespace wlf {

/// Points are stored one per column: a d x n matrix holds n samples in R^d.
using Points = Eigen::MatrixXd;

/// Offsets of every dense layer inside a flat parameter vector.
///
/// Each layer stores its weight matrix (out x in, column-major) followed by
/// its bias vector. The last layer is affine (no activation).
class MlpLayout {
 public:
  struct Layer {
    Eigen::Index in = 0;
    Eigen::Index out = 0;
    Eigen::Index offset = 0;  // start of W; bias starts at offset + in*out
  };

  MlpLayout() = default;

  MlpLayout(Eigen::Index input_width, const std::vector<int>& hidden, Eigen::Index output_width) {
    if (input_width <= 0) throw ConfigError("network input width must be positive");
    if (hidden.empty()) throw ConfigError("network needs at least one hidden layer");
    if (output_width <= 0) throw ConfigError("network output width must be positive");
    Eigen::Index in = input_width;
    Eigen::Index offset = 0;
    auto push = [&](Eigen::Index out) {
      layers_.push_back({in, out, offset});
      offset += in * out + out;
      in = out;
    };
    for (int w : hidden) {
      if (w <= 0) throw ConfigError("hidden layer widths must be positive");
      push(w);
    }
    push(output_width);
    count_ = offset;
  }

  std::span<const Layer> layers() const { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  Eigen::Index parameter_count() const { return count_; }
  Eigen::Index input_width() const { return layers_.front().in; }
  Eigen::Index output_width() const { return layers_.back().out; }

  Eigen::Map<const Eigen::MatrixXd> weight(const Eigen::VectorXd& p, std::size_t l) const {
    const auto& L = layers_[l];
    return {p.data() + L.offset, L.out, L.in};
  }
  Eigen::Map<const Eigen::VectorXd> bias(const Eigen::VectorXd& p, std::size_t l) const {
    const auto& L = layers_[l];
    return {p.data() + L.offset + L.in * L.out, L.out};
  }
  Eigen::Map<Eigen::MatrixXd> weight(Eigen::VectorXd& p, std::size_t l) const {
    const auto& L = layers_[l];
    return {p.data() + L.offset, L.out, L.in};
  }
  Eigen::Map<Eigen::VectorXd> bias(Eigen::VectorXd& p, std::size_t l) const {
    const auto& L = layers_[l];
    return {p.data() + L.offset + L.in * L.out, L.out};
  }

  /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  Eigen::VectorXd glorot(std::uint64_t seed) const {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(count_);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      const double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
      std::uniform_real_distribution<double> u(-limit, limit);
      auto W = weight(p, l);
      for (Eigen::Index j = 0; j < W.cols(); ++j)
        for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
    }
    return p;
  }

 private:
  std::vector<Layer> layers_;
  Eigen::Index count_ = 0;
};

/// Cached forward pass of a plain (value-only) MLP.
struct MlpTape {
  std::vector<Eigen::MatrixXd> inputs;  // inputs[l] feeds layer l; inputs[0] is the network input
  std::vector<Eigen::MatrixXd> slopes;  // activation derivative at each hidden pre-activation
  Eigen::MatrixXd output;
};

inline MlpTape mlp_forward(const MlpLayout& layout, Activation act, const Eigen::VectorXd& p,
                           const Eigen::MatrixXd& input, bool keep_tape = true) {
  MlpTape tape;
  Eigen::MatrixXd h = input;
  const std::size_t n_layers = layout.depth();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Eigen::MatrixXd a = layout.weight(p, l) * h;
    a.colwise() += layout.bias(p, l);
    if (keep_tape) tape.inputs.push_back(std::move(h));
    if (l + 1 == n_layers) {
      tape.output = std::move(a);
      break;
    }
    Eigen::MatrixXd slope;
    activate(act, a, h, keep_tape ? &slope : nullptr, nullptr, nullptr);
    if (keep_tape) tape.slopes.push_back(std::move(slope));
  }
  return tape;
}

/// Reverse pass: gradient w.r.t. parameters of <out_bar, output>.
/// If `input_bar` is non-null it receives the gradient w.r.t. the input.
inline Eigen::VectorXd mlp_backward(const MlpLayout& layout, const Eigen::VectorXd& p, const MlpTape& tape,
                                    const Eigen::MatrixXd& out_bar, Eigen::MatrixXd* input_bar = nullptr) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(layout.parameter_count());
  Eigen::MatrixXd abar = out_bar;
  for (std::size_t l = layout.depth(); l-- > 0;) {
    layout.weight(g, l).noalias() += abar * tape.inputs[l].transpose();
    layout.bias(g, l) += abar.rowwise().sum();
    if (l == 0 && !input_bar) break;
    Eigen::MatrixXd hbar = layout.weight(p, l).transpose() * abar;
    if (l == 0) {
      *input_bar = std::move(hbar);
      break;
    }
    abar = hbar.cwiseProduct(tape.slopes[l - 1]);
  }
  return g;
}

}  // namespace wlf
