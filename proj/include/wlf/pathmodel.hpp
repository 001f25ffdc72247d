#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wlf/dataset.hpp"
#include "wlf/error.hpp"
#include "wlf/field.hpp"
#include "wlf/hamiltonians.hpp"
#include "wlf/mlp.hpp"

namespace wlf {

/// Architecture of the interpolation correction network
/// (t, x_left, x_right, k) -> R^d. One network is shared by every interval.
struct PathSpec {
  int dim = 0;
  std::vector<int> hidden_widths{64, 64};
  Activation activation = Activation::tanh;
  bool use_indicator = false;
  double indicator_time = 0.5;  // k = 1[t < indicator_time], global time

  int input_width() const { return 2 * dim + 1 + (use_indicator ? 1 : 0); }

  MlpLayout layout() const {
    if (dim <= 0) throw ConfigError("path dim must be positive");
    return MlpLayout(input_width(), hidden_widths, dim);
  }

  bool operator==(const PathSpec&) const = default;
};

struct PathParams {
  PathSpec spec;
  Eigen::VectorXd eta;

  /// Parameters whose correction output is identically zero.
  static PathParams zeros(const PathSpec& spec) {
    return {spec, Eigen::VectorXd::Zero(spec.layout().parameter_count())};
  }
};

inline PathParams init_path_params(const PathSpec& spec, std::uint64_t seed) {
  return {spec, spec.layout().glorot(seed)};
}

/// Independent endpoint draws for a batch of times, each routed to the data
/// interval [t_lo, t_hi] that covers it.
struct PairBatch {
  Eigen::VectorXd t;
  Points x_left;
  Points x_right;
  Eigen::VectorXd k;
  std::vector<int> interval;
  Eigen::VectorXd t_lo;
  Eigen::VectorXd t_hi;

  Eigen::Index size() const { return t.size(); }
};

/// Interpolation weights on [lo, hi]: c_left = (hi-t)/(hi-lo), c_right = (t-lo)/(hi-lo).
struct IntervalCoefficients {
  double left = 1;
  double right = 0;

  /// Multiplier of the learned correction; zero at both ends, 1/2 mid-interval.
  double bridge() const { return 1.0 - left * left - right * right; }
  /// Refinement multiplier, the interval-local analogue of t(1-t).
  double refine() const { return left * right; }
};

inline IntervalCoefficients interval_coefficients(double t, double lo, double hi) {
  if (!(hi > lo)) throw ContractError("degenerate interval");
  if (t < lo || t > hi)
    throw ContractError("time " + std::to_string(t) + " outside interval [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
  return {(hi - t) / (hi - lo), (t - lo) / (hi - lo)};
}

namespace detail {

inline Eigen::MatrixXd path_input(const PathSpec& spec, const PairBatch& b) {
  const Eigen::Index n = b.size(), d = spec.dim;
  if (b.x_left.rows() != d || b.x_right.rows() != d || b.x_left.cols() != n || b.x_right.cols() != n)
    throw ContractError("pair batch shape does not match the path spec");
  Eigen::MatrixXd in(spec.input_width(), n);
  in.row(0) = b.t.transpose();
  in.middleRows(1, d) = b.x_left;
  in.middleRows(1 + d, d) = b.x_right;
  if (spec.use_indicator) {
    if (b.k.size() == n)
      in.row(2 * d + 1) = b.k.transpose();
    else
      for (Eigen::Index i = 0; i < n; ++i) in(2 * d + 1, i) = b.t(i) < spec.indicator_time ? 1.0 : 0.0;
  }
  return in;
}

inline void check_eta(const PathParams& p) {
  if (p.eta.size() != p.spec.layout().parameter_count())
    throw ContractError("path parameter vector does not match its spec");
}

inline Points combine(const PairBatch& b, const Points& net) {
  const Eigen::Index n = b.size();
  Points x(b.x_left.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = interval_coefficients(b.t(i), b.t_lo(i), b.t_hi(i));
    if (c.right == 0.0)
      x.col(i) = b.x_left.col(i);
    else if (c.left == 0.0)
      x.col(i) = b.x_right.col(i);
    else
      x.col(i) = c.left * b.x_left.col(i) + c.right * b.x_right.col(i) + c.bridge() * net.col(i);
  }
  return x;
}

}  // namespace detail

/// x_t = c_L x_left + c_R x_right + (1 - c_L^2 - c_R^2) net(t, x_left, x_right, k).
/// Interval endpoints return the drawn marginal samples bitwise.
inline Points interpolate(const PathParams& eta, const PairBatch& batch) {
  detail::check_eta(eta);
  if (batch.size() == 0) return Points(eta.spec.dim, 0);
  const auto tape = mlp_forward(eta.spec.layout(), eta.spec.activation, eta.eta,
                                detail::path_input(eta.spec, batch), false);
  return detail::combine(batch, tape.output);
}

/// Single-interval form: every sample lives on [t_lo, t_hi].
inline Points interpolate(const PathParams& eta, PairBatch batch, double t_lo, double t_hi) {
  batch.t_lo = Eigen::VectorXd::Constant(batch.size(), t_lo);
  batch.t_hi = Eigen::VectorXd::Constant(batch.size(), t_hi);
  if (batch.interval.empty()) batch.interval.assign(static_cast<std::size_t>(batch.size()), 0);
  return interpolate(eta, batch);
}

enum class TimeSampling { uniform, stratified };

inline Eigen::VectorXd draw_times(Eigen::Index n, TimeSampling rule, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i)
    t(i) = rule == TimeSampling::uniform ? u(rng) : (static_cast<double>(i) + u(rng)) / static_cast<double>(n);
  return t;
}

/// Index j with times[j] <= t <= times[j+1] (right-open except at 1).
inline int covering_interval(const std::vector<double>& times, double t) {
  if (t < times.front() || t > times.back())
    throw ContractError("time " + std::to_string(t) + " outside dataset range");
  auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto j = static_cast<int>(it - times.begin()) - 1;
  return std::min(j, static_cast<int>(times.size()) - 2);
}

/// Draws uniform-with-replacement endpoint samples for the given times.
inline PairBatch draw_pairs(const MarginalDataset& data, const Eigen::VectorXd& t, std::mt19937_64& rng,
                            double indicator_time = 0.5) {
  if (data.size() < 2) throw ConfigError("path sampling needs at least two marginals");
  const Eigen::Index n = t.size();
  PairBatch b;
  b.t = t;
  b.x_left.resize(data.dim, n);
  b.x_right.resize(data.dim, n);
  b.k.resize(n);
  b.t_lo.resize(n);
  b.t_hi.resize(n);
  b.interval.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = covering_interval(data.times, t(i));
    const auto& left = data.snapshots[static_cast<std::size_t>(j)];
    const auto& right = data.snapshots[static_cast<std::size_t>(j) + 1];
    std::uniform_int_distribution<Eigen::Index> pick_l(0, left.cols() - 1), pick_r(0, right.cols() - 1);
    b.x_left.col(i) = left.col(pick_l(rng));
    b.x_right.col(i) = right.col(pick_r(rng));
    b.interval[static_cast<std::size_t>(i)] = j;
    b.t_lo(i) = data.times[static_cast<std::size_t>(j)];
    b.t_hi(i) = data.times[static_cast<std::size_t>(j) + 1];
    b.k(i) = t(i) < indicator_time ? 1.0 : 0.0;
  }
  return b;
}

struct PathSample {
  PairBatch pairs;
  Points x_t;
};

/// Uniform global times, routed to covering intervals, pushed through the sampler.
inline PathSample sample_path_batch(const PathParams& eta, const MarginalDataset& data, Eigen::Index n,
                                    std::mt19937_64& rng, TimeSampling rule = TimeSampling::uniform) {
  if (data.size() < 2) throw ConfigError("path sampling needs at least two marginals");
  PathSample s;
  s.pairs = draw_pairs(data, draw_times(n, rule, rng), rng, eta.spec.indicator_time);
  s.x_t = interpolate(eta, s.pairs);
  return s;
}

inline PathSample sample_path_batch(const PathParams& eta, const MarginalDataset& data, Eigen::Index n,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_path_batch(eta, data, n, rng);
}

/// Samples of the path at one fixed global time.
inline Points sample_at_time(const PathParams& eta, const MarginalDataset& data, double t, Eigen::Index n,
                             std::mt19937_64& rng) {
  return interpolate(eta, draw_pairs(data, Eigen::VectorXd::Constant(n, t), rng, eta.spec.indicator_time));
}

/// Nonparametric ascent of the sampled points along the integrand gradient,
/// x <- x + alpha_i * c_L c_R * grad_x[integrand]. Interval endpoints are fixed points.
/// `alpha` holds one step size per sample.
inline Points wasserstein_refine(const ProblemSpec& problem, const FieldParams& field, Points x,
                                 const PairBatch& batch, const Eigen::VectorXd& alpha, int steps) {
  if (steps < 0) throw ContractError("refinement steps must be nonnegative");
  if (steps == 0 || x.cols() == 0) return x;
  if (alpha.size() != x.cols()) throw ContractError("refinement needs one step size per sample");
  Eigen::VectorXd mult(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    if (!(alpha(i) > 0)) throw ContractError("refinement step size must be positive");
    mult(i) = alpha(i) * interval_coefficients(batch.t(i), batch.t_lo(i), batch.t_hi(i)).refine();
  }
  for (int s = 0; s < steps; ++s) {
    const Points g = integrand_grad_x(problem, field, batch.t, x);
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      if (!g.col(i).allFinite())
        throw NumericError("non-finite integrand gradient during refinement at sample " + std::to_string(i) +
                           " (t=" + std::to_string(batch.t(i)) + ")");
      if (mult(i) != 0.0) x.col(i) += mult(i) * g.col(i);
    }
  }
  return x;
}

inline Points wasserstein_refine(const ProblemSpec& problem, const FieldParams& field, Points x,
                                 const PairBatch& batch, double alpha, int steps) {
  const Eigen::VectorXd per_sample = Eigen::VectorXd::Constant(x.cols(), alpha);
  return wasserstein_refine(problem, field, std::move(x), batch, per_sample, steps);
}

/// Reparameterization gradient of the mean integrand (1/n) sum_i F(t_i, x_t^i(eta))
/// with respect to eta. Following it increases the integrand term and so
/// decreases the dual: this is the descent direction of the outer minimization.
/// When `points` is non-null it receives the interpolated samples x_t.
inline Eigen::VectorXd path_gradient(const ProblemSpec& problem, const FieldParams& field, const PathParams& eta,
                                     const PairBatch& batch, Points* points = nullptr) {
  detail::check_eta(eta);
  const auto layout = eta.spec.layout();
  const Eigen::Index n = batch.size();
  if (n == 0) {
    if (points) *points = Points(eta.spec.dim, 0);
    return Eigen::VectorXd::Zero(layout.parameter_count());
  }
  const auto tape = mlp_forward(layout, eta.spec.activation, eta.eta, detail::path_input(eta.spec, batch));
  const Points x = detail::combine(batch, tape.output);
  if (points) *points = x;
  const Points g = integrand_grad_x(problem, field, batch.t, x);
  Points out_bar(g.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i)
    out_bar.col(i) =
        (interval_coefficients(batch.t(i), batch.t_lo(i), batch.t_hi(i)).bridge() / static_cast<double>(n)) *
        g.col(i);
  return mlp_backward(layout, eta.eta, tape, out_bar);
}

}  // namespace wlf
