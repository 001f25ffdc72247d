#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wlf/dataset.hpp"
#include "wlf/error.hpp"
#include "wlf/field.hpp"
#include "wlf/hamiltonians.hpp"
#include "wlf/pathmodel.hpp"

namespace wlf {

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  int batch_size = 256;
  int iterations = 2000;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr_theta = 1e-3;
  double lr_eta = 1e-3;
  double lr_final_ratio = 1.0;  // cosine decay to this fraction of the base rates; 1 keeps them constant
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int refine_steps = 0;
  double refine_alpha = 0.0;  // <= 0 selects 0.1 * interval length
  std::uint64_t seed = 0;
  int eval_every = 0;          // observer cadence (checkpoints); 0 disables
  int log_every = 1;
  int theta_steps_per_eta = 1;
  TimeSampling time_sampling = TimeSampling::uniform;
  double divergence_bound = 1e6;
  bool train_path = true;
  int eval_samples = 8192;     // batch size of the final dual estimate

  void validate() const {
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (iterations < 0) throw ConfigError("iterations must be nonnegative");
    if (!(lr_theta > 0) || !(lr_eta > 0)) throw ConfigError("learning rates must be positive");
    if (!(lr_final_ratio > 0 && lr_final_ratio <= 1)) throw ConfigError("lr_final_ratio must lie in (0, 1]");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("moment decays must lie in [0,1)");
    if (refine_steps < 0) throw ConfigError("refine_steps must be nonnegative");
    if (log_every <= 0) throw ConfigError("log_every must be positive");
    if (eval_every < 0) throw ConfigError("eval_every must be nonnegative");
    if (theta_steps_per_eta <= 0) throw ConfigError("theta_steps_per_eta must be positive");
    if (!(divergence_bound > 0)) throw ConfigError("divergence_bound must be positive");
    if (eval_samples <= 0) throw ConfigError("eval_samples must be positive");
  }
};

struct IntervalReport {
  int index = 0;
  double t_lo = 0, t_hi = 0;
  double boundary = 0;
  double integrand = 0;
  double dual = 0;
  Eigen::Index samples = 0;
};

/// Monte Carlo estimate of the dual objective, split into the boundary term
/// (mean s_1 on mu_1 minus mean s_0 on mu_0) and the time-integrated integrand.
struct DualReport {
  double boundary_term = 0;
  double integrand_term = 0;
  double dual_estimate = 0;
  std::vector<IntervalReport> intervals;
};

struct HistoryRecord {
  int step = 0;
  double dual = 0;
  double boundary = 0;
  double integrand = 0;
  double grad_norm_theta = 0;
  double grad_norm_eta = 0;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<HistoryRecord> records;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "step,dual,boundary,integrand,grad_norm_theta,grad_norm_eta,seconds\n";
    for (const auto& r : records)
      os << r.step << ',' << r.dual << ',' << r.boundary << ',' << r.integrand << ',' << r.grad_norm_theta << ','
         << r.grad_norm_eta << ',' << r.seconds << '\n';
    return os.str();
  }
};

/// Adaptive-moment optimizer minimizing along the supplied gradient.
class Adam {
 public:
  Adam(Eigen::Index size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)), lr_(lr), b1_(beta1), b2_(beta2),
        eps_(eps) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr_scale = 1.0) {
    ++t_;
    m_ = b1_ * m_ + (1 - b1_) * grad;
    v_ = b2_ * v_ + (1 - b2_) * grad.cwiseAbs2();
    const double c1 = 1 - std::pow(b1_, t_), c2 = 1 - std::pow(b2_, t_);
    params.array() -= lr_scale * lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  Eigen::VectorXd m_, v_;
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
};

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, Eigen::Index size, double lr)
      : kind_(cfg.optimizer), lr_(lr), adam_(size, lr, cfg.beta1, cfg.beta2, cfg.adam_eps) {}

  void minimize_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr_scale = 1.0) {
    if (kind_ == OptimizerKind::adam)
      adam_.step(params, grad, lr_scale);
    else
      params -= lr_scale * lr_ * grad;
  }

 private:
  OptimizerKind kind_;
  double lr_;
  Adam adam_;
};

namespace detail {

inline Points draw_columns(const Points& src, Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, src.cols() - 1);
  Points out(src.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) out.col(i) = src.col(pick(rng));
  return out;
}

inline Eigen::VectorXd refine_steps_sizes(const TrainConfig& cfg, const PairBatch& b) {
  if (cfg.refine_alpha > 0) return Eigen::VectorXd::Constant(b.size(), cfg.refine_alpha);
  return 0.1 * (b.t_hi - b.t_lo);
}

inline double lr_scale(const TrainConfig& cfg, int it) {
  if (cfg.lr_final_ratio >= 1.0 || cfg.iterations <= 1) return 1.0;
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * it / (cfg.iterations - 1)));
  return cfg.lr_final_ratio + (1.0 - cfg.lr_final_ratio) * c;
}

inline void guard(double dual, double bound, int step) {
  if (!std::isfinite(dual) || std::abs(dual) > bound) {
    std::ostringstream os;
    os << "dual estimate diverged at step " << step << ": " << dual << " (bound " << bound << ")";
    throw NumericError(os.str());
  }
}

}  // namespace detail

/// Unbiased Monte Carlo estimate of the dual for fixed (theta, eta).
///
/// One shared draw of n samples per marginal feeds every boundary term, so the
/// per-interval duals telescope to the global one. Integrand samples use n
/// uniform global times routed through the path sampler.
inline DualReport estimate_dual(const ProblemSpec& problem, const FieldParams& field, const PathParams& path,
                                const MarginalDataset& data, Eigen::Index n, std::uint64_t seed) {
  data.validate();
  std::mt19937_64 rng(seed);
  const std::size_t M = data.size();
  std::vector<Eigen::VectorXd> s_at(M);
  for (std::size_t i = 0; i < M; ++i) {
    const Points xs = detail::draw_columns(data.snapshots[i], n, rng);
    s_at[i] = eval_batch(field, Eigen::VectorXd::Constant(n, data.times[i]), xs, nullptr, Needs{false, false}).value;
  }
  const PathSample ps = sample_path_batch(path, data, n, rng);
  const FieldEvalBatch fe =
      eval_batch(field, ps.pairs.t, ps.x_t, nullptr, Needs{true, problem.needs_laplacian()});
  const Eigen::VectorXd F = integrand_batch(problem, fe, ps.x_t, ps.pairs.t);

  DualReport r;
  const double inv_n = 1.0 / static_cast<double>(n);
  r.boundary_term = s_at[M - 1].mean() - s_at[0].mean();
  r.integrand_term = F.sum() * inv_n;
  r.dual_estimate = r.boundary_term - r.integrand_term;
  for (std::size_t j = 0; j + 1 < M; ++j) {
    IntervalReport ir;
    ir.index = static_cast<int>(j);
    ir.t_lo = data.times[j];
    ir.t_hi = data.times[j + 1];
    ir.boundary = s_at[j + 1].mean() - s_at[j].mean();
    double acc = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (ps.pairs.interval[static_cast<std::size_t>(i)] == static_cast<int>(j)) {
        acc += F(i);
        ++ir.samples;
      }
    ir.integrand = acc * inv_n;
    ir.dual = ir.boundary - ir.integrand;
    r.intervals.push_back(ir);
  }
  return r;
}

struct TrainResult {
  FieldParams field;
  PathParams path;
  TrainHistory history;
};

using TrainObserver = std::function<void(int step, const FieldParams&, const PathParams&)>;

/// Gradient pieces of one saddle-point step on a drawn batch.
struct StepGradients {
  Eigen::VectorXd theta;  // ascent direction of the batch dual
  Eigen::VectorXd eta;    // descent direction of the batch dual (ascent of the integrand)
  double boundary = 0;
  double integrand = 0;
  double dual() const { return boundary - integrand; }
};

/// theta-gradient of the batch dual mean s_1(x1) - mean s_0(x0) - mean F(t, x_t).
inline StepGradients theta_gradient(const ProblemSpec& problem, const FieldParams& field, const Points& x0,
                                    const Points& x1, const Eigen::VectorXd& t, const Points& xt) {
  StepGradients g;
  const Eigen::Index n0 = x0.cols(), n1 = x1.cols(), n = xt.cols();
  FieldTape tape0(field, Eigen::VectorXd::Zero(n0), x0, nullptr, Needs{false, false});
  FieldTape tape1(field, Eigen::VectorXd::Ones(n1), x1, nullptr, Needs{false, false});
  FieldTape tape(field, t, xt, nullptr, Needs{true, problem.needs_laplacian()});
  const Eigen::VectorXd F = integrand_batch(problem, tape.eval(), xt, t);
  g.boundary = tape1.eval().value.mean() - tape0.eval().value.mean();
  g.integrand = F.mean();
  FieldCotangent c0, c1;
  c0.value = Eigen::VectorXd::Constant(n0, -1.0 / static_cast<double>(n0));
  c1.value = Eigen::VectorXd::Constant(n1, 1.0 / static_cast<double>(n1));
  g.theta = tape1.backward(c1) + tape0.backward(c0) +
            tape.backward(integrand_cotangent(problem, tape.eval(), t, -1.0 / static_cast<double>(n)));
  return g;
}

namespace detail {

/// One tape serves both gradients when the samples are not refined: the
/// input adjoint of the theta aggregate is -1/n times the integrand gradient.
inline StepGradients fused_step(const ProblemSpec& problem, const FieldParams& field, const PathParams& path,
                                const PairBatch& pairs, const Points& x0, const Points& x1, bool want_eta) {
  StepGradients g;
  const Eigen::Index n = pairs.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto layout = path.spec.layout();
  const auto ptape = mlp_forward(layout, path.spec.activation, path.eta, path_input(path.spec, pairs));
  const Points xt = combine(pairs, ptape.output);

  FieldTape tape0(field, Eigen::VectorXd::Zero(x0.cols()), x0, nullptr, Needs{false, false});
  FieldTape tape1(field, Eigen::VectorXd::Ones(x1.cols()), x1, nullptr, Needs{false, false});
  FieldTape tape(field, pairs.t, xt, nullptr, Needs{true, problem.needs_laplacian()});
  const Eigen::VectorXd F = integrand_batch(problem, tape.eval(), xt, pairs.t);
  g.boundary = tape1.eval().value.mean() - tape0.eval().value.mean();
  g.integrand = F.mean();
  FieldCotangent c0, c1;
  c0.value = Eigen::VectorXd::Constant(x0.cols(), -1.0 / static_cast<double>(x0.cols()));
  c1.value = Eigen::VectorXd::Constant(x1.cols(), 1.0 / static_cast<double>(x1.cols()));
  Points xbar;
  g.theta = tape1.backward(c1) + tape0.backward(c0) +
            tape.backward(integrand_cotangent(problem, tape.eval(), pairs.t, -inv_n), want_eta ? &xbar : nullptr);
  if (want_eta) {
    Points out_bar(xbar.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd gx = -xbar.col(i);  // = inv_n * grad_x F (field part)
      if (problem.potential)
        gx += inv_n * problem.potential_weight * problem.potential->gradient(xt.col(i), pairs.t(i));
      out_bar.col(i) = interval_coefficients(pairs.t(i), pairs.t_lo(i), pairs.t_hi(i)).bridge() * gx;
    }
    g.eta = mlp_backward(layout, path.eta, ptape, out_bar);
  }
  return g;
}

}  // namespace detail

/// The alternating saddle-point loop: ascent on theta over the full dual,
/// descent on eta (through the reparameterized sampler), optional
/// Wasserstein refinement of the samples before the theta step.
inline TrainResult train(const ProblemSpec& problem, const MarginalDataset& data, const FieldParams& field0,
                         const PathParams& path0, const TrainConfig& cfg, const TrainObserver& observer = {}) {
  cfg.validate();
  data.validate();
  problem.validate(data.dim);
  if (field0.spec.input_dim != data.dim || path0.spec.dim != data.dim)
    throw ConfigError("field/path dimensions do not match the dataset");

  TrainResult res{field0, path0, {}};
  Optimizer opt_theta(cfg, res.field.theta.size(), cfg.lr_theta);
  Optimizer opt_eta(cfg, res.path.eta.size(), cfg.lr_eta);
  std::mt19937_64 rng(cfg.seed);
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index n = cfg.batch_size;

  for (int it = 0; it < cfg.iterations; ++it) {
    const Eigen::VectorXd t = draw_times(n, cfg.time_sampling, rng);
    const PairBatch pairs = draw_pairs(data, t, rng, res.path.spec.indicator_time);
    const Points x0 = detail::draw_columns(data.snapshots.front(), n, rng);
    const Points x1 = detail::draw_columns(data.snapshots.back(), n, rng);

    const bool eta_step = cfg.train_path && it % cfg.theta_steps_per_eta == 0;
    Eigen::VectorXd g_eta;
    StepGradients g;
    if (cfg.refine_steps == 0) {
      g = detail::fused_step(problem, res.field, res.path, pairs, x0, x1, eta_step);
      g_eta = g.eta;
    } else {
      // grad_eta on the sampler output, grad_theta on the refined samples.
      Points xt;
      if (eta_step)
        g_eta = path_gradient(problem, res.field, res.path, pairs, &xt);
      else
        xt = interpolate(res.path, pairs);
      xt = wasserstein_refine(problem, res.field, std::move(xt), pairs, detail::refine_steps_sizes(cfg, pairs),
                              cfg.refine_steps);
      g = theta_gradient(problem, res.field, x0, x1, t, xt);
    }
    detail::guard(g.dual(), cfg.divergence_bound, it);
    if (!g.theta.allFinite()) throw NumericError("non-finite theta gradient at step " + std::to_string(it));

    const double scale = detail::lr_scale(cfg, it);
    opt_theta.minimize_step(res.field.theta, -g.theta, scale);
    if (eta_step) {
      if (!g_eta.allFinite()) throw NumericError("non-finite eta gradient at step " + std::to_string(it));
      opt_eta.minimize_step(res.path.eta, -g_eta, scale);
    }

    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      HistoryRecord rec;
      rec.step = it;
      rec.dual = g.dual();
      rec.boundary = g.boundary;
      rec.integrand = g.integrand;
      rec.grad_norm_theta = g.theta.norm();
      rec.grad_norm_eta = eta_step ? g_eta.norm() : 0.0;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      res.history.records.push_back(rec);
    }
    if (observer && cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) observer(it + 1, res.field, res.path);
  }
  return res;
}

/// Draws samples of a fixed density curve at the requested times.
using PathSource = std::function<Points(const Eigen::VectorXd& t, std::mt19937_64& rng)>;

inline PathSource frozen_path_source(const PathParams& path, const MarginalDataset& data) {
  return [path, data](const Eigen::VectorXd& t, std::mt19937_64& rng) {
    return interpolate(path, draw_pairs(data, t, rng, path.spec.indicator_time));
  };
}

struct ActionResult {
  double action = 0;
  FieldParams field;
  TrainHistory history;
};

/// Action of a fixed curve: only the sup over the field is run; the returned
/// action is a large-sample dual estimate at the final field.
inline ActionResult action_of_path(const ProblemSpec& problem, const PathSource& source, const FieldParams& field0,
                                   const TrainConfig& cfg) {
  cfg.validate();
  problem.validate(field0.spec.input_dim);
  ActionResult res{0.0, field0, {}};
  Optimizer opt(cfg, res.field.theta.size(), cfg.lr_theta);
  std::mt19937_64 rng(cfg.seed);
  const Eigen::Index n = cfg.batch_size;
  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < cfg.iterations; ++it) {
    const Eigen::VectorXd t = draw_times(n, cfg.time_sampling, rng);
    const Points xt = source(t, rng);
    const Points x0 = source(Eigen::VectorXd::Zero(n), rng);
    const Points x1 = source(Eigen::VectorXd::Ones(n), rng);
    const StepGradients g = theta_gradient(problem, res.field, x0, x1, t, xt);
    detail::guard(g.dual(), cfg.divergence_bound, it);
    opt.minimize_step(res.field.theta, -g.theta, detail::lr_scale(cfg, it));
    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      HistoryRecord rec;
      rec.step = it;
      rec.dual = g.dual();
      rec.boundary = g.boundary;
      rec.integrand = g.integrand;
      rec.grad_norm_theta = g.theta.norm();
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      res.history.records.push_back(rec);
    }
  }
  const Eigen::Index m = cfg.eval_samples;
  std::mt19937_64 eval_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const Eigen::VectorXd t = draw_times(m, TimeSampling::stratified, eval_rng);
  const Points xt = source(t, eval_rng);
  const Points x0 = source(Eigen::VectorXd::Zero(m), eval_rng);
  const Points x1 = source(Eigen::VectorXd::Ones(m), eval_rng);
  FieldTape tape(res.field, t, xt, nullptr, Needs{true, problem.needs_laplacian()});
  const double boundary = eval_batch(res.field, Eigen::VectorXd::Ones(m), x1, nullptr, Needs{false, false}).value.mean() -
                          eval_batch(res.field, Eigen::VectorXd::Zero(m), x0, nullptr, Needs{false, false}).value.mean();
  res.action = boundary - integrand_batch(problem, tape.eval(), xt, t).mean();
  return res;
}

inline ActionResult action_of_path(const ProblemSpec& problem, const MarginalDataset& data, const PathParams& frozen,
                                   const FieldParams& field0, const TrainConfig& cfg) {
  data.validate();
  return action_of_path(problem, frozen_path_source(frozen, data), field0, cfg);
}

}  // namespace wlf
