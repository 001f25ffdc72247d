#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wlf/error.hpp"
#include "wlf/field.hpp"

namespace wlf {

enum class Kinetic { w2, wfr };

/// Diffusion schedule sigma(t) for the entropic (Schrodinger bridge) mode.
struct SigmaSchedule {
  enum class Kind { constant, piecewise_constant, affine };
  Kind kind = Kind::constant;
  double sigma = 1.0;              // constant
  std::vector<double> breakpoints; // piecewise_constant: interior breakpoints, sorted
  std::vector<double> values;      // piecewise_constant: breakpoints.size()+1 values
  double sigma0 = 1.0, sigma1 = 1.0;  // affine: sigma(t) = (1-t) sigma0 + t sigma1

  static SigmaSchedule constant_sigma(double s) {
    SigmaSchedule out;
    out.sigma = s;
    return out;
  }

  double operator()(double t) const {
    switch (kind) {
      case Kind::constant: return sigma;
      case Kind::affine: return (1.0 - t) * sigma0 + t * sigma1;
      case Kind::piecewise_constant: {
        auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
        return values[static_cast<std::size_t>(it - breakpoints.begin())];
      }
    }
    return sigma;
  }

  void validate() const {
    switch (kind) {
      case Kind::constant:
        if (!(sigma >= 0)) throw ConfigError("sigma must be nonnegative");
        break;
      case Kind::affine:
        if (!(sigma0 >= 0 && sigma1 >= 0)) throw ConfigError("affine sigma endpoints must be nonnegative");
        break;
      case Kind::piecewise_constant:
        if (values.size() != breakpoints.size() + 1)
          throw ConfigError("piecewise sigma needs one more value than breakpoints");
        if (!std::is_sorted(breakpoints.begin(), breakpoints.end()))
          throw ConfigError("piecewise sigma breakpoints must be sorted");
        for (double v : values)
          if (!(v >= 0)) throw ConfigError("piecewise sigma values must be nonnegative");
        break;
    }
  }
};

/// Spatial potential V_t(x).
struct PotentialSpec {
  enum class Kind { linear_per_interval, analytic_quadratic, callback };
  Kind kind = Kind::linear_per_interval;

  // linear_per_interval: V_t(x) = -<x, accel[j]> for t in [times[j], times[j+1]].
  std::vector<double> times;
  std::vector<Eigen::VectorXd> accel;
  bool uses_held_out_mean = false;  // provenance flag set by the mean-acceleration builder

  // analytic_quadratic: V(x) = 1/2 x^T Q x + <b, x>.
  Eigen::MatrixXd Q;
  Eigen::VectorXd b;

  // callback: user-registered value and gradient.
  std::function<double(const Eigen::VectorXd&, double)> value_fn;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> grad_fn;

  static PotentialSpec linear(std::vector<double> times, std::vector<Eigen::VectorXd> accel) {
    PotentialSpec p;
    p.kind = Kind::linear_per_interval;
    p.times = std::move(times);
    p.accel = std::move(accel);
    return p;
  }

  static PotentialSpec constant_accel(const Eigen::VectorXd& a) { return linear({0.0, 1.0}, {a}); }

  static PotentialSpec quadratic(Eigen::MatrixXd Q, Eigen::VectorXd b) {
    PotentialSpec p;
    p.kind = Kind::analytic_quadratic;
    p.Q = std::move(Q);
    p.b = std::move(b);
    return p;
  }

  std::size_t interval_of(double t) const {
    if (times.size() < 2 || t < times.front() || t > times.back())
      throw ConfigError("potential does not cover time " + std::to_string(t));
    auto it = std::upper_bound(times.begin(), times.end(), t);
    auto j = static_cast<std::size_t>(it - times.begin());
    return std::min(j == 0 ? 0 : j - 1, accel.size() - 1);
  }

  double value(const Eigen::VectorXd& x, double t) const {
    switch (kind) {
      case Kind::linear_per_interval: return -x.dot(accel[interval_of(t)]);
      case Kind::analytic_quadratic: return 0.5 * x.dot(Q * x) + b.dot(x);
      case Kind::callback: return value_fn(x, t);
    }
    return 0;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x, double t) const {
    switch (kind) {
      case Kind::linear_per_interval: return -accel[interval_of(t)];
      case Kind::analytic_quadratic: return Q * x + b;
      case Kind::callback:
        if (!grad_fn) throw CapabilityError("callback potential has no gradient registered");
        return grad_fn(x, t);
    }
    return Eigen::VectorXd::Zero(x.size());
  }

  void validate(int dim) const {
    switch (kind) {
      case Kind::linear_per_interval:
        if (times.size() < 2 || accel.size() + 1 != times.size())
          throw ConfigError("linear potential needs one acceleration per interval");
        if (!std::is_sorted(times.begin(), times.end())) throw ConfigError("potential times must be sorted");
        for (const auto& a : accel)
          if (a.size() != dim || !a.allFinite()) throw ConfigError("potential acceleration has wrong dimension");
        break;
      case Kind::analytic_quadratic:
        if (Q.rows() != dim || Q.cols() != dim || b.size() != dim)
          throw ConfigError("quadratic potential has wrong dimension");
        break;
      case Kind::callback:
        if (!value_fn) throw ConfigError("callback potential has no value function");
        break;
    }
  }
};

/// The Lagrangian being optimized: kinetic energy, optional entropic
/// (Hopf-Cole) mode, optional spatial potential.
struct ProblemSpec {
  Kinetic kinetic = Kinetic::w2;
  double lambda = 1.0;  // WFR growth weight
  std::optional<SigmaSchedule> entropic;
  std::optional<PotentialSpec> potential;
  double potential_weight = 1.0;
  std::string notes;

  double growth_weight() const { return kinetic == Kinetic::wfr ? lambda : 0.0; }
  bool needs_laplacian() const { return entropic.has_value(); }

  void validate(int dim = -1) const {
    if (kinetic == Kinetic::wfr && !(lambda > 0)) throw ConfigError("WFR kinetic energy needs lambda > 0");
    if (entropic) {
      if (kinetic != Kinetic::w2) throw ConfigError("entropic mode requires the W2 kinetic energy");
      entropic->validate();
    }
    if (potential && dim > 0) potential->validate(dim);
  }
};

/// Dual densities at one point; integrand = dt + kstar + potential.
struct HamiltonianTerms {
  double kstar = 0;
  double potential = 0;
  double integrand = 0;
};

inline double diffusion_coefficient(const ProblemSpec& problem, double t) {
  if (!problem.entropic) return 0.0;
  const double s = (*problem.entropic)(t);
  return 0.5 * s * s;
}

inline double kstar_density(const ProblemSpec& problem, const FieldEval& fe, double t) {
  double k = 0.5 * fe.grad_x.squaredNorm();
  if (problem.kinetic == Kinetic::wfr) k += 0.5 * problem.lambda * fe.value * fe.value;
  if (problem.entropic) {
    if (!fe.laplacian) throw ContractError("entropic mode needs the field Laplacian");
    k += diffusion_coefficient(problem, t) * *fe.laplacian;
  }
  return k;
}

inline double potential_density(const ProblemSpec& problem, const Eigen::VectorXd& x, double t) {
  if (!problem.potential) return 0.0;
  return problem.potential_weight * problem.potential->value(x, t);
}

inline HamiltonianTerms integrand(const ProblemSpec& problem, const FieldEval& fe, const Eigen::VectorXd& x,
                                  double t) {
  HamiltonianTerms h;
  h.kstar = kstar_density(problem, fe, t);
  h.potential = potential_density(problem, x, t);
  h.integrand = fe.dt + h.kstar + h.potential;
  return h;
}

/// State-space dynamics induced by the field.
struct Dynamics {
  Eigen::VectorXd velocity;
  double growth = 0;     // g = s under WFR; the log-mass rate is lambda*g
  double diffusion = 0;  // SDE volatility sigma(t)
};

inline Dynamics dynamics(const ProblemSpec& problem, const FieldEval& fe, double t) {
  Dynamics out;
  out.velocity = fe.grad_x;
  if (problem.kinetic == Kinetic::wfr) out.growth = fe.value;
  if (problem.entropic) out.diffusion = (*problem.entropic)(t);
  return out;
}

// Batched forms used by the trainer and the evaluators.

/// Integrand dt + K* + U for every sample of an evaluated batch.
inline Eigen::VectorXd integrand_batch(const ProblemSpec& problem, const FieldEvalBatch& fe,
                                       const Points& x, const Eigen::VectorXd& t) {
  const Eigen::Index n = fe.size();
  if (problem.entropic && !fe.laplacian) throw ContractError("entropic mode needs the field Laplacian");
  Eigen::VectorXd out = fe.dt + 0.5 * fe.grad_x.colwise().squaredNorm().transpose();
  if (problem.kinetic == Kinetic::wfr) out += 0.5 * problem.lambda * fe.value.cwiseAbs2();
  if (problem.entropic)
    for (Eigen::Index i = 0; i < n; ++i) out(i) += diffusion_coefficient(problem, t(i)) * (*fe.laplacian)(i);
  if (problem.potential)
    for (Eigen::Index i = 0; i < n; ++i) out(i) += potential_density(problem, x.col(i), t(i));
  return out;
}

/// Cotangent weights of `scale * sum_i integrand_i` with respect to the field
/// quantities (the potential term does not depend on the field).
inline FieldCotangent integrand_cotangent(const ProblemSpec& problem, const FieldEvalBatch& fe,
                                          const Eigen::VectorXd& t, double scale) {
  const Eigen::Index n = fe.size();
  FieldCotangent w;
  w.dt = Eigen::VectorXd::Constant(n, scale);
  w.grad_x = scale * fe.grad_x;
  if (problem.kinetic == Kinetic::wfr) w.value = scale * problem.lambda * fe.value;
  if (problem.entropic) {
    w.laplacian.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) w.laplacian(i) = scale * diffusion_coefficient(problem, t(i));
  }
  return w;
}

/// Exact spatial gradient of the integrand at every sample (d x n).
inline Points integrand_grad_x(const ProblemSpec& problem, const FieldParams& field, const Eigen::VectorXd& t,
                               const Points& x, const Eigen::VectorXd* k = nullptr) {
  Points g = grad_inputs(field, t, x, k, problem.needs_laplacian(),
                         [&](const FieldEvalBatch& fe, const Eigen::VectorXd& tt) {
                           return integrand_cotangent(problem, fe, tt, 1.0);
                         });
  if (problem.potential)
    for (Eigen::Index i = 0; i < x.cols(); ++i)
      g.col(i) += problem.potential_weight * problem.potential->gradient(x.col(i), t(i));
  return g;
}

}  // namespace wlf
