#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wlf/field.hpp"
#include "wlf/hamiltonians.hpp"
#include "wlf/ot.hpp"
#include "wlf/pathmodel.hpp"
#include "wlf/trainer.hpp"

namespace wlf {

struct GradCheckSuite {
  std::string name;
  int trials = 0;
  int failures = 0;
  double max_rel_error = 0;
};

struct GradCheckReport {
  std::vector<GradCheckSuite> suites;
  double tolerance = 1e-4;

  bool ok() const {
    return std::all_of(suites.begin(), suites.end(), [](const auto& s) { return s.failures == 0; });
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& s : suites)
      os << (s.failures == 0 ? "PASS " : "FAIL ") << s.name << " trials=" << s.trials << " failures=" << s.failures
         << " max_rel_error=" << s.max_rel_error << '\n';
    return os.str();
  }
};

struct GradCheckOptions {
  int trials = 100;
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
  double step = 1e-5;
  Eigen::Index batch = 4;
  int w1_max_n = 6;
};

/// |a - b| / max(|a|, |b|, floor): relative error with a guard for tiny values.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

namespace detail {

struct Trial {
  ProblemSpec problem;
  FieldParams field;
  PathParams path;
  PairBatch pairs;
  Points x0, x1;
};

/// A random small field/path/problem combination covering every mode.
inline Trial random_trial(int index, std::mt19937_64& rng, Eigen::Index n) {
  std::uniform_int_distribution<int> dim_pick(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  const int d = dim_pick(rng);
  Trial tr;

  FieldSpec fs;
  fs.input_dim = d;
  fs.hidden_widths = {7, 5};
  fs.activation = index % 3 == 2 ? Activation::softplus : Activation::tanh;
  fs.use_indicator = index % 2 == 1;
  fs.time_embedding = index % 4 >= 2 ? TimeEmbedding::sinusoidal : TimeEmbedding::raw;
  fs.frequencies = 2;
  tr.field = init_params(fs, rng());
  tr.field.theta *= 1.5;

  PathSpec ps;
  ps.dim = d;
  ps.hidden_widths = {6, 6};
  ps.use_indicator = index % 3 == 1;
  ps.activation = index % 5 == 4 ? Activation::softplus : Activation::tanh;
  tr.path = init_path_params(ps, rng());

  switch (index % 5) {
    case 0: break;
    case 1:
      tr.problem.kinetic = Kinetic::wfr;
      tr.problem.lambda = 0.7;
      break;
    case 2: tr.problem.entropic = SigmaSchedule::constant_sigma(0.8); break;
    case 3: {
      Eigen::MatrixXd A = Eigen::MatrixXd::Random(d, d);
      tr.problem.potential = PotentialSpec::quadratic(A * A.transpose(), Eigen::VectorXd::Random(d));
      break;
    }
    case 4:
      tr.problem.potential = PotentialSpec::linear({0.0, 0.4, 1.0}, {Eigen::VectorXd::Random(d), Eigen::VectorXd::Random(d)});
      tr.problem.potential_weight = 1.3;
      break;
  }

  // Times avoid the indicator switch so finite differences never straddle it.
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = u(rng);
    while (std::abs(v - 0.5) < 1e-3 || std::abs(v - 0.4) < 1e-3) v = u(rng);
    t(i) = v;
  }
  tr.pairs.t = t;
  tr.pairs.x_left = Points::NullaryExpr(d, n, [&] { return z(rng); });
  tr.pairs.x_right = Points::NullaryExpr(d, n, [&] { return 1.0 + z(rng); });
  tr.pairs.k.resize(0);
  tr.pairs.t_lo = Eigen::VectorXd::Zero(n);
  tr.pairs.t_hi = Eigen::VectorXd::Ones(n);
  tr.pairs.interval.assign(static_cast<std::size_t>(n), 0);
  tr.x0 = Points::NullaryExpr(d, n, [&] { return z(rng); });
  tr.x1 = Points::NullaryExpr(d, n, [&] { return 2.0 + z(rng); });
  return tr;
}

inline Eigen::VectorXd random_direction(Eigen::Index size, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(size, [&] { return z(rng); });
  return v / v.norm();
}

inline double fd(const std::function<double(double)>& f, double h) { return (f(h) - f(-h)) / (2.0 * h); }

inline void record(GradCheckSuite& s, double err, double tol) {
  ++s.trials;
  if (!(err < tol)) ++s.failures;
  s.max_rel_error = std::max(s.max_rel_error, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
}

inline double aggregate(const FieldEvalBatch& fe, const FieldCotangent& w) {
  double a = w.value.size() ? w.value.dot(fe.value) : 0.0;
  if (w.grad_x.size()) a += (w.grad_x.array() * fe.grad_x.array()).sum();
  if (w.dt.size()) a += w.dt.dot(fe.dt);
  if (w.laplacian.size()) a += w.laplacian.dot(*fe.laplacian);
  return a;
}

inline double mean_integrand(const ProblemSpec& problem, const FieldParams& field, const Eigen::VectorXd& t,
                             const Points& x) {
  const FieldEvalBatch fe = eval_batch(field, t, x, nullptr, Needs{true, problem.needs_laplacian()});
  return integrand_batch(problem, fe, x, t).mean();
}

}  // namespace detail

/// Central finite-difference checks of every hand-derived derivative, plus the
/// assignment solver against exhaustive enumeration.
inline GradCheckReport run_gradient_checks(const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  rep.tolerance = opt.tolerance;
  std::mt19937_64 rng(opt.seed);
  GradCheckSuite s_gx{"field grad_x vs value"}, s_dt{"field dt vs value"}, s_lap{"field laplacian vs grad_x"},
      s_par{"field parameter gradient"}, s_in{"integrand input gradient"}, s_path{"path eta gradient"},
      s_theta{"batch dual theta gradient"}, s_w1{"exact_w1 vs brute force"};
  const double h = opt.step, tol = opt.tolerance;

  for (int trial = 0; trial < opt.trials; ++trial) {
    const auto tr = detail::random_trial(trial, rng, opt.batch);
    const auto& field = tr.field;
    const Eigen::VectorXd& t = tr.pairs.t;
    const Points x = interpolate(tr.path, tr.pairs);
    const Eigen::Index d = x.rows(), n = x.cols();
    const FieldEvalBatch fe = eval_batch(field, t, x, nullptr, Needs{true, true});

    {
      const Points v = detail::random_direction(d * n, rng).reshaped(d, n);
      const double exact = (fe.grad_x.array() * v.array()).sum();
      const double num = detail::fd(
          [&](double e) { return eval_batch(field, t, x + e * v, nullptr, Needs{false, false}).value.sum(); }, h);
      detail::record(s_gx, relative_error(exact, num), tol);
    }
    {
      const double num = detail::fd(
          [&](double e) {
            return eval_batch(field, (t.array() + e).matrix(), x, nullptr, Needs{false, false}).value.sum();
          },
          h);
      detail::record(s_dt, relative_error(fe.dt.sum(), num), tol);
    }
    {
      double num = 0;
      for (Eigen::Index k = 0; k < d; ++k) {
        Points e_k = Points::Zero(d, n);
        e_k.row(k).setOnes();
        num += detail::fd(
            [&](double e) { return eval_batch(field, t, x + e * e_k, nullptr, Needs{true, false}).grad_x.row(k).sum(); },
            h);
      }
      detail::record(s_lap, relative_error(fe.laplacian->sum(), num), tol);
    }
    {
      FieldCotangent w;
      w.value = detail::random_direction(n, rng);
      w.grad_x = detail::random_direction(d * n, rng).reshaped(d, n);
      w.dt = detail::random_direction(n, rng);
      w.laplacian = detail::random_direction(n, rng);
      const Eigen::VectorXd g = grad_params(field, t, x, nullptr, w);
      const Eigen::VectorXd v = detail::random_direction(g.size(), rng);
      const double num = detail::fd(
          [&](double e) {
            FieldParams p = field;
            p.theta += e * v;
            return detail::aggregate(eval_batch(p, t, x, nullptr, Needs{true, true}), w);
          },
          h);
      detail::record(s_par, relative_error(g.dot(v), num), tol);
    }
    {
      const Points g = integrand_grad_x(tr.problem, field, t, x);
      const Points v = detail::random_direction(d * n, rng).reshaped(d, n);
      const double num =
          detail::fd([&](double e) { return detail::mean_integrand(tr.problem, field, t, x + e * v); }, h) *
          static_cast<double>(n);
      detail::record(s_in, relative_error((g.array() * v.array()).sum(), num), tol);
    }
    {
      const Eigen::VectorXd g = path_gradient(tr.problem, field, tr.path, tr.pairs);
      const Eigen::VectorXd v = detail::random_direction(g.size(), rng);
      const double num = detail::fd(
          [&](double e) {
            PathParams p = tr.path;
            p.eta += e * v;
            return detail::mean_integrand(tr.problem, field, t, interpolate(p, tr.pairs));
          },
          h);
      detail::record(s_path, relative_error(g.dot(v), num), tol);
    }
    {
      const StepGradients g = theta_gradient(tr.problem, field, tr.x0, tr.x1, t, x);
      const Eigen::VectorXd v = detail::random_direction(g.theta.size(), rng);
      const double num = detail::fd(
          [&](double e) {
            FieldParams p = field;
            p.theta += e * v;
            const double b1 = eval_batch(p, Eigen::VectorXd::Ones(n), tr.x1, nullptr, Needs{false, false}).value.mean();
            const double b0 = eval_batch(p, Eigen::VectorXd::Zero(n), tr.x0, nullptr, Needs{false, false}).value.mean();
            return b1 - b0 - detail::mean_integrand(tr.problem, p, t, x);
          },
          h);
      detail::record(s_theta, relative_error(g.theta.dot(v), num), tol);
    }
    {
      std::uniform_int_distribution<int> size_pick(1, opt.w1_max_n);
      const int m = size_pick(rng);
      const Points a = Points::Random(2, m), b = Points::Random(2, m);
      const Eigen::MatrixXd c = pairwise_distances(a, b);
      std::vector<int> perm(static_cast<std::size_t>(m));
      std::iota(perm.begin(), perm.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double tot = 0;
        for (int i = 0; i < m; ++i) tot += c(i, perm[static_cast<std::size_t>(i)]);
        best = std::min(best, tot / m);
      } while (std::next_permutation(perm.begin(), perm.end()));
      detail::record(s_w1, relative_error(exact_w1(a, b), best, 1e-12), 1e-10);
    }
  }
  rep.suites = {s_gx, s_dt, s_lap, s_par, s_in, s_path, s_theta, s_w1};
  return rep;
}

}  // namespace wlf
