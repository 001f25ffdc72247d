#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "wlf/error.hpp"
#include "wlf/mlp.hpp"

namespace wlf {

// ---------------------------------------------------------------------------
// Exact assignment
// ---------------------------------------------------------------------------

/// Minimum-cost perfect matching of a square cost matrix (Hungarian method with
/// potentials, O(n^3)). Returns col[i], the column matched to row i. Rows are
/// inserted in index order, which makes ties resolve deterministically.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw ContractError("assignment needs a square cost matrix");
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n);
  for (int j = 1; j <= n; ++j) col[p[j] - 1] = j - 1;
  return col;
}

inline Eigen::MatrixXd pairwise_distances(const Points& a, const Points& b) {
  Eigen::MatrixXd c(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i) c(i, j) = (a.col(i) - b.col(j)).norm();
  return c;
}

/// Empirical W1 between equal-size, uniformly weighted clouds (d x n each):
/// the mean matched Euclidean distance of the optimal assignment.
inline double exact_w1(const Points& a, const Points& b) {
  if (a.cols() != b.cols()) throw ContractError("exact_w1 needs equal sample counts; subsample first");
  if (a.rows() != b.rows()) throw ContractError("exact_w1 needs equal dimensions");
  if (a.cols() > 4096) throw ContractError("exact_w1 supports at most 4096 samples");
  if (a.cols() == 0) return 0.0;
  const Eigen::MatrixXd c = pairwise_distances(a, b);
  const auto col = solve_assignment(c);
  double total = 0;
  for (std::size_t i = 0; i < col.size(); ++i) total += c(static_cast<Eigen::Index>(i), col[i]);
  return total / static_cast<double>(col.size());
}

// ---------------------------------------------------------------------------
// Entropic OT
// ---------------------------------------------------------------------------

struct SinkhornResult {
  Eigen::MatrixXd coupling;
  double cost = 0;         // <P, C>
  double regularized = 0;  // <P, C> + eps KL(P | a b^T)
  double row_error = 0;    // ||P 1 - a||_1
  double col_error = 0;    // ||P^T 1 - b||_1
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

/// Log-domain Sinkhorn for weights a (rows) and b (columns) with cost C.
/// Stops once the row marginal error drops below `tol`; a run that exhausts
/// `max_iters` returns the partial coupling with converged = false.
inline SinkhornResult sinkhorn(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& C,
                               double eps, int max_iters = 10000, double tol = 1e-9) {
  if (!(eps > 0)) throw ContractError("sinkhorn needs eps > 0");
  if (C.rows() != a.size() || C.cols() != b.size()) throw ContractError("sinkhorn cost shape mismatch");
  if ((a.array() < 0).any() || (b.array() < 0).any()) throw ContractError("sinkhorn weights must be nonnegative");
  const Eigen::Index n = a.size(), m = b.size();
  const Eigen::ArrayXd la = a.array().log(), lb = b.array().log();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd buf;
  SinkhornResult r;
  auto log_coupling = [&](Eigen::Index i, Eigen::Index j) { return (f(i) + g(j) - C(i, j)) / eps; };
  for (r.iterations = 1; r.iterations <= max_iters; ++r.iterations) {
    buf.resize(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isfinite(la(i))) {
        f(i) = -std::numeric_limits<double>::infinity();
        continue;
      }
      buf = (g - C.row(i).transpose()) / eps;
      f(i) = eps * (la(i) - detail::log_sum_exp(buf));
    }
    buf.resize(n);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!std::isfinite(lb(j))) {
        g(j) = -std::numeric_limits<double>::infinity();
        continue;
      }
      buf = (f - C.col(j)) / eps;
      g(j) = eps * (lb(j) - detail::log_sum_exp(buf));
    }
    double err = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double row = 0;
      for (Eigen::Index j = 0; j < m; ++j) row += std::exp(log_coupling(i, j));
      err += std::abs(row - a(i));
    }
    if (err < tol) {
      r.converged = true;
      break;
    }
  }
  r.iterations = std::min(r.iterations, max_iters);
  r.coupling.resize(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) r.coupling(i, j) = std::exp(log_coupling(i, j));
  r.cost = (r.coupling.array() * C.array()).sum();
  double kl = 0;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = r.coupling(i, j);
      if (p > 0) kl += p * std::log(p / (a(i) * b(j)));
    }
  r.regularized = r.cost + eps * kl;
  r.row_error = (r.coupling.rowwise().sum() - a).lpNorm<1>();
  r.col_error = (r.coupling.colwise().sum().transpose() - b).lpNorm<1>();
  return r;
}

// ---------------------------------------------------------------------------
// Gaussian closed form
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& s, const char* what) {
  if (s.rows() != s.cols()) throw ContractError(std::string(what) + " is not square");
  if (!s.isApprox(s.transpose(), 1e-10)) throw ContractError(std::string(what) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.eigenvalues().minCoeff() <= 0) throw ContractError(std::string(what) + " is not positive definite");
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Squared Bures-Wasserstein distance between N(m0, S0) and N(m1, S1).
inline double gaussian_w2(const Eigen::VectorXd& m0, const Eigen::MatrixXd& s0, const Eigen::VectorXd& m1,
                          const Eigen::MatrixXd& s1) {
  if (m0.size() != m1.size() || s0.rows() != m0.size() || s1.rows() != m1.size())
    throw ContractError("gaussian_w2 dimension mismatch");
  const Eigen::MatrixXd r0 = detail::spd_sqrt(s0, "covariance 0");
  detail::spd_sqrt(s1, "covariance 1");
  const Eigen::MatrixXd mid = r0 * s1 * r0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (mid + mid.transpose()));
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (m0 - m1).squaredNorm() + s0.trace() + s1.trace() - 2.0 * cross;
}

// ---------------------------------------------------------------------------
// One-dimensional grid oracles
// ---------------------------------------------------------------------------

/// Trapezoid quadrature weights of a sorted grid.
inline Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid) {
  const Eigen::Index n = grid.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = grid(i + 1) - grid(i);
    if (!(h > 0)) throw ContractError("grid must be strictly increasing");
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w;
}

inline Eigen::VectorXd normal_density(const Eigen::VectorXd& grid, double mean, double sd) {
  const double c = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
  return ((grid.array() - mean).square() / (-2.0 * sd * sd)).exp() * c;
}

struct GridMarginal {
  Eigen::VectorXd grid;
  Eigen::VectorXd density;
  double mass = 1;      // trapezoid integral of the density
  double leakage = 0;   // 1 - mass
  bool sinkhorn_converged = true;
  std::string warning;  // non-empty when the grid is too coarse or Sinkhorn stalled

  double mean() const {
    const Eigen::VectorXd w = trapezoid_weights(grid);
    return (w.array() * density.array() * grid.array()).sum() / mass;
  }
  double variance() const {
    const Eigen::VectorXd w = trapezoid_weights(grid);
    const double m = mean();
    return (w.array() * density.array() * (grid.array() - m).square()).sum() / mass;
  }
};

/// Entropic interpolation between two densities on a 1-D grid. The static
/// coupling solves entropic OT with cost (x-y)^2/2 and eps = sigma^2; the
/// time-t marginal mixes Brownian bridges N((1-t)x + t y, sigma^2 t(1-t)) under it.
inline GridMarginal sb_grid_oracle(const Eigen::VectorXd& grid, const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1,
                                   double sigma, double t, int max_iters = 20000) {
  if (grid.size() < 2 || mu0.size() != grid.size() || mu1.size() != grid.size())
    throw ContractError("sb_grid_oracle needs densities on the grid");
  if (!(sigma > 0)) throw ContractError("sb_grid_oracle needs sigma > 0");
  if (t < 0 || t > 1) throw ContractError("sb_grid_oracle time must lie in [0, 1]");
  const Eigen::VectorXd w = trapezoid_weights(grid);
  GridMarginal out;
  out.grid = grid;
  auto finish = [&](Eigen::VectorXd density) {
    out.density = std::move(density);
    out.mass = w.dot(out.density);
    out.leakage = 1.0 - out.mass;
    if (std::abs(out.leakage) > 1e-3) out.warning = "grid too coarse: mass leakage " + std::to_string(out.leakage);
    if (!out.sinkhorn_converged) out.warning += (out.warning.empty() ? "" : "; ") + std::string("sinkhorn did not converge");
    return out;
  };
  const double m0 = w.dot(mu0), m1 = w.dot(mu1);
  if (t == 0.0) return finish(mu0 / m0);
  if (t == 1.0) return finish(mu1 / m1);

  const Eigen::VectorXd a = (w.array() * mu0.array()).matrix() / m0;
  const Eigen::VectorXd b = (w.array() * mu1.array()).matrix() / m1;
  const Eigen::Index n = grid.size();
  Eigen::MatrixXd C(n, n);
  for (Eigen::Index j = 0; j < n; ++j) C.col(j) = 0.5 * (grid.array() - grid(j)).square().matrix();
  const SinkhornResult sk = sinkhorn(a, b, C, sigma * sigma, max_iters, 1e-10);
  out.sinkhorn_converged = sk.converged;

  const double sd = sigma * std::sqrt(t * (1.0 - t));
  const double cutoff = 1e-12 * sk.coupling.maxCoeff();
  const double norm = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
  Eigen::VectorXd density = Eigen::VectorXd::Zero(n);
  const double* g = grid.data();
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sk.coupling(i, j);
      if (p < cutoff) continue;
      const double mean = (1.0 - t) * grid(i) + t * grid(j);
      const auto lo = std::lower_bound(g, g + n, mean - 10.0 * sd) - g;
      const auto hi = std::upper_bound(g, g + n, mean + 10.0 * sd) - g;
      for (auto k = lo; k < hi; ++k) {
        const double z = (grid(k) - mean) / sd;
        density(k) += p * norm * std::exp(-0.5 * z * z);
      }
    }
  return finish(std::move(density));
}

/// W1 between an empirical sample and a density on a sorted grid:
/// the integral of |F_emp - F| with F linear between grid nodes, computed exactly.
inline double w1_samples_vs_density_1d(std::vector<double> samples, const Eigen::VectorXd& grid,
                                       const Eigen::VectorXd& density) {
  if (samples.empty()) throw ContractError("need at least one sample");
  if (grid.size() != density.size() || grid.size() < 2) throw ContractError("density must live on the grid");
  std::sort(samples.begin(), samples.end());
  const Eigen::Index n = grid.size();
  Eigen::VectorXd cdf(n);
  cdf(0) = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    cdf(i) = cdf(i - 1) + 0.5 * (grid(i) - grid(i - 1)) * (density(i) + density(i - 1));
  cdf /= cdf(n - 1);
  auto F = [&](double x) {
    if (x <= grid(0)) return 0.0;
    if (x >= grid(n - 1)) return 1.0;
    const auto k = std::upper_bound(grid.data(), grid.data() + n, x) - grid.data();
    const double u = (x - grid(k - 1)) / (grid(k) - grid(k - 1));
    return cdf(k - 1) + u * (cdf(k) - cdf(k - 1));
  };
  std::vector<double> pts(grid.data(), grid.data() + n);
  pts.insert(pts.end(), samples.begin(), samples.end());
  std::sort(pts.begin(), pts.end());
  const double m = static_cast<double>(samples.size());
  double total = 0;
  std::size_t below = 0;
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    const double x0 = pts[s], x1 = pts[s + 1], h = x1 - x0;
    while (below < samples.size() && samples[below] <= x0) ++below;
    if (h <= 0) continue;
    const double c = static_cast<double>(below) / m;
    const double e0 = F(x0) - c, e1 = F(x1) - c;
    if (e0 * e1 >= 0)
      total += 0.5 * h * (std::abs(e0) + std::abs(e1));
    else
      total += 0.5 * h * (e0 * e0 + e1 * e1) / (std::abs(e0) + std::abs(e1));
  }
  return total;
}

}  // namespace wlf
