#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "wlf/dataio.hpp"
#include "wlf/dataset.hpp"
#include "wlf/error.hpp"
#include "wlf/field.hpp"
#include "wlf/hamiltonians.hpp"
#include "wlf/ot.hpp"
#include "wlf/pathmodel.hpp"
#include "wlf/trainer.hpp"

namespace wlf {

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

enum class SimMode { ode, sde, single_step };

inline SimMode sim_mode_from_string(const std::string& s) {
  if (s == "ode") return SimMode::ode;
  if (s == "sde") return SimMode::sde;
  if (s == "single-step" || s == "single_step") return SimMode::single_step;
  throw ConfigError("unknown simulation mode '" + s + "'");
}

inline std::string to_string(SimMode m) {
  switch (m) {
    case SimMode::ode: return "ode";
    case SimMode::sde: return "sde";
    case SimMode::single_step: return "single-step";
  }
  return "?";
}

/// Particle paths; states[k] is the d x n cloud at times[k], log_weights(i, k)
/// the accumulated log-mass of particle i (zero unless the kinetic energy is WFR).
struct TrajectoryBundle {
  std::vector<double> times;
  std::vector<Points> states;
  Eigen::MatrixXd log_weights;
  SimMode mode = SimMode::ode;
  bool diverged = false;
  int diverged_at = -1;  // step index whose state exceeded the bound

  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
  const Points& final_state() const { return states.back(); }

  /// Long-format CSV: particle,step,t,x0..x{d-1},log_weight.
  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    const Eigen::Index d = states.empty() ? 0 : states.front().rows();
    os << "particle,step,t";
    for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i;
    os << ",log_weight\n";
    for (std::size_t k = 0; k < states.size(); ++k)
      for (Eigen::Index p = 0; p < states[k].cols(); ++p) {
        os << p << ',' << k << ',' << times[k];
        for (Eigen::Index i = 0; i < d; ++i) os << ',' << states[k](i, p);
        os << ',' << log_weights(p, static_cast<Eigen::Index>(k)) << '\n';
      }
    return os.str();
  }
};

struct SimulateOptions {
  int steps = 100;
  SimMode mode = SimMode::ode;
  std::uint64_t seed = 0;
  double t0 = 0.0;
  double t1 = 1.0;
  double bound = 1e6;
};

namespace detail {

struct Rates {
  Points velocity;
  Eigen::VectorXd log_mass;
};

inline Rates rates(const ProblemSpec& problem, const FieldParams& field, double t, const Points& x) {
  const FieldEvalBatch fe = eval_batch(field, Eigen::VectorXd::Constant(x.cols(), t), x, nullptr, Needs{true, false});
  return {fe.grad_x, problem.growth_weight() * fe.value};
}

}  // namespace detail

/// Integrates particles through the field: ODE dx = grad s dt (classical RK4),
/// SDE dx = grad s dt + sigma(t) dW (Euler-Maruyama), or the single map
/// x1 = x0 + grad s_{t0}(x0). Under WFR, d(log w)/dt = lambda s_t along the path.
/// A particle leaving the ball of radius `bound` truncates the bundle.
inline TrajectoryBundle simulate(const ProblemSpec& problem, const FieldParams& field, const Points& x0,
                                 const SimulateOptions& opt = {}) {
  problem.validate(static_cast<int>(x0.rows()));
  if (x0.rows() != field.spec.input_dim) throw ContractError("initial cloud dimension does not match the field");
  if (opt.mode == SimMode::sde && !problem.entropic)
    throw ConfigError("SDE simulation requires an entropic problem");
  if (opt.mode == SimMode::ode && problem.entropic)
    throw ConfigError("entropic problems must be simulated with the SDE mode");
  if (opt.steps <= 0) throw ConfigError("simulation needs at least one step");
  if (!(opt.t1 > opt.t0)) throw ConfigError("simulation needs t1 > t0");

  const int steps = opt.mode == SimMode::single_step ? 1 : opt.steps;
  const double h = (opt.t1 - opt.t0) / steps;
  const Eigen::Index n = x0.cols();
  TrajectoryBundle b;
  b.mode = opt.mode;
  b.times.push_back(opt.t0);
  b.states.push_back(x0);
  Eigen::MatrixXd logw = Eigen::MatrixXd::Zero(n, steps + 1);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> z;

  Points x = x0;
  Eigen::VectorXd lw = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < steps; ++k) {
    const double t = opt.t0 + k * h;
    switch (opt.mode) {
      case SimMode::single_step: {
        const auto r = detail::rates(problem, field, t, x);
        x += r.velocity;
        lw += r.log_mass;
        break;
      }
      case SimMode::ode: {
        const auto k1 = detail::rates(problem, field, t, x);
        const auto k2 = detail::rates(problem, field, t + 0.5 * h, x + 0.5 * h * k1.velocity);
        const auto k3 = detail::rates(problem, field, t + 0.5 * h, x + 0.5 * h * k2.velocity);
        const auto k4 = detail::rates(problem, field, t + h, x + h * k3.velocity);
        x += (h / 6.0) * (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity);
        lw += (h / 6.0) * (k1.log_mass + 2.0 * k2.log_mass + 2.0 * k3.log_mass + k4.log_mass);
        break;
      }
      case SimMode::sde: {
        const auto r = detail::rates(problem, field, t, x);
        const double vol = (*problem.entropic)(t) * std::sqrt(h);
        x += h * r.velocity;
        for (Eigen::Index j = 0; j < n; ++j)
          for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) += vol * z(rng);
        lw += h * r.log_mass;
        break;
      }
    }
    const double tn = opt.mode == SimMode::single_step ? opt.t1 : opt.t0 + (k + 1) * h;
    if (!x.allFinite() || x.colwise().norm().maxCoeff() > opt.bound) {
      b.diverged = true;
      b.diverged_at = k + 1;
      break;
    }
    b.times.push_back(tn);
    b.states.push_back(x);
    logw.col(k + 1) = lw;
  }
  b.log_weights = logw.leftCols(static_cast<Eigen::Index>(b.states.size()));
  return b;
}

/// Mean discrete acceleration |x_{k+1} - 2 x_k + x_{k-1}| / dt^2 over particles
/// and interior steps (divided-difference form on nonuniform grids).
inline double straightness(const TrajectoryBundle& b) {
  if (b.states.size() < 3) return 0.0;
  double total = 0;
  std::size_t count = 0;
  for (std::size_t k = 1; k + 1 < b.states.size(); ++k) {
    const double hl = b.times[k] - b.times[k - 1], hr = b.times[k + 1] - b.times[k];
    const Points acc = (2.0 / (hl + hr)) * ((b.states[k + 1] - b.states[k]) / hr - (b.states[k] - b.states[k - 1]) / hl);
    total += acc.colwise().norm().sum();
    count += static_cast<std::size_t>(acc.cols());
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

/// Centered Hamilton-Jacobi residual mean_i |F_i - mean_j F_j| of the integrand
/// F = ds/dt + K* + U over the cloud evaluated at time t.
inline double hj_residual(const ProblemSpec& problem, const FieldParams& field, const Points& cloud, double t) {
  if (cloud.cols() == 0) throw ContractError("hj_residual needs a nonempty cloud");
  const Eigen::VectorXd tt = Eigen::VectorXd::Constant(cloud.cols(), t);
  const FieldEvalBatch fe = eval_batch(field, tt, cloud, nullptr, Needs{true, problem.needs_laplacian()});
  const Eigen::VectorXd F = integrand_batch(problem, fe, cloud, tt);
  return (F.array() - F.mean()).abs().mean();
}

/// One residual per time slice, all on the same cloud.
inline Eigen::VectorXd hj_residual(const ProblemSpec& problem, const FieldParams& field, const Points& cloud,
                                   const std::vector<double>& times) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(times.size()));
  for (std::size_t k = 0; k < times.size(); ++k)
    out(static_cast<Eigen::Index>(k)) = hj_residual(problem, field, cloud, times[k]);
  return out;
}

/// One residual per time slice, each on its own cloud.
inline Eigen::VectorXd hj_residual(const ProblemSpec& problem, const FieldParams& field,
                                   const std::vector<Points>& clouds, const std::vector<double>& times) {
  if (clouds.size() != times.size()) throw ContractError("need one cloud per time slice");
  Eigen::VectorXd out(static_cast<Eigen::Index>(times.size()));
  for (std::size_t k = 0; k < times.size(); ++k)
    out(static_cast<Eigen::Index>(k)) = hj_residual(problem, field, clouds[k], times[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-timepoint-out
// ---------------------------------------------------------------------------

enum class LooPotential { none, mean_accel, mean_accel_held_out };

inline LooPotential loo_potential_from_string(const std::string& s) {
  if (s == "none") return LooPotential::none;
  if (s == "mean_accel") return LooPotential::mean_accel;
  if (s == "mean_accel_held_out") return LooPotential::mean_accel_held_out;
  throw ConfigError("unknown leave-one-out potential mode '" + s + "'");
}

inline std::string to_string(LooPotential p) {
  switch (p) {
    case LooPotential::none: return "none";
    case LooPotential::mean_accel: return "mean_accel";
    case LooPotential::mean_accel_held_out: return "mean_accel_held_out";
  }
  return "?";
}

struct LooConfig {
  std::vector<int> held_out;  // marginal indices; empty selects every interior marginal
  std::vector<std::uint64_t> seeds{0};
  LooPotential potential = LooPotential::none;
  int max_w1_samples = 512;
  int sim_steps = 100;
  bool simulate = true;
  int workers = 1;
};

struct LooRow {
  int held_out = 0;
  double time = 0;
  std::uint64_t seed = 0;
  double w1_path = 0;       // path sampler at the held-out time
  double w1_simulated = 0;  // mu_0 pushed through the learned dynamics (NaN when disabled)
  double w1_baseline = 0;   // independent-coupling interpolation (zero correction)
  double final_dual = 0;
  bool held_out_mean_potential = false;
};

struct LooSummary {
  double mean = 0;
  double std = 0;
};

/// Per-(held-out time, seed) W1 values plus aggregates.
struct EvalTable {
  std::vector<LooRow> rows;
  std::string method;

  static LooSummary summarize(const std::vector<double>& v) {
    LooSummary s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
      double acc = 0;
      for (double x : v) acc += (x - s.mean) * (x - s.mean);
      s.std = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return s;
  }

  /// Per-seed average over left-out marginals, then mean and std across seeds.
  LooSummary over_seeds(double LooRow::*field) const {
    std::vector<std::uint64_t> seeds;
    for (const auto& r : rows)
      if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
    std::vector<double> per_seed;
    for (auto s : seeds) {
      std::vector<double> v;
      for (const auto& r : rows)
        if (r.seed == s) v.push_back(r.*field);
      per_seed.push_back(summarize(v).mean);
    }
    return summarize(per_seed);
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "method,held_out,time,seed,w1_path,w1_simulated,w1_baseline,final_dual,held_out_mean_potential\n";
    for (const auto& r : rows)
      os << method << ',' << r.held_out << ',' << r.time << ',' << r.seed << ',' << r.w1_path << ','
         << r.w1_simulated << ',' << r.w1_baseline << ',' << r.final_dual << ','
         << (r.held_out_mean_potential ? 1 : 0) << '\n';
    return os.str();
  }

  /// Table-style rows: metric, mean, std (over seeds of the per-seed average).
  std::string summary_csv() const {
    std::ostringstream os;
    os.precision(6);
    os << "method,metric,mean,std\n";
    const std::pair<const char*, double LooRow::*> metrics[] = {
        {"w1_path", &LooRow::w1_path}, {"w1_simulated", &LooRow::w1_simulated}, {"w1_baseline", &LooRow::w1_baseline}};
    for (const auto& [name, f] : metrics) {
      const auto s = over_seeds(f);
      os << method << ',' << name << ',' << s.mean << ',' << s.std << '\n';
    }
    return os.str();
  }
};

namespace detail {

inline Points subsample(const Points& x, Eigen::Index m, std::mt19937_64& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.cols()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  Points out(x.rows(), m);
  for (Eigen::Index j = 0; j < m; ++j) out.col(j) = x.col(idx[static_cast<std::size_t>(j)]);
  return out;
}

inline void run_parallel(std::size_t jobs, int workers, const std::function<void(std::size_t)>& body) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(jobs, static_cast<std::size_t>(std::max(1, workers))));
  if (w == 1) {
    for (std::size_t j = 0; j < jobs; ++j) body(j);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < w; ++k)
    pool.emplace_back([&] {
      for (std::size_t j = next++; j < jobs; j = next++) {
        try {
          body(j);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// Retrains on the dataset without each held-out interior marginal and scores
/// the model marginal at the held-out time with exact W1.
inline EvalTable leave_one_out(const MarginalDataset& data, const ProblemSpec& problem, const FieldSpec& field_spec,
                               const PathSpec& path_spec, const TrainConfig& train_cfg, const LooConfig& cfg) {
  data.validate();
  if (data.size() < 3) throw ConfigError("leave-one-out needs at least three marginals");
  std::vector<int> held = cfg.held_out;
  if (held.empty())
    for (int i = 1; i + 1 < static_cast<int>(data.size()); ++i) held.push_back(i);
  for (int i : held)
    if (i <= 0 || i + 1 >= static_cast<int>(data.size()))
      throw ConfigError("held-out marginal " + std::to_string(i) + " is not interior; endpoints cannot be left out");
  if (cfg.seeds.empty()) throw ConfigError("leave-one-out needs at least one seed");
  if (cfg.max_w1_samples <= 0) throw ConfigError("max_w1_samples must be positive");

  struct Job {
    int held_out;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (int i : held)
    for (auto s : cfg.seeds) jobs.push_back({i, s});

  EvalTable table;
  table.method = problem.kinetic == Kinetic::wfr ? "WLF-UOT" : problem.entropic ? "WLF-SB" : "WLF-OT";
  if (cfg.potential != LooPotential::none) table.method += "+potential";
  table.rows.resize(jobs.size());

  detail::run_parallel(jobs.size(), cfg.workers, [&](std::size_t j) {
    const Job job = jobs[j];
    const auto idx = static_cast<std::size_t>(job.held_out);
    const MarginalDataset reduced = data.without(idx);
    ProblemSpec pb = problem;
    if (cfg.potential != LooPotential::none) {
      const bool leak = cfg.potential == LooPotential::mean_accel_held_out;
      PotentialSpec pot = build_mean_accel_potential(leak ? data : reduced);
      pot.uses_held_out_mean = leak;
      pb.potential = std::move(pot);
    }
    TrainConfig tc = train_cfg;
    tc.seed = job.seed;
    FieldSpec fs = field_spec;
    fs.input_dim = data.dim;
    PathSpec ps = path_spec;
    ps.dim = data.dim;
    const auto trained = train(pb, reduced, init_params(fs, job.seed * 2 + 1), init_path_params(ps, job.seed * 2 + 2), tc);

    LooRow row;
    row.held_out = job.held_out;
    row.time = data.times[idx];
    row.seed = job.seed;
    row.held_out_mean_potential = pb.potential && pb.potential->uses_held_out_mean;
    row.final_dual = estimate_dual(pb, trained.field, trained.path, reduced, tc.eval_samples, job.seed).dual_estimate;

    std::mt19937_64 rng(job.seed ^ (0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(job.held_out + 1)));
    const Points& truth_all = data.snapshots[idx];
    const Eigen::Index m = std::min<Eigen::Index>(truth_all.cols(), cfg.max_w1_samples);
    const Points truth = detail::subsample(truth_all, m, rng);
    row.w1_path = exact_w1(sample_at_time(trained.path, reduced, row.time, m, rng), truth);
    row.w1_baseline = exact_w1(sample_at_time(PathParams::zeros(ps), reduced, row.time, m, rng), truth);
    row.w1_simulated = std::numeric_limits<double>::quiet_NaN();
    if (cfg.simulate) {
      SimulateOptions so;
      so.mode = pb.entropic ? SimMode::sde : SimMode::ode;
      so.steps = std::max(1, static_cast<int>(std::ceil(cfg.sim_steps * row.time)));
      so.t1 = row.time;
      so.seed = job.seed;
      const Eigen::Index m0 = std::min<Eigen::Index>(m, reduced.snapshots.front().cols());
      const auto bundle = simulate(pb, trained.field, detail::subsample(reduced.snapshots.front(), m0, rng), so);
      if (!bundle.diverged) {
        const Eigen::Index mm = std::min(m0, m);
        row.w1_simulated = exact_w1(bundle.final_state().leftCols(mm), truth.leftCols(mm));
      }
    }
    table.rows[j] = row;
  });
  return table;
}

}  // namespace wlf
