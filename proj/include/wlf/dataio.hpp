#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "wlf/dataset.hpp"
#include "wlf/error.hpp"
#include "wlf/hamiltonians.hpp"

namespace wlf {

// ---------------------------------------------------------------------------
// CSV snapshots
// ---------------------------------------------------------------------------

/// Reads one snapshot: rows are samples, columns coordinates, optional single
/// '#'-prefixed header line. Returns a d x n matrix.
inline Points read_snapshot_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && !line.empty() && line.front() == '#') {
      first = false;
      continue;
    }
    first = false;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw LoadError(file.string() + ":" + std::to_string(lineno) + ": cannot parse '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw LoadError(file.string() + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw LoadError(file.string() + " contains no samples");
  Points x(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < rows[j].size(); ++i)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[j][i];
  return x;
}

inline void write_points_csv(const std::filesystem::path& file, const Points& x, const std::string& header = {}) {
  std::ofstream out(file);
  if (!out) throw LoadError("cannot write " + file.string());
  out << std::setprecision(17);
  if (!header.empty()) out << '#' << header << '\n';
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) out << (i ? "," : "") << x(i, j);
    out << '\n';
  }
}

/// Time encoded in a file name: the first number in the stem ("day_2.csv" -> 2).
inline double time_from_filename(const std::filesystem::path& file) {
  static const std::regex number(R"([-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)");
  const std::string stem = file.stem().string();
  std::smatch m;
  if (!std::regex_search(stem, m, number)) throw LoadError("no time encoded in file name " + file.string());
  return std::stod(m.str());
}

/// One CSV per timepoint; times are read from the file names and rescaled
/// affinely to [0, 1].
inline MarginalDataset load_marginals(std::vector<std::filesystem::path> files, std::string name = "data") {
  if (files.size() < 2) throw LoadError("need at least two snapshot files, found " + std::to_string(files.size()));
  std::vector<std::pair<double, std::filesystem::path>> timed;
  for (const auto& f : files) timed.emplace_back(time_from_filename(f), f);
  std::sort(timed.begin(), timed.end());
  for (std::size_t i = 1; i < timed.size(); ++i)
    if (!(timed[i].first > timed[i - 1].first))
      throw LoadError("non-monotone snapshot times: " + timed[i - 1].second.string() + " and " +
                      timed[i].second.string());
  MarginalDataset ds;
  ds.name = std::move(name);
  std::vector<double> raw;
  for (const auto& [t, f] : timed) {
    Points x = read_snapshot_csv(f);
    if (!ds.snapshots.empty() && x.rows() != ds.dim)
      throw LoadError("dimension mismatch: " + timed.front().second.string() + " has d=" + std::to_string(ds.dim) +
                      ", " + f.string() + " has d=" + std::to_string(x.rows()));
    ds.dim = static_cast<int>(x.rows());
    ds.snapshots.push_back(std::move(x));
    raw.push_back(t);
  }
  ds.times = rescale_times(raw);
  ds.validate();
  return ds;
}

/// Every file with the given extension in a directory.
inline MarginalDataset load_marginals(const std::filesystem::path& dir, const std::string& extension = ".csv") {
  if (!std::filesystem::is_directory(dir)) throw LoadError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == extension) files.push_back(e.path());
  return load_marginals(std::move(files), dir.filename().string());
}

inline void save_marginals(const MarginalDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::ostringstream name;
    name << "t" << std::setprecision(10) << ds.times[i] << ".csv";
    write_points_csv(dir / name.str(), ds.snapshots[i], "x");
  }
}

// ---------------------------------------------------------------------------
// Synthetic benchmarks
// ---------------------------------------------------------------------------

enum class SynthKind { gaussian_shift, gaussian_drift_3pt, bimodal_split, mass_change, parabola_potential };

inline SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "gaussian_shift") return SynthKind::gaussian_shift;
  if (s == "gaussian_drift_3pt") return SynthKind::gaussian_drift_3pt;
  if (s == "bimodal_split") return SynthKind::bimodal_split;
  if (s == "mass_change") return SynthKind::mass_change;
  if (s == "parabola_potential") return SynthKind::parabola_potential;
  throw ConfigError("unknown synthetic dataset kind '" + s + "'");
}

inline std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::gaussian_shift: return "gaussian_shift";
    case SynthKind::gaussian_drift_3pt: return "gaussian_drift_3pt";
    case SynthKind::bimodal_split: return "bimodal_split";
    case SynthKind::mass_change: return "mass_change";
    case SynthKind::parabola_potential: return "parabola_potential";
  }
  return "?";
}

/// Knobs of the synthetic generators; empty vectors select per-kind defaults.
struct SynthParams {
  std::vector<double> shift;  // displacement m1 - m0
  std::vector<double> bend;   // midpoint offset (gaussian_drift_3pt)
  std::vector<double> accel;  // constant acceleration (parabola_potential)
  std::vector<double> times;  // snapshot times (parabola_potential)
  double scale = 1.0;         // per-coordinate standard deviation
  double gap = 4.0;           // cluster separation (bimodal_split, mass_change)
  double weight = 0.8;        // mass_change: initial weight of the first component

  bool operator==(const SynthParams&) const = default;
};

namespace detail {

inline Eigen::VectorXd vec_or(const std::vector<double>& v, int d, Eigen::VectorXd fallback) {
  if (v.empty()) return fallback;
  if (static_cast<int>(v.size()) != d) throw ConfigError("synthetic parameter vector has wrong dimension");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), d);
}

inline Points gaussian_cloud(const Eigen::VectorXd& mean, double scale, Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Points x(mean.size(), n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < mean.size(); ++i) x(i, j) = mean(i) + scale * z(rng);
  return x;
}

inline Points mixture_cloud(const Eigen::VectorXd& c0, const Eigen::VectorXd& c1, double w0, double scale,
                            Eigen::Index n, std::mt19937_64& rng) {
  const auto n0 = static_cast<Eigen::Index>(std::llround(w0 * static_cast<double>(n)));
  Points x(c0.size(), n);
  x.leftCols(n0) = gaussian_cloud(c0, scale, n0, rng);
  x.rightCols(n - n0) = gaussian_cloud(c1, scale, n - n0, rng);
  return x;
}

}  // namespace detail

/// Center of the parabola x(t) = m0 + (m1 - m0) t + a (t^2 - t) / 2.
inline Eigen::VectorXd parabola_center(const Eigen::VectorXd& m0, const Eigen::VectorXd& m1, const Eigen::VectorXd& a,
                                       double t) {
  return m0 + (m1 - m0) * t + a * (0.5 * (t * t - t));
}

inline MarginalDataset synth(SynthKind kind, std::uint64_t seed, Eigen::Index n, int d, const SynthParams& p = {}) {
  if (d <= 0 || n <= 0) throw ConfigError("synthetic dataset needs positive n and d");
  std::mt19937_64 rng(seed);
  MarginalDataset ds;
  ds.dim = d;
  ds.name = to_string(kind);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd e0 = zero;
  e0(0) = 1.0;
  Eigen::VectorXd e_last = zero;
  e_last(d - 1) = 1.0;
  const Eigen::VectorXd shift = detail::vec_or(p.shift, d, 3.0 * e0);

  switch (kind) {
    case SynthKind::gaussian_shift:
      ds.times = {0.0, 1.0};
      ds.snapshots = {detail::gaussian_cloud(zero, p.scale, n, rng), detail::gaussian_cloud(shift, p.scale, n, rng)};
      break;
    case SynthKind::gaussian_drift_3pt: {
      const Eigen::VectorXd bend = detail::vec_or(p.bend, d, 1.5 * e_last);
      ds.times = {0.0, 0.5, 1.0};
      ds.snapshots = {detail::gaussian_cloud(zero, p.scale, n, rng),
                      detail::gaussian_cloud(0.5 * shift + bend, p.scale, n, rng),
                      detail::gaussian_cloud(shift, p.scale, n, rng)};
      break;
    }
    case SynthKind::bimodal_split: {
      const Eigen::VectorXd axis = d > 1 ? e_last : e0;
      const Eigen::VectorXd end = p.shift.empty() ? zero : shift;
      ds.times = {0.0, 1.0};
      ds.snapshots = {detail::gaussian_cloud(zero, p.scale, n, rng),
                      detail::mixture_cloud(end + 0.5 * p.gap * axis, end - 0.5 * p.gap * axis, 0.5, p.scale, n, rng)};
      break;
    }
    case SynthKind::mass_change: {
      const Eigen::VectorXd c0 = -0.5 * p.gap * e0, c1 = 0.5 * p.gap * e0;
      ds.times = {0.0, 1.0};
      ds.snapshots = {detail::mixture_cloud(c0, c1, p.weight, p.scale, n, rng),
                      detail::mixture_cloud(c0, c1, 1.0 - p.weight, p.scale, n, rng)};
      break;
    }
    case SynthKind::parabola_potential: {
      const Eigen::VectorXd a = detail::vec_or(p.accel, d, 4.0 * e_last);
      ds.times = p.times.empty() ? std::vector<double>{0.0, 0.5, 1.0} : p.times;
      for (double t : ds.times) {
        const Eigen::VectorXd c = parabola_center(zero, shift, a, t);
        Points x = detail::gaussian_cloud(zero, p.scale, n, rng);
        x.colwise() -= Eigen::VectorXd(x.rowwise().mean());  // sample mean lands exactly on the curve
        x.colwise() += c;
        ds.snapshots.push_back(std::move(x));
      }
      break;
    }
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Mean-acceleration potential
// ---------------------------------------------------------------------------

/// Three-point divided second difference of the snapshot means at every
/// interior marginal; interval [t_j, t_{j+1}] gets the average of the
/// accelerations available at its two ends (outer intervals inherit the
/// nearest interior value). V_t(x) = -<x, a_t>.
inline PotentialSpec build_mean_accel_potential(const MarginalDataset& ds) {
  if (ds.size() < 3) throw ConfigError("mean-acceleration potential needs at least three marginals");
  const std::size_t M = ds.size();
  std::vector<Eigen::VectorXd> mean(M);
  for (std::size_t i = 0; i < M; ++i) mean[i] = ds.mean(i);
  std::vector<Eigen::VectorXd> acc(M);
  for (std::size_t i = 1; i + 1 < M; ++i) {
    const double hl = ds.times[i] - ds.times[i - 1], hr = ds.times[i + 1] - ds.times[i];
    acc[i] = 2.0 / (hl + hr) * ((mean[i + 1] - mean[i]) / hr - (mean[i] - mean[i - 1]) / hl);
  }
  std::vector<Eigen::VectorXd> per_interval;
  for (std::size_t j = 0; j + 1 < M; ++j) {
    const bool left_interior = j >= 1, right_interior = j + 2 <= M - 1;
    if (left_interior && right_interior)
      per_interval.push_back(0.5 * (acc[j] + acc[j + 1]));
    else if (left_interior)
      per_interval.push_back(acc[j]);
    else
      per_interval.push_back(acc[j + 1]);
  }
  return PotentialSpec::linear(ds.times, std::move(per_interval));
}

}  // namespace wlf
