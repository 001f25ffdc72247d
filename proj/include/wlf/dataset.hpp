#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "wlf/error.hpp"
#include "wlf/mlp.hpp"

namespace wlf {

/// Ordered marginal snapshots mu_{t_i}; snapshot i is a d x n_i matrix.
struct MarginalDataset {
  std::vector<double> times;
  std::vector<Points> snapshots;
  int dim = 0;
  std::string name;

  std::size_t size() const { return snapshots.size(); }

  void validate() const {
    if (snapshots.size() < 2) throw ConfigError("dataset '" + name + "' needs at least two marginals");
    if (times.size() != snapshots.size()) throw ConfigError("dataset times and snapshots differ in count");
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
      if (snapshots[i].rows() != dim)
        throw ConfigError("dataset '" + name + "': snapshot " + std::to_string(i) + " has dimension " +
                          std::to_string(snapshots[i].rows()) + ", expected " + std::to_string(dim));
      if (snapshots[i].cols() == 0) throw ConfigError("dataset snapshot " + std::to_string(i) + " is empty");
      if (!snapshots[i].allFinite()) throw ConfigError("dataset snapshot " + std::to_string(i) + " has non-finite entries");
      if (i > 0 && !(times[i] > times[i - 1])) throw ConfigError("dataset times must be strictly increasing");
    }
    if (times.front() != 0.0 || times.back() != 1.0) throw ConfigError("dataset times must span [0, 1]");
  }

  Eigen::VectorXd mean(std::size_t i) const { return snapshots[i].rowwise().mean(); }

  /// Copy without marginal `i` (times keep their global values).
  MarginalDataset without(std::size_t i) const {
    MarginalDataset out = *this;
    out.times.erase(out.times.begin() + static_cast<long>(i));
    out.snapshots.erase(out.snapshots.begin() + static_cast<long>(i));
    return out;
  }
};

/// Rescales strictly increasing times affinely onto [0, 1].
inline std::vector<double> rescale_times(const std::vector<double>& raw) {
  if (raw.size() < 2) throw ConfigError("need at least two times to rescale");
  const double lo = raw.front(), hi = raw.back();
  if (!(hi > lo)) throw ConfigError("times must be strictly increasing");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / (hi - lo);
  out.front() = 0.0;
  out.back() = 1.0;
  return out;
}

}  // namespace wlf
