#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wlf/dataio.hpp"
#include "wlf/field.hpp"
#include "wlf/hamiltonians.hpp"
#include "wlf/pathmodel.hpp"
#include "wlf/trainer.hpp"
#include "wlf/transport_eval.hpp"

extern char** environ;

namespace wlf {

using json = nlohmann::json;

/// Where the marginals come from: a synthetic generator or a CSV directory.
struct DataConfig {
  std::string kind = "synth";  // synth | csv
  std::string generator = "gaussian_shift";
  std::uint64_t seed = 0;
  long n = 10000;
  int dim = 2;
  SynthParams params;
  std::string path;
};

/// Potential resolved against the dataset at run time.
struct MeanAccelConfig {
  bool use_held_out_mean = false;
};

struct RunConfig {
  std::string name = "run";
  ProblemSpec problem;
  std::optional<MeanAccelConfig> mean_accel;
  FieldSpec field;
  PathSpec path;
  TrainConfig train;
  DataConfig data;
  LooConfig loo;
  std::string output_dir = "runs/run";
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + where + "." + it.key() + "'");
  }
}

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing required key '" + where + "." + key + "'");
  return j.at(key);
}

template <class T>
T as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + where + "': " + e.what());
  }
}

template <class T>
void opt(const json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key) && !j.at(key).is_null()) out = as<T>(j.at(key), where + "." + key);
}

inline Eigen::VectorXd to_vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); }
inline std::vector<double> from_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline SigmaSchedule parse_sigma(const json& j) {
  const std::string w = "problem.entropic";
  check_keys(j, {"kind", "sigma", "breakpoints", "values", "sigma0", "sigma1"}, w);
  SigmaSchedule s;
  const auto kind = as<std::string>(require(j, "kind", w), w + ".kind");
  if (kind == "constant") {
    s.kind = SigmaSchedule::Kind::constant;
    s.sigma = as<double>(require(j, "sigma", w), w + ".sigma");
  } else if (kind == "piecewise_constant") {
    s.kind = SigmaSchedule::Kind::piecewise_constant;
    s.breakpoints = as<std::vector<double>>(require(j, "breakpoints", w), w + ".breakpoints");
    s.values = as<std::vector<double>>(require(j, "values", w), w + ".values");
  } else if (kind == "affine") {
    s.kind = SigmaSchedule::Kind::affine;
    s.sigma0 = as<double>(require(j, "sigma0", w), w + ".sigma0");
    s.sigma1 = as<double>(require(j, "sigma1", w), w + ".sigma1");
  } else {
    throw ConfigError("unknown sigma schedule '" + kind + "'");
  }
  return s;
}

inline json dump_sigma(const SigmaSchedule& s) {
  switch (s.kind) {
    case SigmaSchedule::Kind::constant: return {{"kind", "constant"}, {"sigma", s.sigma}};
    case SigmaSchedule::Kind::piecewise_constant:
      return {{"kind", "piecewise_constant"}, {"breakpoints", s.breakpoints}, {"values", s.values}};
    case SigmaSchedule::Kind::affine: return {{"kind", "affine"}, {"sigma0", s.sigma0}, {"sigma1", s.sigma1}};
  }
  return nullptr;
}

inline void parse_potential(const json& j, RunConfig& c) {
  const std::string w = "problem.potential";
  check_keys(j, {"kind", "times", "accel", "Q", "b", "use_held_out_mean"}, w);
  const auto kind = as<std::string>(require(j, "kind", w), w + ".kind");
  if (kind == "linear_per_interval") {
    std::vector<Eigen::VectorXd> accel;
    for (const auto& a : as<std::vector<std::vector<double>>>(require(j, "accel", w), w + ".accel")) accel.push_back(to_vec(a));
    c.problem.potential = PotentialSpec::linear(as<std::vector<double>>(require(j, "times", w), w + ".times"), std::move(accel));
  } else if (kind == "analytic_quadratic") {
    const auto rows = as<std::vector<std::vector<double>>>(require(j, "Q", w), w + ".Q");
    Eigen::MatrixXd Q(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw ConfigError(w + ".Q must be square");
      for (std::size_t k = 0; k < rows.size(); ++k) Q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
    }
    c.problem.potential = PotentialSpec::quadratic(Q, to_vec(as<std::vector<double>>(require(j, "b", w), w + ".b")));
  } else if (kind == "mean_accel") {
    MeanAccelConfig m;
    opt(j, "use_held_out_mean", m.use_held_out_mean, w);
    c.mean_accel = m;
  } else {
    throw ConfigError("unknown potential kind '" + kind + "'");
  }
}

inline json dump_potential(const RunConfig& c) {
  if (c.mean_accel) return {{"kind", "mean_accel"}, {"use_held_out_mean", c.mean_accel->use_held_out_mean}};
  if (!c.problem.potential) return nullptr;
  const auto& p = *c.problem.potential;
  switch (p.kind) {
    case PotentialSpec::Kind::linear_per_interval: {
      json accel = json::array();
      for (const auto& a : p.accel) accel.push_back(from_vec(a));
      return {{"kind", "linear_per_interval"}, {"times", p.times}, {"accel", accel}};
    }
    case PotentialSpec::Kind::analytic_quadratic: {
      json Q = json::array();
      for (Eigen::Index r = 0; r < p.Q.rows(); ++r) Q.push_back(from_vec(p.Q.row(r).transpose()));
      return {{"kind", "analytic_quadratic"}, {"Q", Q}, {"b", from_vec(p.b)}};
    }
    case PotentialSpec::Kind::callback: throw ConfigError("callback potentials cannot be serialized");
  }
  return nullptr;
}

inline TimeSampling time_sampling_from_string(const std::string& s) {
  if (s == "uniform") return TimeSampling::uniform;
  if (s == "stratified") return TimeSampling::stratified;
  throw ConfigError("unknown time sampling '" + s + "'");
}

}  // namespace detail

/// Parses and validates a run configuration; unknown keys are rejected.
inline RunConfig config_from_json(const json& j) {
  using namespace detail;
  check_keys(j, {"name", "problem", "field", "path", "train", "data", "eval", "output_dir"}, "config");
  RunConfig c;
  opt(j, "name", c.name, "config");
  opt(j, "output_dir", c.output_dir, "config");

  {
    const json& p = require(j, "problem", "config");
    const std::string w = "problem";
    check_keys(p, {"kinetic", "lambda", "entropic", "potential", "potential_weight", "notes"}, w);
    const auto kinetic = as<std::string>(require(p, "kinetic", w), w + ".kinetic");
    if (kinetic == "w2")
      c.problem.kinetic = Kinetic::w2;
    else if (kinetic == "wfr")
      c.problem.kinetic = Kinetic::wfr;
    else
      throw ConfigError("unknown kinetic energy '" + kinetic + "'");
    opt(p, "lambda", c.problem.lambda, w);
    opt(p, "potential_weight", c.problem.potential_weight, w);
    opt(p, "notes", c.problem.notes, w);
    if (p.contains("entropic") && !p.at("entropic").is_null()) c.problem.entropic = parse_sigma(p.at("entropic"));
    if (p.contains("potential") && !p.at("potential").is_null()) parse_potential(p.at("potential"), c);
  }

  if (j.contains("field")) {
    const json& f = j.at("field");
    const std::string w = "field";
    check_keys(f, {"hidden_widths", "activation", "use_indicator", "time_embedding", "frequencies"}, w);
    opt(f, "hidden_widths", c.field.hidden_widths, w);
    opt(f, "use_indicator", c.field.use_indicator, w);
    opt(f, "frequencies", c.field.frequencies, w);
    if (f.contains("activation")) c.field.activation = activation_from_string(as<std::string>(f.at("activation"), w + ".activation"));
    if (f.contains("time_embedding")) {
      const auto e = as<std::string>(f.at("time_embedding"), w + ".time_embedding");
      if (e == "raw")
        c.field.time_embedding = TimeEmbedding::raw;
      else if (e == "sinusoidal")
        c.field.time_embedding = TimeEmbedding::sinusoidal;
      else
        throw ConfigError("unknown time embedding '" + e + "'");
    }
  }

  if (j.contains("path")) {
    const json& p = j.at("path");
    const std::string w = "path";
    check_keys(p, {"hidden_widths", "activation", "use_indicator", "indicator_time"}, w);
    opt(p, "hidden_widths", c.path.hidden_widths, w);
    opt(p, "use_indicator", c.path.use_indicator, w);
    opt(p, "indicator_time", c.path.indicator_time, w);
    if (p.contains("activation")) c.path.activation = activation_from_string(as<std::string>(p.at("activation"), w + ".activation"));
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    const std::string w = "train";
    check_keys(t, {"batch_size", "iterations", "optimizer", "lr_theta", "lr_eta", "lr_final_ratio", "beta1", "beta2", "adam_eps",
                   "refine_steps", "refine_alpha", "seed", "eval_every", "log_every", "theta_steps_per_eta",
                   "time_sampling", "divergence_bound", "train_path", "eval_samples"},
               w);
    auto& tc = c.train;
    opt(t, "batch_size", tc.batch_size, w);
    opt(t, "iterations", tc.iterations, w);
    opt(t, "lr_theta", tc.lr_theta, w);
    opt(t, "lr_eta", tc.lr_eta, w);
    opt(t, "lr_final_ratio", tc.lr_final_ratio, w);
    opt(t, "beta1", tc.beta1, w);
    opt(t, "beta2", tc.beta2, w);
    opt(t, "adam_eps", tc.adam_eps, w);
    opt(t, "refine_steps", tc.refine_steps, w);
    opt(t, "refine_alpha", tc.refine_alpha, w);
    opt(t, "seed", tc.seed, w);
    opt(t, "eval_every", tc.eval_every, w);
    opt(t, "log_every", tc.log_every, w);
    opt(t, "theta_steps_per_eta", tc.theta_steps_per_eta, w);
    opt(t, "divergence_bound", tc.divergence_bound, w);
    opt(t, "train_path", tc.train_path, w);
    opt(t, "eval_samples", tc.eval_samples, w);
    if (t.contains("optimizer")) {
      const auto o = as<std::string>(t.at("optimizer"), w + ".optimizer");
      if (o == "adam")
        tc.optimizer = OptimizerKind::adam;
      else if (o == "sgd")
        tc.optimizer = OptimizerKind::sgd;
      else
        throw ConfigError("unknown optimizer '" + o + "'");
    }
    if (t.contains("time_sampling")) tc.time_sampling = time_sampling_from_string(as<std::string>(t.at("time_sampling"), w + ".time_sampling"));
  }

  {
    const json& d = require(j, "data", "config");
    const std::string w = "data";
    check_keys(d, {"kind", "generator", "seed", "n", "dim", "params", "path"}, w);
    c.data.kind = as<std::string>(require(d, "kind", w), w + ".kind");
    if (c.data.kind == "synth") {
      c.data.generator = as<std::string>(require(d, "generator", w), w + ".generator");
      synth_kind_from_string(c.data.generator);
      opt(d, "seed", c.data.seed, w);
      opt(d, "n", c.data.n, w);
      opt(d, "dim", c.data.dim, w);
      if (d.contains("params")) {
        const json& sp = d.at("params");
        const std::string ws = "data.params";
        check_keys(sp, {"shift", "bend", "accel", "times", "scale", "gap", "weight"}, ws);
        auto& q = c.data.params;
        opt(sp, "shift", q.shift, ws);
        opt(sp, "bend", q.bend, ws);
        opt(sp, "accel", q.accel, ws);
        opt(sp, "times", q.times, ws);
        opt(sp, "scale", q.scale, ws);
        opt(sp, "gap", q.gap, ws);
        opt(sp, "weight", q.weight, ws);
      }
    } else if (c.data.kind == "csv") {
      c.data.path = as<std::string>(require(d, "path", w), w + ".path");
    } else {
      throw ConfigError("unknown data kind '" + c.data.kind + "'");
    }
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"held_out", "seeds", "potential", "max_w1_samples", "sim_steps", "simulate", "workers"}, "eval");
    opt(e, "held_out", c.loo.held_out, "eval");
    opt(e, "seeds", c.loo.seeds, "eval");
    opt(e, "max_w1_samples", c.loo.max_w1_samples, "eval");
    opt(e, "sim_steps", c.loo.sim_steps, "eval");
    opt(e, "simulate", c.loo.simulate, "eval");
    opt(e, "workers", c.loo.workers, "eval");
    if (e.contains("potential")) c.loo.potential = loo_potential_from_string(as<std::string>(e.at("potential"), "eval.potential"));
  }

  // Cross-field consistency.
  c.problem.validate();
  if (c.mean_accel && c.problem.potential) throw ConfigError("two potentials configured");
  c.train.validate();
  if (c.data.kind == "synth") {
    if (c.data.dim <= 0 || c.data.n <= 0) throw ConfigError("data.n and data.dim must be positive");
    c.problem.validate(c.data.dim);
  }
  if (c.field.use_indicator && c.path.indicator_time != 0.5)
    throw ConfigError("the field indicator switches at t = 0.5; path.indicator_time must match");
  return c;
}

inline json config_to_json(const RunConfig& c) {
  using namespace detail;
  json problem = {{"kinetic", c.problem.kinetic == Kinetic::w2 ? "w2" : "wfr"},
                  {"lambda", c.problem.lambda},
                  {"entropic", c.problem.entropic ? dump_sigma(*c.problem.entropic) : json(nullptr)},
                  {"potential", dump_potential(c)},
                  {"potential_weight", c.problem.potential_weight},
                  {"notes", c.problem.notes}};
  json field = {{"hidden_widths", c.field.hidden_widths},
                {"activation", std::string(to_string(c.field.activation))},
                {"use_indicator", c.field.use_indicator},
                {"time_embedding", c.field.time_embedding == TimeEmbedding::raw ? "raw" : "sinusoidal"},
                {"frequencies", c.field.frequencies}};
  json path = {{"hidden_widths", c.path.hidden_widths},
               {"activation", std::string(to_string(c.path.activation))},
               {"use_indicator", c.path.use_indicator},
               {"indicator_time", c.path.indicator_time}};
  const auto& t = c.train;
  json train = {{"batch_size", t.batch_size},
                {"iterations", t.iterations},
                {"optimizer", t.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                {"lr_theta", t.lr_theta},
                {"lr_eta", t.lr_eta},
                {"lr_final_ratio", t.lr_final_ratio},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"refine_steps", t.refine_steps},
                {"refine_alpha", t.refine_alpha},
                {"seed", t.seed},
                {"eval_every", t.eval_every},
                {"log_every", t.log_every},
                {"theta_steps_per_eta", t.theta_steps_per_eta},
                {"time_sampling", t.time_sampling == TimeSampling::uniform ? "uniform" : "stratified"},
                {"divergence_bound", t.divergence_bound},
                {"train_path", t.train_path},
                {"eval_samples", t.eval_samples}};
  json data;
  if (c.data.kind == "synth") {
    const auto& q = c.data.params;
    data = {{"kind", "synth"},
            {"generator", c.data.generator},
            {"seed", c.data.seed},
            {"n", c.data.n},
            {"dim", c.data.dim},
            {"params",
             {{"shift", q.shift}, {"bend", q.bend}, {"accel", q.accel}, {"times", q.times}, {"scale", q.scale},
              {"gap", q.gap}, {"weight", q.weight}}}};
  } else {
    data = {{"kind", c.data.kind}, {"path", c.data.path}};
  }
  json eval = {{"held_out", c.loo.held_out},         {"seeds", c.loo.seeds},
               {"potential", to_string(c.loo.potential)}, {"max_w1_samples", c.loo.max_w1_samples},
               {"sim_steps", c.loo.sim_steps},       {"simulate", c.loo.simulate},
               {"workers", c.loo.workers}};
  return {{"name", c.name}, {"problem", problem}, {"field", field}, {"path", path},
          {"train", train}, {"data", data},       {"eval", eval},   {"output_dir", c.output_dir}};
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return config_to_json(a) == config_to_json(b); }

/// Applies WLF_<SECTION>_<KEY>=value overrides (or WLF_<TOPKEY>) to a raw
/// config. Values parse as JSON when possible and as strings otherwise.
inline void apply_overrides(json& j, const std::map<std::string, std::string>& vars) {
  static const char* sections[] = {"problem", "field", "path", "train", "data", "eval"};
  for (const auto& [name, raw] : vars) {
    if (name.rfind("WLF_", 0) != 0) continue;
    std::string key = name.substr(4);
    for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    bool placed = false;
    for (const char* s : sections) {
      const std::string prefix = std::string(s) + "_";
      if (key.rfind(prefix, 0) == 0) {
        j[s][key.substr(prefix.size())] = value;
        placed = true;
        break;
      }
    }
    if (!placed) j[key] = value;
  }
}

inline std::map<std::string, std::string> environment_overrides() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq != std::string::npos && kv.rfind("WLF_", 0) == 0) out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

inline json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  json j = json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError("config " + file.string() + " is not valid JSON");
  return j;
}

inline RunConfig load_config(const std::filesystem::path& file, const std::map<std::string, std::string>& overrides = {}) {
  json j = read_json_file(file);
  apply_overrides(j, overrides);
  return config_from_json(j);
}

inline void save_config(const RunConfig& c, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write config " + file.string());
  out << config_to_json(c).dump(2) << '\n';
}

/// Materializes the configured dataset; CSV paths resolve against `base`.
inline MarginalDataset load_dataset(const RunConfig& c, const std::filesystem::path& base = {}) {
  if (c.data.kind == "synth")
    return synth(synth_kind_from_string(c.data.generator), c.data.seed, c.data.n, c.data.dim, c.data.params);
  std::filesystem::path p = c.data.path;
  if (p.is_relative() && !base.empty()) p = base / p;
  return load_marginals(p);
}

/// Problem with run-time potentials built from the dataset.
inline ProblemSpec resolve_problem(const RunConfig& c, const MarginalDataset& data) {
  ProblemSpec p = c.problem;
  if (c.mean_accel) {
    p.potential = build_mean_accel_potential(data);
    p.potential->uses_held_out_mean = c.mean_accel->use_held_out_mean;
  }
  p.validate(data.dim);
  return p;
}

inline FieldSpec resolve_field(const RunConfig& c, const MarginalDataset& data) {
  FieldSpec f = c.field;
  f.input_dim = data.dim;
  f.validate();
  return f;
}

inline PathSpec resolve_path(const RunConfig& c, const MarginalDataset& data) {
  PathSpec p = c.path;
  p.dim = data.dim;
  p.layout();
  return p;
}

}  // namespace wlf
