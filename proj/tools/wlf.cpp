// wlf: command-line driver for training, evaluation, simulation and oracles.
#include <malloc.h>

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "plot.hpp"
#include "wlf/checkpoint.hpp"
#include "wlf/config.hpp"
#include "wlf/gradcheck.hpp"
#include "wlf/ot.hpp"
#include "wlf/transport_eval.hpp"

namespace fs = std::filesystem;
using namespace wlf;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { ok = 0, config_error = 2, numeric_failure = 3, check_failure = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  if (!out) throw LoadError("cannot write " + file.string());
  out << text;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse number '" + cell + "' in list '" + s + "'");
    }
  }
  return out;
}

struct Run {
  RunConfig cfg;
  fs::path config_path;
  fs::path out;
  MarginalDataset data;
  ProblemSpec problem;
  FieldSpec field;
  PathSpec path;
};

Run load_run(const Common& c, bool need_config = true) {
  Run r;
  if (c.config.empty()) {
    if (need_config) throw ConfigError("--config is required");
    return r;
  }
  r.config_path = c.config;
  r.cfg = load_config(c.config, environment_overrides());
  if (c.seed) r.cfg.train.seed = *c.seed;
  r.cfg.loo.workers = c.workers;
  r.out = c.out.empty() ? fs::path(r.cfg.output_dir) : fs::path(c.out);
  r.data = load_dataset(r.cfg, r.config_path.parent_path());
  r.problem = resolve_problem(r.cfg, r.data);
  r.field = resolve_field(r.cfg, r.data);
  r.path = resolve_path(r.cfg, r.data);
  fs::create_directories(r.out);
  return r;
}

void write_manifest(const Run& r, const std::string& command, const json& extra = json::object()) {
  const json cfg = config_to_json(r.cfg);
  json m = {{"command", command},
            {"config_hash", hex(fnv1a(cfg.dump()))},
            {"seed", r.cfg.train.seed},
            {"dataset", {{"name", r.data.name}, {"dim", r.data.dim}, {"times", r.data.times}}},
            {"versions",
             {{"wlf", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"compiler", __VERSION__}}},
            {"config", cfg}};
  if (r.problem.potential) m["held_out_mean_potential"] = r.problem.potential->uses_held_out_mean;
  m.update(extra);
  write_text(r.out / "manifest.json", m.dump(2) + "\n");
}

json dual_json(const DualReport& d) {
  json iv = json::array();
  for (const auto& i : d.intervals)
    iv.push_back({{"index", i.index}, {"t_lo", i.t_lo}, {"t_hi", i.t_hi}, {"boundary", i.boundary},
                  {"integrand", i.integrand}, {"dual", i.dual}, {"samples", i.samples}});
  return {{"boundary_term", d.boundary_term}, {"integrand_term", d.integrand_term},
          {"dual_estimate", d.dual_estimate}, {"distance", std::sqrt(2.0 * std::max(0.0, d.dual_estimate))},
          {"intervals", iv}};
}

Checkpoint checkpoint_for(const Run& r, const FieldParams& f, const PathParams& p, int step) {
  Checkpoint ck{f, p, {{"step", step}, {"config_hash", hex(fnv1a(config_to_json(r.cfg).dump()))}}};
  return ck;
}

// ---------------------------------------------------------------------------

int cmd_train(const Common& c) {
  const Run r = load_run(c);
  const auto seed = r.cfg.train.seed;
  const FieldParams f0 = init_params(r.field, 2 * seed + 1);
  const PathParams p0 = init_path_params(r.path, 2 * seed + 2);
  const auto observer = [&](int step, const FieldParams& f, const PathParams& p) {
    save_checkpoint(r.out / ("checkpoint_" + std::to_string(step) + ".wlf"), checkpoint_for(r, f, p, step));
  };
  const auto res = train(r.problem, r.data, f0, p0, r.cfg.train, observer);
  save_checkpoint(r.out / "checkpoint_final.wlf", checkpoint_for(r, res.field, res.path, r.cfg.train.iterations));
  write_text(r.out / "history.csv", res.history.to_csv());
  const auto report = estimate_dual(r.problem, res.field, res.path, r.data, r.cfg.train.eval_samples, seed + 1);
  write_text(r.out / "dual_report.json", dual_json(report).dump(2) + "\n");
  write_manifest(r, "train");
  std::cout << "dual_estimate " << report.dual_estimate << "\n";
  return ok;
}

int cmd_eval_loo(const Common& c) {
  Run r = load_run(c);
  LooConfig loo = r.cfg.loo;
  if (r.cfg.mean_accel && loo.potential == LooPotential::none)
    loo.potential = r.cfg.mean_accel->use_held_out_mean ? LooPotential::mean_accel_held_out : LooPotential::mean_accel;
  if (c.seed) loo.seeds = {*c.seed};
  const auto table = leave_one_out(r.data, r.cfg.problem, r.field, r.path, r.cfg.train, loo);
  write_text(r.out / "eval.csv", table.to_csv());
  write_text(r.out / "eval_summary.csv", table.summary_csv());
  write_manifest(r, "eval-loo", {{"loo_potential", to_string(loo.potential)},
                                 {"held_out_mean_potential", loo.potential == LooPotential::mean_accel_held_out}});
  std::cout << table.summary_csv();
  return ok;
}

int cmd_simulate(const Common& c, const std::string& checkpoint, const std::string& mode, long n, int steps) {
  const Run r = load_run(c);
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (ck.field.spec.input_dim != r.data.dim) throw ConfigError("checkpoint dimension does not match the dataset");
  SimulateOptions so;
  so.mode = sim_mode_from_string(mode);
  so.steps = steps;
  so.seed = r.cfg.train.seed;
  std::mt19937_64 rng(r.cfg.train.seed);
  const Points x0 = detail::draw_columns(r.data.snapshots.front(), n, rng);
  const auto bundle = simulate(r.problem, ck.field, x0, so);
  write_text(r.out / "trajectories.csv", bundle.to_csv());
  Container box;
  box.meta = {{"mode", to_string(bundle.mode)}, {"times", bundle.times}, {"particles", n},
              {"dim", r.data.dim}, {"diverged", bundle.diverged}};
  Eigen::VectorXd states(static_cast<Eigen::Index>(bundle.states.size()) * r.data.dim * n);
  for (std::size_t k = 0; k < bundle.states.size(); ++k)
    states.segment(static_cast<Eigen::Index>(k) * r.data.dim * n, r.data.dim * n) = bundle.states[k].reshaped();
  box.blocks = {{"states", states}, {"log_weights", bundle.log_weights.reshaped()}};
  write_container(r.out / "trajectories.wlf", box);
  write_manifest(r, "simulate", {{"checkpoint", checkpoint}, {"mode", mode}, {"diverged", bundle.diverged},
                                 {"straightness", straightness(bundle)}});
  std::cout << "straightness " << straightness(bundle) << "\n";
  if (bundle.diverged) {
    std::cerr << "simulation diverged at step " << bundle.diverged_at << "\n";
    return numeric_failure;
  }
  return ok;
}

int cmd_action(const Common& c, const std::string& checkpoint) {
  const Run r = load_run(c);
  PathParams path = PathParams::zeros(r.path);
  if (!checkpoint.empty()) path = load_checkpoint(checkpoint).path;
  const auto res = action_of_path(r.problem, r.data, path, init_params(r.field, 2 * r.cfg.train.seed + 1), r.cfg.train);
  write_text(r.out / "history.csv", res.history.to_csv());
  write_text(r.out / "action.json",
             json{{"action", res.action}, {"distance", std::sqrt(2.0 * std::max(0.0, res.action))}}.dump(2) + "\n");
  write_manifest(r, "action", {{"checkpoint", checkpoint}});
  std::cout << "action " << res.action << "\n";
  return ok;
}

struct OracleArgs {
  std::string which;
  std::string m0 = "0,0", m1 = "3,0", var0, var1, a = "0,4", x = "0", y = "2";
  double eps = 0.1, sigma = 1.0, t = 0.5, sd0 = 1.0, sd1 = 1.0, mean0 = 0.0, mean1 = 4.0;
  int grid = 801;
};

int cmd_oracle(const OracleArgs& o) {
  std::cout.precision(10);
  if (o.which == "bures") {
    const auto m0 = parse_list(o.m0), m1 = parse_list(o.m1);
    if (m0.size() != m1.size()) throw ConfigError("--m0 and --m1 differ in dimension");
    const auto d = static_cast<Eigen::Index>(m0.size());
    auto cov = [&](const std::string& s) {
      if (s.empty()) return Eigen::MatrixXd::Identity(d, d).eval();
      const auto v = parse_list(s);
      if (static_cast<Eigen::Index>(v.size()) != d) throw ConfigError("variance list has wrong dimension");
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), d)).asDiagonal().toDenseMatrix();
    };
    const double w2 = gaussian_w2(Eigen::Map<const Eigen::VectorXd>(m0.data(), d), cov(o.var0),
                                  Eigen::Map<const Eigen::VectorXd>(m1.data(), d), cov(o.var1));
    std::cout << w2 << "\n";
  } else if (o.which == "sinkhorn") {
    const auto xs = parse_list(o.x), ys = parse_list(o.y);
    Eigen::MatrixXd C(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = 0; j < ys.size(); ++j)
        C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (xs[i] - ys[j]) * (xs[i] - ys[j]);
    const auto r = sinkhorn(Eigen::VectorXd::Constant(C.rows(), 1.0 / C.rows()),
                            Eigen::VectorXd::Constant(C.cols(), 1.0 / C.cols()), C, o.eps);
    std::cout << "cost " << r.cost << "\nregularized " << r.regularized << "\nconverged " << r.converged << "\n";
    if (!r.converged) std::cerr << "warning: sinkhorn did not converge\n";
  } else if (o.which == "sb-grid") {
    const double lo = std::min(o.mean0 - 8 * o.sd0, o.mean1 - 8 * o.sd1);
    const double hi = std::max(o.mean0 + 8 * o.sd0, o.mean1 + 8 * o.sd1);
    const Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(o.grid, lo, hi);
    const auto m = sb_grid_oracle(g, normal_density(g, o.mean0, o.sd0), normal_density(g, o.mean1, o.sd1), o.sigma, o.t);
    std::cout << "mean " << m.mean() << "\nvariance " << m.variance() << "\nmass " << m.mass << "\n";
    if (!m.warning.empty()) std::cerr << "warning: " << m.warning << "\n";
  } else if (o.which == "parabola") {
    const auto m0 = parse_list(o.m0), m1 = parse_list(o.m1), a = parse_list(o.a);
    if (m0.size() != m1.size() || a.size() != m0.size()) throw ConfigError("--m0, --m1 and --a differ in dimension");
    const auto d = static_cast<Eigen::Index>(m0.size());
    const Eigen::VectorXd c = parabola_center(Eigen::Map<const Eigen::VectorXd>(m0.data(), d),
                                              Eigen::Map<const Eigen::VectorXd>(m1.data(), d),
                                              Eigen::Map<const Eigen::VectorXd>(a.data(), d), o.t);
    for (Eigen::Index i = 0; i < d; ++i) std::cout << (i ? " " : "") << c(i);
    std::cout << "\n";
  } else {
    throw ConfigError("unknown oracle '" + o.which + "'");
  }
  return ok;
}

int cmd_check_grads(const Common& c, int trials) {
  GradCheckOptions opt;
  opt.trials = trials;
  if (c.seed) opt.seed = *c.seed;
  const auto rep = run_gradient_checks(opt);
  std::cout << rep.to_string();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "check_grads.txt", rep.to_string());
  }
  return rep.ok() ? ok : check_failure;
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& file, std::vector<std::string>& header) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  header.clear();
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        row.push_back(std::nan(""));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_plot(const Common& c, const std::string& history, const std::string& trajectories,
             const std::string& checkpoint, const std::vector<double>& times) {
  const fs::path out = c.out.empty() ? fs::path("plots") : fs::path(c.out);
  fs::create_directories(out);
  int made = 0;
  if (!history.empty()) {
    std::vector<std::string> h;
    const auto rows = read_csv_rows(history, h);
    std::vector<double> xs, ys;
    auto box = plot::empty_box();
    for (const auto& r : rows) {
      xs.push_back(r[0]);
      ys.push_back(r[1]);
      box.include(r[0], r[1]);
    }
    box.pad(0.05);
    plot::Canvas cv(box, "dual estimate vs iteration");
    cv.polyline(xs, ys, plot::palette(0), 1.5);
    write_text(out / "dual_curve.svg", cv.str());
    ++made;
  }
  if (!trajectories.empty()) {
    std::vector<std::string> h;
    const auto rows = read_csv_rows(trajectories, h);
    if (h.size() < 5) throw ConfigError("trajectory CSV needs at least one coordinate");
    const bool two_d = h.size() >= 6;
    std::map<long, std::pair<std::vector<double>, std::vector<double>>> paths;
    auto box = plot::empty_box();
    for (const auto& r : rows) {
      const auto p = static_cast<long>(r[0]);
      if (p >= 64) continue;
      const double x = two_d ? r[3] : r[2], y = two_d ? r[4] : r[3];
      paths[p].first.push_back(x);
      paths[p].second.push_back(y);
      box.include(x, y);
    }
    box.pad(0.05);
    plot::Canvas cv(box, two_d ? "trajectory fan (first two coordinates)" : "trajectory fan (t, x0)");
    for (const auto& [p, xy] : paths) cv.polyline(xy.first, xy.second, plot::palette(p), 0.8, 0.7);
    write_text(out / "trajectories.svg", cv.str());
    ++made;
  }
  if (!checkpoint.empty()) {
    const Run r = load_run(c);
    const Checkpoint ck = load_checkpoint(checkpoint);
    std::mt19937_64 rng(r.cfg.train.seed);
    std::vector<Points> clouds;
    auto box = plot::empty_box();
    for (double t : times) {
      clouds.push_back(sample_at_time(ck.path, r.data, t, 400, rng));
      for (Eigen::Index j = 0; j < clouds.back().cols(); ++j)
        box.include(clouds.back()(0, j), r.data.dim > 1 ? clouds.back()(1, j) : t);
    }
    box.pad(0.05);
    plot::Canvas cv(box, "path sampler marginals");
    for (std::size_t k = 0; k < clouds.size(); ++k) {
      for (Eigen::Index j = 0; j < clouds[k].cols(); ++j)
        cv.dot(clouds[k](0, j), r.data.dim > 1 ? clouds[k](1, j) : times[k], plot::palette(k));
      std::ostringstream label;
      label << "t = " << times[k];
      cv.legend(static_cast<int>(k), label.str(), plot::palette(k));
    }
    write_text(out / "marginals.svg", cv.str());
    ++made;
  }
  if (made == 0) throw ConfigError("plot needs --history, --trajectories or --checkpoint");
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Wasserstein Lagrangian flows"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run configuration (JSON)");
    sub->add_option("--seed", common.seed, "Override the training seed");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--workers", common.workers, "Maximum parallel workers")->check(CLI::PositiveNumber);
  };

  auto* train_cmd = app.add_subcommand("train", "Train the field and path; writes checkpoints and history");
  add_common(train_cmd);

  auto* loo_cmd = app.add_subcommand("eval-loo", "Leave-one-timepoint-out evaluation");
  add_common(loo_cmd);

  std::string checkpoint, mode = "ode";
  long sim_n = 256;
  int sim_steps = 100;
  auto* sim_cmd = app.add_subcommand("simulate", "Integrate particles through a trained field");
  add_common(sim_cmd);
  sim_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  sim_cmd->add_option("--mode", mode, "ode | sde | single-step");
  sim_cmd->add_option("--n", sim_n, "Number of particles")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--steps", sim_steps, "Integration steps")->check(CLI::PositiveNumber);

  auto* action_cmd = app.add_subcommand("action", "Action of a fixed path (checkpoint path, or the zero correction)");
  add_common(action_cmd);
  action_cmd->add_option("--checkpoint", checkpoint, "Checkpoint whose path is held fixed");

  OracleArgs oa;
  auto* oracle_cmd = app.add_subcommand("oracle", "Closed-form and grid oracles");
  oracle_cmd->add_option("--which", oa.which, "bures | sinkhorn | sb-grid | parabola")->required();
  oracle_cmd->add_option("--m0", oa.m0, "Mean 0 (comma list)");
  oracle_cmd->add_option("--m1", oa.m1, "Mean 1 (comma list)");
  oracle_cmd->add_option("--var0", oa.var0, "Diagonal covariance 0 (comma list, default identity)");
  oracle_cmd->add_option("--var1", oa.var1, "Diagonal covariance 1 (comma list, default identity)");
  oracle_cmd->add_option("--a", oa.a, "Acceleration (parabola)");
  oracle_cmd->add_option("--x", oa.x, "Support of measure 0 (sinkhorn, 1-D)");
  oracle_cmd->add_option("--y", oa.y, "Support of measure 1 (sinkhorn, 1-D)");
  oracle_cmd->add_option("--eps", oa.eps, "Entropic regularization (sinkhorn)");
  oracle_cmd->add_option("--sigma", oa.sigma, "Diffusion (sb-grid)");
  oracle_cmd->add_option("--t", oa.t, "Time (sb-grid, parabola)");
  oracle_cmd->add_option("--mean0", oa.mean0, "Gaussian mean 0 (sb-grid)");
  oracle_cmd->add_option("--mean1", oa.mean1, "Gaussian mean 1 (sb-grid)");
  oracle_cmd->add_option("--sd0", oa.sd0, "Gaussian sd 0 (sb-grid)");
  oracle_cmd->add_option("--sd1", oa.sd1, "Gaussian sd 1 (sb-grid)");
  oracle_cmd->add_option("--grid", oa.grid, "Grid points (sb-grid)");

  int trials = 100;
  auto* grads_cmd = app.add_subcommand("check-grads", "Finite-difference derivative checks");
  add_common(grads_cmd);
  grads_cmd->add_option("--trials", trials, "Random trials per suite")->check(CLI::PositiveNumber);

  std::string history, trajectories;
  std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
  auto* plot_cmd = app.add_subcommand("plot", "Static SVG figures");
  add_common(plot_cmd);
  plot_cmd->add_option("--history", history, "history.csv from train");
  plot_cmd->add_option("--trajectories", trajectories, "trajectories.csv from simulate");
  plot_cmd->add_option("--checkpoint", checkpoint, "Checkpoint for marginal scatter (needs --config)");
  plot_cmd->add_option("--times", times, "Times for the marginal scatter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*train_cmd) return cmd_train(common);
    if (*loo_cmd) return cmd_eval_loo(common);
    if (*sim_cmd) return cmd_simulate(common, checkpoint, mode, sim_n, sim_steps);
    if (*action_cmd) return cmd_action(common, checkpoint);
    if (*oracle_cmd) return cmd_oracle(oa);
    if (*grads_cmd) return cmd_check_grads(common, trials);
    if (*plot_cmd) return cmd_plot(common, history, trajectories, checkpoint, times);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return numeric_failure;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return config_error;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return config_error;
  }
  return config_error;
}
