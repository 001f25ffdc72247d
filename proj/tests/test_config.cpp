#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "wlf/checkpoint.hpp"
#include "wlf/config.hpp"

using namespace wlf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "wlf_config_tests";
  fs::create_directories(dir);
  return dir / name;
}

json minimal() {
  return json::parse(R"({
    "problem": {"kinetic": "w2"},
    "data": {"kind": "synth", "generator": "gaussian_shift", "n": 100, "dim": 2}
  })");
}

std::string error_of(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, ShippedConfigsLoad) {
  for (const auto& entry : fs::directory_iterator(fs::path(WLF_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".json") continue;
    SCOPED_TRACE(entry.path().filename().string());
    const RunConfig c = load_config(entry.path());
    const auto data = load_dataset(c, entry.path().parent_path());
    EXPECT_NO_THROW(resolve_problem(c, data));
    EXPECT_NO_THROW(resolve_field(c, data));
  }
}

TEST(Config, RoundTripThroughFile) {
  const RunConfig c = load_config(fs::path(WLF_SOURCE_DIR) / "configs" / "drift_loo_mean_accel.json");
  save_config(c, scratch("round.json"));
  const RunConfig back = load_config(scratch("round.json"));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(back.train.lr_eta, c.train.lr_eta);
  ASSERT_TRUE(back.mean_accel.has_value());
}

TEST(Config, DefaultsFillOmittedSections) {
  const RunConfig c = config_from_json(minimal());
  EXPECT_EQ(c.train.batch_size, 256);
  EXPECT_EQ(c.problem.kinetic, Kinetic::w2);
  EXPECT_EQ(c.data.n, 100);
}

TEST(Config, MissingKeyIsNamed) {
  json j = minimal();
  j["problem"].erase("kinetic");
  EXPECT_NE(error_of(j).find("problem.kinetic"), std::string::npos);
  j = minimal();
  j.erase("data");
  EXPECT_NE(error_of(j).find("config.data"), std::string::npos);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  json j = minimal();
  j["train"]["learning_rate"] = 0.1;
  EXPECT_NE(error_of(j).find("train.learning_rate"), std::string::npos);
  j = minimal();
  j["train"]["iterations"] = "many";
  EXPECT_NE(error_of(j).find("train.iterations"), std::string::npos);
  j = minimal();
  j["problem"]["kinetic"] = "w1";
  EXPECT_FALSE(error_of(j).empty());
}

TEST(Config, InconsistentModesRejected) {
  json j = minimal();
  j["problem"] = {{"kinetic", "wfr"}, {"lambda", 1.0}, {"entropic", {{"kind", "constant"}, {"sigma", 1.0}}}};
  EXPECT_FALSE(error_of(j).empty());
  j = minimal();
  j["problem"]["potential"] = {{"kind", "linear_per_interval"}, {"times", {0, 1}}, {"accel", {{0, 0, 1}}}};
  EXPECT_FALSE(error_of(j).empty());
  j = minimal();
  j["field"]["use_indicator"] = true;
  j["path"]["indicator_time"] = 0.3;
  EXPECT_FALSE(error_of(j).empty());
}

TEST(Config, EnvironmentStyleOverrides) {
  json j = minimal();
  apply_overrides(j, {{"WLF_TRAIN_ITERATIONS", "17"}, {"WLF_NAME", "renamed"}, {"WLF_PROBLEM_KINETIC", "wfr"},
                      {"WLF_PROBLEM_LAMBDA", "0.5"}, {"OTHER", "x"}});
  const RunConfig c = config_from_json(j);
  EXPECT_EQ(c.train.iterations, 17);
  EXPECT_EQ(c.name, "renamed");
  EXPECT_EQ(c.problem.kinetic, Kinetic::wfr);
  EXPECT_EQ(c.problem.lambda, 0.5);
}

TEST(Config, InvalidJsonAndMissingFile) {
  std::ofstream(scratch("bad.json")) << "{ not json";
  EXPECT_THROW(load_config(scratch("bad.json")), ConfigError);
  EXPECT_THROW(load_config(scratch("absent.json")), ConfigError);
}

TEST(Checkpoint, RoundTripPreservesParameters) {
  Checkpoint ck;
  ck.field = fixtures::random_field(3, 4);
  PathSpec ps;
  ps.dim = 3;
  ps.use_indicator = true;
  ck.path = init_path_params(ps, 5);
  ck.meta["step"] = 42;
  save_checkpoint(scratch("ck.wlf"), ck);
  const Checkpoint back = load_checkpoint(scratch("ck.wlf"));
  EXPECT_EQ(back.field.theta, ck.field.theta);
  EXPECT_EQ(back.path.eta, ck.path.eta);
  EXPECT_EQ(back.meta["step"], 42);
  EXPECT_EQ(back.field.spec.hidden_widths, ck.field.spec.hidden_widths);
  EXPECT_TRUE(back.path.spec.use_indicator);
}

TEST(Checkpoint, CountMismatchAndCorruptionDetected) {
  Container c;
  c.meta["field_spec"] = field_spec_to_json(fixtures::random_field(2, 1).spec);
  PathSpec ps;
  ps.dim = 2;
  c.meta["path_spec"] = path_spec_to_json(ps);
  c.blocks = {{"theta", Eigen::VectorXd::Zero(3)}, {"eta", Eigen::VectorXd::Zero(3)}};
  write_container(scratch("short.wlf"), c);
  EXPECT_THROW(load_checkpoint(scratch("short.wlf")), LoadError);
  std::ofstream(scratch("junk.wlf")) << "definitely not a checkpoint";
  EXPECT_THROW(load_checkpoint(scratch("junk.wlf")), LoadError);
}
