#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "imp/config.hpp"
#include "imp/evaluate.hpp"
#include "imp/io.hpp"

using namespace imp;
namespace fs = std::filesystem;

namespace {

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("imp_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Config, EnvJsonRoundTrip) {
  EnvConfig c = EnvConfig::scaled();
  c.budget = BudgetSpec{0.02, 5, true};
  c.soft_constraints = {{SoftConstraintKind::chance, 0.1, 0.5, 3.0, CostComponent::risk}};
  c.initial_belief = {0.9, 0.1, 0, 0, 0};
  const Json j = env_to_json(c);
  EnvConfig back = EnvConfig::standard();
  apply_env_json(back, j);
  EXPECT_EQ(env_to_json(back), j);
  EXPECT_EQ(back.topology.num_components(), 4u);
  EXPECT_EQ(back.soft_constraints[0].chance_component, CostComponent::risk);
}

TEST(Config, InfiniteCapIsNull) {
  EnvConfig c = EnvConfig::scaled();
  c.budget = BudgetSpec{};
  const Json j = env_to_json(c);
  EXPECT_TRUE(j["budget"]["cap"].is_null());
  EnvConfig back;
  apply_env_json(back, j);
  EXPECT_TRUE(std::isinf(back.budget->cap));
}

TEST(Config, PresetsAndOverrides) {
  EnvConfig c;
  apply_env_json(c, Json::parse(R"({"preset": "scaled", "horizon": 12, "losses": {"scale": 2}})"));
  EXPECT_EQ(c.horizon, 12);
  EXPECT_EQ(c.num_components(), 4u);
  EXPECT_EQ(c.losses.instantaneous[index_of(SystemEvent::Fs)], 100.0);
  apply_env_json(c, Json::parse(R"({"topology": "standard"})"));
  EXPECT_EQ(c.num_components(), 10u);
}

TEST(Config, UnknownKeysRejected) {
  EnvConfig c;
  EXPECT_THROW(apply_env_json(c, Json::parse(R"({"horizn": 3})")), ConfigError);
  EXPECT_THROW(apply_env_json(c, Json::parse(R"({"budget": {"cap": 1, "cycle": 5}})")), ConfigError);
  EXPECT_THROW(apply_env_json(c, Json::parse(R"({"preset": "huge"})")), ConfigError);
  TrainConfig t;
  EXPECT_THROW(apply_train_json(t, Json::parse(R"({"lr": 0.1})")), ConfigError);
  RunConfig rc;
  EXPECT_THROW(rc.apply(Json::parse(R"({"envv": {}})")), ConfigError);
  EXPECT_THROW(apply_env_json(c, Json::parse(R"({"horizon": "ten"})")), ConfigError);
  EXPECT_THROW(parse_json_text("{bad", "inline"), ConfigError);
  EXPECT_THROW(load_json_file("/nonexistent/config.json"), ConfigError);
}

TEST(Config, TrainJsonRoundTrip) {
  TrainConfig t;
  t.episodes = 77;
  t.actor_hidden = {10, 20};
  t.seed = 5;
  TrainConfig back;
  apply_train_json(back, train_to_json(t));
  EXPECT_EQ(train_to_json(back), train_to_json(t));
}

TEST(Config, TrainPresets) {
  TrainConfig t;
  apply_train_json(t, Json::parse(R"({"preset": "scaled", "seed": 3})"));
  EXPECT_EQ(train_to_json(t)["updates_per_step"], 4);
  EXPECT_EQ(t.seed, 3u);
  TrainConfig back;
  apply_train_json(back, train_to_json(t));
  EXPECT_EQ(back.batch_size, 128);
  EXPECT_EQ(back.dual_lr, 0.01);
  EXPECT_EQ(back.epsilon(1999), 0.001);
  EXPECT_THROW(apply_train_json(t, Json::parse(R"({"preset": "tiny"})")), ConfigError);
}

TEST(Config, BaselineJsonRoundTrip) {
  BaselineSpec b;
  b.family = BaselineFamily::RBI_CBM_CP;
  b.threshold = 0.003;
  b.n_cp = 3;
  b.map = {MaintenanceAction::no_repair, MaintenanceAction::partial_repair, MaintenanceAction::replace,
           MaintenanceAction::replace};
  const auto back = baseline_from_json(baseline_to_json(b));
  EXPECT_EQ(back.describe(), b.describe());
  EXPECT_THROW(baseline_from_json(Json::parse(R"({"family": "RBI-CBM", "threshold": 2})")), ConfigError);
}

TEST(Config, RunConfigFromFile) {
  const auto dir = scratch("cfg");
  std::ofstream(dir / "c.json") << R"({"env": {"preset": "scaled"}, "train": {"episodes": 3}, "seed": 9})";
  const auto rc = load_run_config((dir / "c.json").string());
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.train.episodes, 3);
  EXPECT_EQ(rc.env.horizon, 20);
  rc.validate();
  fs::remove_all(dir);
}

TEST(Io, CsvQuotingAndWidth) {
  io::Csv c({"a", "b"});
  c.row({"x,y", "say \"hi\""});
  EXPECT_EQ(c.str(), "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
  EXPECT_THROW(c.row({"only one"}), DomainError);
  EXPECT_EQ(io::num(std::nan("")), "NA");
  EXPECT_EQ(io::num(std::optional<double>{}), "NA");
  EXPECT_EQ(std::stod(io::num(0.1)), 0.1);
}

TEST(Io, EvaluationSchemas) {
  const auto r = evaluate(UniformPolicy{}, EnvConfig::scaled(), 1, 1);
  const auto summary = io::summary_csv("uniform", r);
  EXPECT_EQ(first_line(summary),
            "policy,n_episodes,discount,total_mean,total_se,maintenance_mean,maintenance_se,inspection_mean,"
            "inspection_se,shutdown_mean,shutdown_se,risk_mean,risk_se");
  // One episode: standard errors are missing.
  EXPECT_NE(summary.find(",NA,"), std::string::npos);
  const auto traj = io::trajectory_csv(r);
  EXPECT_EQ(first_line(traj),
            "step,pr_fs_now,pr_fs_next,c_maintenance,c_inspection,c_shutdown,c_damage,gated_fraction");
  EXPECT_EQ(std::count(traj.begin(), traj.end(), '\n'), 21);
  const auto freq = io::action_frequency_csv(r);
  EXPECT_EQ(first_line(freq), "component,step,action,frequency");
  EXPECT_EQ(std::count(freq.begin(), freq.end(), '\n'), 1 + 4 * 20 * 5);
  EXPECT_EQ(first_line(io::constraints_csv(r)), "index,kind,threshold,return_mean,return_se,satisfied_fraction");
}

TEST(Io, TrainingLogAndGridSchemas) {
  EXPECT_EQ(io::training_log_header(2),
            (std::vector<std::string>{"episode", "total", "maintenance", "inspection", "shutdown", "risk", "epsilon",
                                      "lambda_0", "lambda_1", "constraint_return_0", "constraint_return_1"}));
  EpisodeLog e;
  e.lambda = {0.5};
  e.constraint_returns = {0.25};
  const std::vector<EpisodeLog> log{e};
  const auto csv = io::training_log_csv(log, 1);
  EXPECT_EQ(csv, "episode,total,maintenance,inspection,shutdown,risk,epsilon,lambda_0,constraint_return_0\n"
                 "0,0,0,0,0,0,0,0.5,0.25\n");
  BaselineSpec fr;
  const std::vector<BaselineSpec> one{fr};
  const auto g = grid_search(one, EnvConfig::scaled(), 2, 1);
  EXPECT_EQ(first_line(io::grid_csv(g)),
            "family,candidate,partial_age,replace_age,interval,threshold,map,n_cp,mean_total,se_total");
}

TEST(Io, SweepAndBestBaselineSchemas) {
  auto sweep = io::sweep_header();
  EXPECT_EQ(sweep.size(), io::summary_header().size() + 3);
  EXPECT_EQ((std::vector<std::string>(sweep.begin(), sweep.begin() + 4)),
            (std::vector<std::string>{"kind", "level", "status", "policy"}));
  EXPECT_EQ(io::best_baseline_header(),
            (std::vector<std::string>{"family", "candidate", "grid_mean", "grid_se", "eval_mean", "eval_se"}));
}

TEST(Io, AtomicWriteReplacesContent) {
  const auto dir = scratch("atomic");
  io::atomic_write(dir / "sub" / "f.txt", "first");
  io::atomic_write(dir / "sub" / "f.txt", "second");
  EXPECT_EQ(slurp(dir / "sub" / "f.txt"), "second");
  int entries = 0;
  for (auto const& p : fs::directory_iterator(dir / "sub")) entries += p.is_regular_file();
  EXPECT_EQ(entries, 1);
  fs::remove_all(dir);
}

TEST(Io, OutputRootFromEnvironment) {
  ::setenv(io::kOutputRootVar, "/tmp/somewhere", 1);
  EXPECT_EQ(io::output_root(), fs::path("/tmp/somewhere"));
  ::unsetenv(io::kOutputRootVar);
  EXPECT_EQ(io::output_root(), fs::path("runs"));
}

TEST(Io, ManifestContents) {
  const auto dir = scratch("manifest");
  io::Manifest m;
  m.command = "evaluate";
  m.argv = {"imp", "evaluate"};
  m.seed = 3;
  m.outputs = {"summary.csv"};
  m.write(dir);
  const auto j = Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(j["command"], "evaluate");
  EXPECT_EQ(j["seed"], 3);
  EXPECT_EQ(j["csv_schema_version"], io::kCsvSchemaVersion);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_TRUE(j.contains("started_at"));
  fs::remove_all(dir);
}

TEST(Io, WriteEvalReportFiles) {
  const auto dir = scratch("report");
  const auto r = evaluate(TrivialPolicy{}, EnvConfig::scaled(), 3, 1);
  const auto files = io::write_eval_report(dir, "trivial", r);
  EXPECT_EQ(files.size(), 4u);
  for (auto const& f : files) EXPECT_TRUE(fs::exists(dir / f));
  fs::remove_all(dir);
}
