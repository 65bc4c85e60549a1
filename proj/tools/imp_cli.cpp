#include <CLI11.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <chrono>
#include <fstream>
#include <iostream>

#include "checks.hpp"
#include "imp/baselines.hpp"
#include "imp/config.hpp"
#include "imp/ddmac.hpp"
#include "imp/evaluate.hpp"
#include "imp/io.hpp"

using namespace imp;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;

const std::vector<double> kBudgetLevels{0.05, 0.075, 0.10, 0.125, 0.15, 0.175, 0.20, 0.25, 0.30};
const std::vector<double> kRiskLevels{1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.25};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Options shared by every verb that builds an environment.
struct Common {
  std::string config_path;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<double> budget_cap;  // fraction of the rebuild cost
  int budget_cycle = 5;
  std::optional<double> risk_cap;    // multiple of the rebuild cost
  std::vector<std::string> argv;

  void add(CLI::App* app, bool training) {
    app->add_option("--config", config_path, "JSON run configuration");
    app->add_option("--preset", preset, "standard or scaled (environment and training)")
        ->check(CLI::IsMember({"standard", "scaled"}));
    app->add_option("--out", out, "run directory, relative to the output root");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--budget-cap", budget_cap, "per-cycle budget as a fraction of the rebuild cost");
    app->add_option("--budget-cycle", budget_cycle, "budget cycle length in steps");
    app->add_option("--risk-cap", risk_cap, "life-cycle risk threshold as a multiple of the rebuild cost");
    if (training) app->add_option("--episodes", episodes, "training episodes");
  }

  RunConfig load() const {
    RunConfig rc;
    if (!preset.empty()) rc.apply({{"env", {{"preset", preset}}}, {"train", {{"preset", preset}}}});
    if (!config_path.empty()) rc.apply(load_json_file(config_path));
    if (seed) rc.seed = *seed;
    rc.train.seed = rc.seed;
    if (episodes) rc.train.episodes = *episodes;
    if (budget_cap) rc.env.budget = BudgetSpec{*budget_cap * rc.env.cost_params.rebuild_cost, budget_cycle, true};
    if (risk_cap) set_risk_cap(rc.env, *risk_cap);
    rc.validate();
    return rc;
  }

  fs::path dir(const std::string& fallback) const { return io::output_root() / (out.empty() ? fallback : out); }

  static void set_risk_cap(EnvConfig& env, double multiple) {
    auto& sc = env.soft_constraints;
    sc.erase(std::remove_if(sc.begin(), sc.end(),
                            [](auto const& s) { return s.kind == SoftConstraintKind::lifecycle_risk; }),
             sc.end());
    sc.push_back({SoftConstraintKind::lifecycle_risk, multiple * env.cost_params.rebuild_cost, 0.0, 0.0,
                  CostComponent::risk});
  }
};

io::Manifest start_manifest(const std::string& command, const Common& c, const RunConfig& rc) {
  io::Manifest m;
  m.command = command;
  m.argv = c.argv;
  m.seed = rc.seed;
  m.config = rc.to_json();
  return m;
}

struct TrainOutcome {
  std::vector<std::string> files;
  AgentSet agents;
};

// Trains and writes checkpoint, log and resolved config into `dir`.
TrainOutcome run_training(const RunConfig& rc, const fs::path& dir) {
  Trainer trainer(rc.env, rc.train);
  const auto log = trainer.train();
  std::ostringstream ckpt;
  const auto nets = trainer.agents().all_networks();
  nn::save_networks(ckpt, nets);
  io::atomic_write(dir / "checkpoint.bin", ckpt.str());
  io::atomic_write(dir / "training_log.csv", io::training_log_csv(log, rc.env.soft_constraints.size()));
  io::atomic_write(dir / "config.json", rc.to_json().dump(2) + "\n");
  return {{"checkpoint.bin", "training_log.csv", "config.json"}, trainer.agents()};
}

int cmd_train(const Common& c) {
  const auto t0 = Clock::now();
  const RunConfig rc = c.load();
  const fs::path dir = c.dir("train");
  auto m = start_manifest("train", c, rc);
  try {
    m.outputs = run_training(rc, dir).files;
  } catch (const TrainingError& e) {
    m.status = std::string("failed: ") + e.what();
    m.wall_seconds = seconds_since(t0);
    m.write(dir);
    throw;
  }
  m.wall_seconds = seconds_since(t0);
  m.write(dir);
  std::cout << "trained " << rc.train.episodes << " episodes -> " << dir.string() << "\n";
  return kExitOk;
}

AgentSet load_checkpoint(const std::string& path, const EnvConfig& env) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  auto agents = AgentSet::from_networks(nn::load_networks(in));
  agents.check_shape(env.num_components());
  return agents;
}

BaselineSpec parse_baseline(const std::string& text) {
  if (!text.empty() && text.front() == '{') return baseline_from_json(parse_json_text(text, "baseline spec"));
  if (fs::exists(text)) return baseline_from_json(load_json_file(text));
  BaselineSpec b;
  b.family = parse_family(text);
  b.validate();
  return b;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint, const std::string& baseline, int n, bool greedy) {
  const auto t0 = Clock::now();
  const RunConfig rc = c.load();
  if (checkpoint.empty() == baseline.empty()) throw ConfigError("evaluate needs exactly one of --checkpoint, --baseline");
  if (n < 1) throw ConfigError("--episodes must be >= 1");
  const fs::path dir = c.dir("evaluate");
  auto m = start_manifest("evaluate", c, rc);
  Environment env(rc.env);
  EvalReport r;
  std::string name;
  if (!checkpoint.empty()) {
    const auto agents = load_checkpoint(checkpoint, rc.env);
    r = evaluate(DdmacPolicy(agents, rc.env, greedy), env, n, rc.seed);
    name = greedy ? "ddmac-greedy" : "ddmac";
    m.extra["checkpoint"] = checkpoint;
  } else {
    const auto spec = parse_baseline(baseline);
    r = evaluate(BaselinePolicy(spec, env), env, n, rc.seed);
    name = spec.describe();
    m.extra["baseline"] = baseline_to_json(spec);
  }
  m.outputs = io::write_eval_report(dir, name, r);
  m.extra["episodes"] = n;
  m.wall_seconds = seconds_since(t0);
  m.write(dir);
  std::cout << name << ": total " << r.total.mean << " (se " << io::num(r.total.stderr_) << ") -> " << dir.string()
            << "\n";
  return kExitOk;
}

int cmd_sweep(const Common& c, const std::string& kind, std::vector<double> levels, int eval_n) {
  const auto t0 = Clock::now();
  const RunConfig base = c.load();
  if (kind != "budget" && kind != "risk") throw ConfigError("sweep kind must be budget or risk");
  if (levels.empty()) levels = kind == "budget" ? kBudgetLevels : kRiskLevels;
  const fs::path root = c.dir("sweep-" + kind);
  auto m = start_manifest("sweep", c, base);
  m.extra["kind"] = kind;
  m.extra["levels"] = nlohmann::json::array();

  const auto header = io::sweep_header();
  io::Csv combined(header);
  int code = kExitOk;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double level = levels[k];
    const std::string sub = "level_" + std::to_string(k);
    nlohmann::json entry{{"level", level}, {"dir", sub}};
    try {
      RunConfig rc = base;
      if (kind == "budget")
        rc.env.budget = BudgetSpec{level * rc.env.cost_params.rebuild_cost, c.budget_cycle, true};
      else
        Common::set_risk_cap(rc.env, level);
      rc.validate();
      const auto lt0 = Clock::now();
      auto lm = start_manifest("sweep", c, rc);
      auto trained = run_training(rc, root / sub);
      Environment env(rc.env);
      const auto r = evaluate(DdmacPolicy(trained.agents, rc.env), env, eval_n, rc.seed);
      auto files = io::write_eval_report(root / sub, "ddmac", r);
      lm.outputs = trained.files;
      lm.outputs.insert(lm.outputs.end(), files.begin(), files.end());
      lm.extra = {{"kind", kind}, {"level", level}, {"eval_episodes", eval_n}};
      lm.wall_seconds = seconds_since(lt0);
      lm.write(root / sub);
      auto row = io::summary_row("ddmac", r);
      row.insert(row.begin(), {kind, io::num(level), "ok"});
      combined.row(row);
      entry["status"] = "ok";
      std::cout << kind << " level " << level << ": total " << r.total.mean << "\n";
    } catch (const Error& e) {
      entry["status"] = std::string("failed: ") + e.what();
      std::vector<std::string> row(header.size(), io::kMissing);
      row[0] = kind;
      row[1] = io::num(level);
      row[2] = "failed";
      combined.row(row);
      if (code == kExitOk) code = dynamic_cast<const TrainingError*>(&e) ? kExitTraining : kExitConfig;
      std::cerr << kind << " level " << level << " failed: " << e.what() << "\n";
    }
    m.extra["levels"].push_back(entry);
    // Keep what is done so far visible if a later level dies.
    io::atomic_write(root / "sweep.csv", combined.str());
  }
  m.outputs = {"sweep.csv"};
  if (code != kExitOk) m.status = "partial";
  m.wall_seconds = seconds_since(t0);
  m.write(root);
  return code;
}

int cmd_baseline_search(const Common& c, std::vector<std::string> families, int episodes, int reeval) {
  const auto t0 = Clock::now();
  const RunConfig rc = c.load();
  if (episodes < 1 || reeval < 0) throw ConfigError("episode counts must be positive");
  std::vector<BaselineFamily> fams;
  if (families.empty())
    fams.assign(kAllFamilies.begin(), kAllFamilies.end());
  else
    for (auto const& f : families) fams.push_back(parse_family(f));
  const fs::path dir = c.dir("baseline-search");
  auto m = start_manifest("baseline-search", c, rc);
  const auto grid = BaselineGrid::standard();

  GridResult all;
  io::Csv best(io::best_baseline_header());
  nlohmann::json specs = nlohmann::json::object();
  Environment env(rc.env);
  for (auto f : fams) {
    const auto g = grid_search(f, rc.env, grid, episodes, rc.seed);
    all.table.insert(all.table.end(), g.table.begin(), g.table.end());
    const auto row = std::find_if(g.table.begin(), g.table.end(),
                                  [&](auto const& r) { return r.mean_total == g.best_mean; });
    // Fresh episodes for the winner so selection does not bias its estimate.
    std::pair<double, double> fresh{std::nan(""), std::nan("")};
    if (reeval > 0) fresh = mean_total_cost(BaselinePolicy(g.best, env), env, reeval, rc.seed + 1);
    best.row({std::string(to_string(f)), g.best.describe(), io::num(g.best_mean), io::num(row->stderr_total),
              io::num(fresh.first), io::num(fresh.second)});
    specs[std::string(to_string(f))] = baseline_to_json(g.best);
    std::cout << g.best.describe() << ": " << g.best_mean << "\n";
  }
  io::atomic_write(dir / "grid.csv", io::grid_csv(all));
  io::atomic_write(dir / "best.csv", best.str());
  io::atomic_write(dir / "best_specs.json", specs.dump(2) + "\n");
  m.outputs = {"grid.csv", "best.csv", "best_specs.json"};
  m.extra = {{"episodes", episodes}, {"reeval_episodes", reeval}};
  m.wall_seconds = seconds_since(t0);
  m.write(dir);
  return kExitOk;
}

int cmd_selftest() {
  using Rational = boost::multiprecision::cpp_rational;
  bool ok = true;
  auto line = [&](const std::string& name, bool pass, const std::string& detail) {
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
  };
  const double filt = checks::belief_filter_error(200, 20, 2024);
  line("belief-filter", filt <= 1e-10, "max error " + io::num(filt));
  const double fo = checks::failure_only_risk_error(50, 3, 99);
  line("failure-only-risk", fo <= 1e-12, "max error " + io::num(fo));
  const auto rel = checks::reliability_error(1000, 11);
  line("system-reliability", rel.value <= 1e-12 && rel.sum <= 1e-12,
       "max error " + io::num(rel.value) + ", sum error " + io::num(rel.sum));
  const int bad = checks::table_mismatches();
  line("rate-tables", bad == 0, std::to_string(bad) + " mismatches");
  const double grad = checks::gradient_check(100, 17);
  line("gradients", grad <= 1e-4, "max relative error " + io::num(grad));
  const auto voi = checks::tiny_voi_check<Rational>(10, 2024);
  line("tiny-voi", voi.negative == 0 && voi.argmax_mismatch == 0,
       std::to_string(voi.instances) + " instances, " + std::to_string(voi.negative) + " negative");
  return ok ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inspection and maintenance planning with constrained multi-agent actor-critic"};
  app.require_subcommand(1);
  Common common;
  common.argv.assign(argv, argv + argc);

  auto* train = app.add_subcommand("train", "train DDMAC agents");
  common.add(train, true);

  auto* eval = app.add_subcommand("evaluate", "Monte-Carlo evaluation of a checkpoint or baseline");
  common.add(eval, false);
  std::string checkpoint, baseline;
  int eval_n = 1000;
  bool greedy = false;
  eval->add_option("--checkpoint", checkpoint, "trained networks");
  eval->add_option("--baseline", baseline, "family name, JSON spec or JSON file");
  eval->add_option("-n,--episodes", eval_n, "evaluation episodes");
  eval->add_flag("--greedy", greedy, "take each actor's most likely action");

  auto* sweep = app.add_subcommand("sweep", "train and evaluate over constraint levels");
  common.add(sweep, true);
  std::string kind = "budget";
  std::vector<double> levels;
  int sweep_eval = 1000;
  sweep->add_option("--kind", kind, "budget or risk")->check(CLI::IsMember({"budget", "risk"}));
  sweep->add_option("--levels", levels, "budget fractions or risk multiples of the rebuild cost");
  sweep->add_option("--eval-episodes", sweep_eval, "evaluation episodes per level");

  auto* search = app.add_subcommand("baseline-search", "grid search over heuristic policy families");
  common.add(search, false);
  std::vector<std::string> families;
  int search_n = 200, reeval = 2000;
  search->add_option("--families", families, "families to search (default all)");
  search->add_option("-n,--episodes", search_n, "episodes per candidate");
  search->add_option("--reeval-episodes", reeval, "fresh episodes for each family's winner");

  auto* selftest = app.add_subcommand("selftest", "run the oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(common);
    if (*eval) return cmd_evaluate(common, checkpoint, baseline, eval_n, greedy);
    if (*sweep) return cmd_sweep(common, kind, levels, sweep_eval);
    if (*search) return cmd_baseline_search(common, families, search_n, reeval);
    if (*selftest) return cmd_selftest();
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RangeError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitFailed;
}
