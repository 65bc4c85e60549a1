#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "imp/baselines.hpp"
#include "imp/ddmac.hpp"
#include "imp/errors.hpp"
#include "imp/evaluate.hpp"

namespace imp::io {

namespace fs = std::filesystem;

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr const char* kOutputRootVar = "IMP_OUTPUT_ROOT";
inline constexpr const char* kMissing = "NA";

inline fs::path output_root() {
  const char* env = std::getenv(kOutputRootVar);
  return env && *env ? fs::path(env) : fs::path("runs");
}

// Writes to a sibling temporary file and renames it over `path`.
inline void atomic_write(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

// Round-trip decimal representation.
inline std::string num(double x) {
  if (std::isnan(x)) return kMissing;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string num(std::optional<double> x) { return x ? num(*x) : std::string(kMissing); }

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : cols_(header.size()) { line(header); }

  Csv& row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw DomainError("CSV row width does not match header");
    line(cells);
    return *this;
  }

  const std::string& str() const { return out_; }

 private:
  void line(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out_ += ',';
      const auto& c = cells[k];
      if (c.find_first_of(",\"\n") != std::string::npos) {
        out_ += '"';
        for (char ch : c) {
          if (ch == '"') out_ += '"';
          out_ += ch;
        }
        out_ += '"';
      } else {
        out_ += c;
      }
    }
    out_ += '\n';
  }

  std::size_t cols_;
  std::string out_;
};

// One row per policy; several reports can share a file.
inline std::vector<std::string> summary_header() {
  return {"policy",           "n_episodes",     "discount",      "total_mean",       "total_se",
          "maintenance_mean", "maintenance_se", "inspection_mean", "inspection_se", "shutdown_mean",
          "shutdown_se",      "risk_mean",      "risk_se"};
}

inline std::vector<std::string> summary_row(std::string_view policy, const EvalReport& r) {
  return {std::string(policy),      std::to_string(r.episodes),   num(r.discount),
          num(r.total.mean),        num(r.total.stderr_),         num(r.maintenance.mean),
          num(r.maintenance.stderr_), num(r.inspection.mean),     num(r.inspection.stderr_),
          num(r.shutdown.mean),     num(r.shutdown.stderr_),      num(r.risk.mean),
          num(r.risk.stderr_)};
}

// Combined constraint-sweep table: one summary row per level.
inline std::vector<std::string> sweep_header() {
  auto h = summary_header();
  h.insert(h.begin(), {"kind", "level", "status"});
  return h;
}

// Winner of each baseline family, with its grid estimate and a fresh one.
inline std::vector<std::string> best_baseline_header() {
  return {"family", "candidate", "grid_mean", "grid_se", "eval_mean", "eval_se"};
}

inline std::string summary_csv(std::string_view policy, const EvalReport& r) {
  Csv c(summary_header());
  c.row(summary_row(policy, r));
  return c.str();
}

inline std::string trajectory_csv(const EvalReport& r) {
  Csv c({"step", "pr_fs_now", "pr_fs_next", "c_maintenance", "c_inspection", "c_shutdown", "c_damage",
         "gated_fraction"});
  for (std::size_t t = 0; t < r.failure_prob_now.size(); ++t) {
    const auto& s = r.step_costs[t];
    c.row({std::to_string(t), num(r.failure_prob_now[t]), num(r.failure_prob_next[t]), num(s.maintenance),
           num(s.inspection), num(s.shutdown), num(s.damage), num(r.gated_fraction[t])});
  }
  return c.str();
}

inline std::string action_frequency_csv(const EvalReport& r) {
  Csv c({"component", "step", "action", "frequency"});
  for (std::size_t i = 0; i < r.action_frequency.size(); ++i)
    for (std::size_t t = 0; t < r.action_frequency[i].size(); ++t)
      for (std::size_t a = 0; a < kNumComponentActions; ++a)
        c.row({std::to_string(i), std::to_string(t), std::string(to_string(action_from_index(a))),
               num(r.action_frequency[i][t][a])});
  return c.str();
}

inline std::string constraints_csv(const EvalReport& r) {
  Csv c({"index", "kind", "threshold", "return_mean", "return_se", "satisfied_fraction"});
  for (std::size_t m = 0; m < r.constraints.size(); ++m) {
    const auto& s = r.constraints[m];
    c.row({std::to_string(m), std::string(to_string(s.spec.kind)), num(s.spec.threshold),
           num(s.episode_return.mean), num(s.episode_return.stderr_), num(s.satisfied_fraction)});
  }
  return c.str();
}

inline std::vector<std::string> write_eval_report(const fs::path& dir, std::string_view policy, const EvalReport& r) {
  const std::vector<std::pair<std::string, std::string>> files{{"summary.csv", summary_csv(policy, r)},
                                                               {"trajectory.csv", trajectory_csv(r)},
                                                               {"action_frequency.csv", action_frequency_csv(r)},
                                                               {"constraints.csv", constraints_csv(r)}};
  std::vector<std::string> written;
  for (auto const& [name, body] : files) {
    atomic_write(dir / name, body);
    written.push_back(name);
  }
  return written;
}

inline std::vector<std::string> training_log_header(std::size_t n_constraints) {
  std::vector<std::string> h{"episode", "total", "maintenance", "inspection", "shutdown", "risk", "epsilon"};
  for (std::size_t m = 0; m < n_constraints; ++m) h.push_back("lambda_" + std::to_string(m));
  for (std::size_t m = 0; m < n_constraints; ++m) h.push_back("constraint_return_" + std::to_string(m));
  return h;
}

inline std::vector<std::string> training_log_row(const EpisodeLog& e) {
  std::vector<std::string> r{std::to_string(e.episode), num(e.total),    num(e.maintenance), num(e.inspection),
                             num(e.shutdown),           num(e.risk),     num(e.epsilon)};
  for (double l : e.lambda) r.push_back(num(l));
  for (double g : e.constraint_returns) r.push_back(num(g));
  return r;
}

inline std::string training_log_csv(std::span<const EpisodeLog> log, std::size_t n_constraints) {
  Csv c(training_log_header(n_constraints));
  for (auto const& e : log) c.row(training_log_row(e));
  return c.str();
}

inline std::string grid_csv(const GridResult& g) {
  Csv c({"family", "candidate", "partial_age", "replace_age", "interval", "threshold", "map", "n_cp", "mean_total",
         "se_total"});
  for (auto const& row : g.table) {
    const auto& s = row.spec;
    std::string map;
    for (auto a : s.map) {
      if (!map.empty()) map += '|';
      map += to_string(a);
    }
    c.row({std::string(to_string(s.family)), s.describe(), std::to_string(s.partial_age),
           std::to_string(s.replace_age), std::to_string(s.interval), num(s.threshold), map,
           std::to_string(s.n_cp), num(row.mean_total), num(row.stderr_total)});
  }
  return c.str();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

#ifndef IMP_VERSION
#define IMP_VERSION "0.1.0"
#endif

// Run manifest written next to every artifact set.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::string started_at = utc_timestamp();
  double wall_seconds = 0.0;
  std::string status = "ok";
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"command", command},
            {"argv", argv},
            {"version", IMP_VERSION},
            {"csv_schema_version", kCsvSchemaVersion},
            {"seed", seed},
            {"config", config},
            {"outputs", outputs},
            {"started_at", started_at},
            {"wall_seconds", wall_seconds},
            {"status", status},
            {"extra", extra}};
  }

  void write(const fs::path& dir) const { atomic_write(dir / "manifest.json", to_json().dump(2) + "\n"); }
};

}  // namespace imp::io
