#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "imp/action.hpp"
#include "imp/env.hpp"
#include "imp/errors.hpp"
#include "imp/system.hpp"

namespace imp {

enum class BaselineFamily { FR, APM, API_CBM, TPI_CBM, RBI_CBM, TPI_CBM_CP, RBI_CBM_CP };

inline constexpr std::array<BaselineFamily, 7> kAllFamilies{
    BaselineFamily::FR,      BaselineFamily::APM,        BaselineFamily::API_CBM,   BaselineFamily::TPI_CBM,
    BaselineFamily::RBI_CBM, BaselineFamily::TPI_CBM_CP, BaselineFamily::RBI_CBM_CP};

inline std::string_view to_string(BaselineFamily f) {
  switch (f) {
    case BaselineFamily::FR: return "FR";
    case BaselineFamily::APM: return "APM";
    case BaselineFamily::API_CBM: return "API-CBM";
    case BaselineFamily::TPI_CBM: return "TPI-CBM";
    case BaselineFamily::RBI_CBM: return "RBI-CBM";
    case BaselineFamily::TPI_CBM_CP: return "TPI-CBM-CP";
    case BaselineFamily::RBI_CBM_CP: return "RBI-CBM-CP";
  }
  return "?";
}

inline BaselineFamily parse_family(std::string_view s) {
  std::string norm(s);
  std::replace(norm.begin(), norm.end(), '_', '-');
  std::transform(norm.begin(), norm.end(), norm.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto f : kAllFamilies)
    if (norm == to_string(f)) return f;
  throw ConfigError("unknown baseline family '" + std::string(s) + "'");
}

inline bool uses_inspections(BaselineFamily f) { return f != BaselineFamily::FR && f != BaselineFamily::APM; }
inline bool uses_priority(BaselineFamily f) {
  return f == BaselineFamily::TPI_CBM_CP || f == BaselineFamily::RBI_CBM_CP;
}
inline bool risk_triggered(BaselineFamily f) {
  return f == BaselineFamily::RBI_CBM || f == BaselineFamily::RBI_CBM_CP;
}

// Observed damage state (intact..severe) -> maintenance.
using MaintenanceMap = std::array<MaintenanceAction, kNumDamageStates>;

struct BaselineSpec {
  BaselineFamily family = BaselineFamily::FR;
  int partial_age = 1;   // APM
  int replace_age = 1;   // APM
  int interval = 1;      // API / TPI
  double threshold = 0.01;  // RBI, on system failure probability
  MaintenanceMap map{MaintenanceAction::no_repair, MaintenanceAction::no_repair, MaintenanceAction::partial_repair,
                     MaintenanceAction::replace};
  int n_cp = 1;  // CP variants

  void validate() const {
    if (family == BaselineFamily::APM && (partial_age < 1 || replace_age < 1))
      throw ConfigError("maintenance ages must be >= 1");
    if ((family == BaselineFamily::API_CBM || family == BaselineFamily::TPI_CBM ||
         family == BaselineFamily::TPI_CBM_CP) &&
        interval < 1)
      throw ConfigError("inspection interval must be >= 1");
    if (risk_triggered(family) && !(threshold > 0.0 && threshold < 1.0))
      throw ConfigError("risk threshold must lie in (0,1)");
    if (uses_priority(family) && n_cp < 1) throw ConfigError("n_cp must be >= 1");
  }

  // Compact human-readable parameter string, also used as a CSV key.
  std::string describe() const {
    std::string s(to_string(family));
    auto map_str = [&] {
      std::string m;
      for (auto a : map) m += a == MaintenanceAction::no_repair ? 'N' : a == MaintenanceAction::partial_repair ? 'P' : 'R';
      return m;
    };
    switch (family) {
      case BaselineFamily::FR: break;
      case BaselineFamily::APM:
        s += " partial_age=" + std::to_string(partial_age) + " replace_age=" + std::to_string(replace_age);
        break;
      case BaselineFamily::API_CBM:
      case BaselineFamily::TPI_CBM:
        s += " interval=" + std::to_string(interval) + " map=" + map_str();
        break;
      case BaselineFamily::TPI_CBM_CP:
        s += " interval=" + std::to_string(interval) + " map=" + map_str() + " n_cp=" + std::to_string(n_cp);
        break;
      case BaselineFamily::RBI_CBM: s += " threshold=" + std::to_string(threshold) + " map=" + map_str(); break;
      case BaselineFamily::RBI_CBM_CP:
        s += " threshold=" + std::to_string(threshold) + " map=" + map_str() + " n_cp=" + std::to_string(n_cp);
        break;
    }
    return s;
  }
};

// Failure probabilities one step ahead if nothing is done. Current failure
// beliefs are 0 or 1 since failure announces itself, so ranking and risk
// triggers look at the next step.
inline std::vector<ComponentBelief> predicted_if_idle(const EnvState& s, std::span<const ComponentModel> models) {
  std::vector<ComponentBelief> out(s.beliefs.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = predict(s.beliefs.components[i], MaintenanceAction::no_repair, models[i]);
  return out;
}

inline double system_failure_risk(const EnvState& s, std::span<const ComponentModel> models, const Topology& topo) {
  const auto pred = predicted_if_idle(s, models);
  return system_event_distribution(std::span<const ComponentBelief>(pred), topo)[index_of(SystemEvent::Fs)];
}

// Component indices sorted by decreasing next-step failure probability,
// ties by index.
inline std::vector<std::size_t> priority_order(const EnvState& s, std::span<const ComponentModel> models) {
  const auto pred = predicted_if_idle(s, models);
  std::vector<std::size_t> idx(pred.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return pred[a].failure_prob() > pred[b].failure_prob(); });
  return idx;
}

inline bool is_failed(const ComponentBelief& b) { return b.failure_prob() >= 1.0 - 1e-12; }

inline JointAction decide(const BaselineSpec& spec, const EnvState& s, std::span<const ComponentModel> models,
                          const Topology& topo) {
  const std::size_t n = s.beliefs.size();
  std::vector<MaintenanceAction> maint(n, MaintenanceAction::no_repair);
  std::vector<bool> inspect(n, false);
  const int t = s.t();

  switch (spec.family) {
    case BaselineFamily::FR: break;
    case BaselineFamily::APM:
      for (std::size_t i = 0; i < n; ++i) {
        const int age = s.ages[i];
        if (age > 0 && age % spec.replace_age == 0)
          maint[i] = MaintenanceAction::replace;
        else if (age > 0 && age % spec.partial_age == 0)
          maint[i] = MaintenanceAction::partial_repair;
      }
      break;
    default: {
      // Condition-based maintenance from the previous inspection.
      for (std::size_t i = 0; i < n; ++i)
        if (auto const& obs = s.last_inspected[i]; obs && *obs != DamageState::failed)
          maint[i] = spec.map[index_of(*obs)];
      if (spec.family == BaselineFamily::API_CBM) {
        for (std::size_t i = 0; i < n; ++i) inspect[i] = s.ages[i] > 0 && s.ages[i] % spec.interval == 0;
      } else {
        const bool due = risk_triggered(spec.family) ? system_failure_risk(s, models, topo) > spec.threshold
                                                     : t > 0 && t % spec.interval == 0;
        if (due) {
          if (uses_priority(spec.family)) {
            const auto order = priority_order(s, models);
            for (std::size_t k = 0; k < std::min<std::size_t>(n, static_cast<std::size_t>(spec.n_cp)); ++k)
              inspect[order[k]] = true;
          } else {
            std::fill(inspect.begin(), inspect.end(), true);
          }
        }
      }
      break;
    }
  }

  JointAction a(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (is_failed(s.beliefs.components[i])) maint[i] = MaintenanceAction::replace;
    a[i] = make_action(maint[i], inspect[i] && maint[i] != MaintenanceAction::replace);
  }
  return a;
}

inline JointAction decide(const BaselineSpec& spec, const EnvState& s, const Environment& env) {
  return decide(spec, s, env.models(), env.config().topology);
}

// Deterministic policy wrapper for rollouts.
class BaselinePolicy {
 public:
  BaselinePolicy(BaselineSpec spec, const Environment& env) : spec_(spec), env_(&env) { spec_.validate(); }

  std::vector<ActionDistribution> operator()(const EnvState& s) const {
    const auto a = decide(spec_, s, *env_);
    std::vector<ActionDistribution> d;
    d.reserve(a.size());
    for (auto x : a) d.push_back(one_hot(x));
    return d;
  }

  const BaselineSpec& spec() const { return spec_; }

 private:
  BaselineSpec spec_;
  const Environment* env_;
};

struct BaselineGrid {
  std::vector<int> ages{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 20, 25, 50};
  std::vector<double> thresholds;
  std::vector<int> n_cp;  // empty: 1..number of components
  // Only maps whose severity never decreases with the observed state.
  bool monotone_maps_only = true;

  static BaselineGrid standard() {
    BaselineGrid g;
    for (int k = 0; k < 10; ++k) g.thresholds.push_back(std::pow(10.0, -4.0 + 3.0 * k / 9.0));
    return g;
  }

  std::vector<MaintenanceMap> maps() const {
    std::vector<MaintenanceMap> out;
    constexpr std::array<MaintenanceAction, 3> opts{MaintenanceAction::no_repair, MaintenanceAction::partial_repair,
                                                    MaintenanceAction::replace};
    for (int code = 0; code < 81; ++code) {
      MaintenanceMap m;
      int c = code;
      for (auto& x : m) {
        x = opts[static_cast<std::size_t>(c % 3)];
        c /= 3;
      }
      bool ok = true;
      if (monotone_maps_only)
        for (std::size_t k = 1; k < m.size(); ++k) ok = ok && static_cast<int>(m[k]) >= static_cast<int>(m[k - 1]);
      if (ok) out.push_back(m);
    }
    return out;
  }

  std::vector<BaselineSpec> candidates(BaselineFamily family, std::size_t n_components) const {
    std::vector<BaselineSpec> out;
    BaselineSpec base;
    base.family = family;
    std::vector<int> cps = n_cp;
    if (cps.empty())
      for (std::size_t k = 1; k <= n_components; ++k) cps.push_back(static_cast<int>(k));
    switch (family) {
      case BaselineFamily::FR: out.push_back(base); break;
      case BaselineFamily::APM:
        for (int p : ages)
          for (int r : ages) {
            base.partial_age = p;
            base.replace_age = r;
            out.push_back(base);
          }
        break;
      case BaselineFamily::API_CBM:
      case BaselineFamily::TPI_CBM:
      case BaselineFamily::TPI_CBM_CP:
        for (int k : ages)
          for (auto const& m : maps())
            for (int c : uses_priority(family) ? cps : std::vector<int>{1}) {
              base.interval = k;
              base.map = m;
              base.n_cp = c;
              out.push_back(base);
            }
        break;
      case BaselineFamily::RBI_CBM:
      case BaselineFamily::RBI_CBM_CP:
        for (double th : thresholds)
          for (auto const& m : maps())
            for (int c : uses_priority(family) ? cps : std::vector<int>{1}) {
              base.threshold = th;
              base.map = m;
              base.n_cp = c;
              out.push_back(base);
            }
        break;
    }
    return out;
  }
};

struct GridRow {
  BaselineSpec spec;
  double mean_total = 0.0;
  double stderr_total = 0.0;
};

struct GridResult {
  BaselineSpec best;
  double best_mean = 0.0;
  std::vector<GridRow> table;
};

// Mean and standard error of the discounted total cost over episodes
// 0..n-1 of `seed`. Every candidate sees the same environment draws.
template <Policy P>
std::pair<double, double> mean_total_cost(P&& policy, Environment& env, int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("need at least one episode");
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double c = rollout(policy, env, seed, static_cast<std::uint64_t>(k)).ledger.total();
    sum += c;
    sq += c * c;
  }
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sq - n * mean * mean) / (n - 1)) : 0.0;
  return {mean, n > 1 ? std::sqrt(var / n) : std::nan("")};
}

inline GridResult grid_search(std::span<const BaselineSpec> candidates, const EnvConfig& config, int episodes,
                              std::uint64_t seed) {
  if (candidates.empty()) throw ConfigError("empty baseline grid");
  Environment env(config);
  GridResult res;
  res.table.reserve(candidates.size());
  for (auto const& c : candidates) {
    const auto [mean, se] = mean_total_cost(BaselinePolicy(c, env), env, episodes, seed);
    res.table.push_back({c, mean, se});
  }
  const auto best = std::min_element(res.table.begin(), res.table.end(),
                                     [](const GridRow& a, const GridRow& b) { return a.mean_total < b.mean_total; });
  res.best = best->spec;
  res.best_mean = best->mean_total;
  return res;
}

inline GridResult grid_search(BaselineFamily family, const EnvConfig& config, const BaselineGrid& grid, int episodes,
                              std::uint64_t seed) {
  const auto cands = grid.candidates(family, config.num_components());
  return grid_search(cands, config, episodes, seed);
}

}  // namespace imp
