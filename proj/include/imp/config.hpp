#pragma once

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>

#include "imp/baselines.hpp"
#include "imp/ddmac.hpp"
#include "imp/env.hpp"
#include "imp/errors.hpp"

// JSON configuration. Every key is optional; absent keys keep the preset
// default, unknown keys are rejected.
namespace imp {

using Json = nlohmann::json;

namespace detail {

inline void allow_keys(const Json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw ConfigError("unknown key '" + it.key() + "' in " + std::string(where));
}

template <class T>
void read(const Json& j, std::string_view key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(std::string(key)).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
  }
}

// JSON has no infinity; null or a missing cap means unlimited.
inline double read_cap(const Json& j) {
  if (!j.contains("cap") || j["cap"].is_null()) return std::numeric_limits<double>::infinity();
  return j["cap"].get<double>();
}

inline Json cap_json(double cap) { return std::isfinite(cap) ? Json(cap) : Json(nullptr); }

inline std::string_view to_string(CostComponent c) {
  switch (c) {
    case CostComponent::maintenance: return "maintenance";
    case CostComponent::inspection: return "inspection";
    case CostComponent::shutdown: return "shutdown";
    case CostComponent::risk: return "risk";
    case CostComponent::total: return "total";
  }
  return "total";
}

inline CostComponent parse_cost_component(std::string_view s) {
  for (auto c : {CostComponent::maintenance, CostComponent::inspection, CostComponent::shutdown, CostComponent::risk,
                 CostComponent::total})
    if (s == to_string(c)) return c;
  throw ConfigError("unknown cost component '" + std::string(s) + "'");
}

}  // namespace detail

inline Json topology_to_json(const Topology& t) {
  Json types = Json::array();
  for (auto l : t.type_assignment) types.push_back(std::string(to_string(l)));
  return {{"links", t.links}, {"cut_sets", t.cut_sets}, {"types", types}};
}

inline Topology topology_from_json(const Json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "standard") return Topology::standard();
    if (name == "two_parallel_links") return Topology::two_parallel_links();
    throw ConfigError("unknown topology preset '" + name + "'");
  }
  detail::allow_keys(j, "topology", {"links", "cut_sets", "types"});
  Topology t;
  try {
    t.links = j.at("links").get<std::vector<std::vector<std::size_t>>>();
    t.cut_sets = j.at("cut_sets").get<std::vector<std::vector<std::size_t>>>();
    for (auto const& s : j.at("types")) t.type_assignment.push_back(parse_type_label(s.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad topology: ") + e.what());
  }
  return t;
}

inline Json soft_constraint_to_json(const SoftConstraintSpec& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"threshold", s.threshold},
          {"multiplier", s.multiplier},
          {"critical_value", s.critical_value},
          {"chance_component", std::string(detail::to_string(s.chance_component))}};
}

inline SoftConstraintSpec soft_constraint_from_json(const Json& j) {
  detail::allow_keys(j, "soft constraint", {"kind", "threshold", "multiplier", "critical_value", "chance_component"});
  SoftConstraintSpec s;
  std::string kind = std::string(to_string(s.kind)), comp = "total";
  detail::read(j, "kind", kind);
  detail::read(j, "threshold", s.threshold);
  detail::read(j, "multiplier", s.multiplier);
  detail::read(j, "critical_value", s.critical_value);
  detail::read(j, "chance_component", comp);
  s.kind = parse_soft_kind(kind);
  s.chance_component = detail::parse_cost_component(comp);
  return s;
}

inline Json env_to_json(const EnvConfig& c) {
  Json j;
  j["horizon"] = c.horizon;
  j["discount"] = c.discount;
  j["rate_horizon"] = c.rate_horizon;
  j["topology"] = topology_to_json(c.topology);
  j["costs"] = {{"rebuild_cost", c.cost_params.rebuild_cost},
                {"replacement_fraction", c.cost_params.replacement_fraction},
                {"inspection_fraction", c.cost_params.inspection_fraction},
                {"partial_fraction_I", c.cost_params.partial_fraction_I},
                {"partial_fraction_II", c.cost_params.partial_fraction_II},
                {"partial_fraction_III", c.cost_params.partial_fraction_III}};
  j["losses"] = {{"perpetual", c.losses.perpetual}, {"instantaneous", c.losses.instantaneous}};
  Json types = Json::object();
  for (auto const& t : c.types)
    types[std::string(to_string(t.label))] = {
        {"initial_rates", t.initial_rates}, {"final_rates", t.final_rates}, {"failure_probs", t.failure_probs}};
  j["types"] = types;
  j["observation"] = {{"with_inspection", c.observation.with_inspection},
                      {"without_inspection", c.observation.without_inspection}};
  j["shutdown_rule"] = c.shutdown_rule == ShutdownRule::literal ? "literal" : "incremental";
  if (c.budget)
    j["budget"] = {{"cap", detail::cap_json(c.budget->cap)},
                   {"cycle_length", c.budget->cycle_length},
                   {"discounted_accounting", c.budget->discounted_accounting}};
  else
    j["budget"] = nullptr;
  j["soft_constraints"] = Json::array();
  for (auto const& s : c.soft_constraints) j["soft_constraints"].push_back(soft_constraint_to_json(s));
  j["initial_belief"] = c.initial_belief;
  return j;
}

// Applies the keys present in `j` on top of `c`.
inline void apply_env_json(EnvConfig& c, const Json& j) {
  detail::allow_keys(j, "env", {"preset", "horizon", "discount", "rate_horizon", "topology", "costs", "losses",
                                "types", "observation", "shutdown_rule", "budget", "soft_constraints",
                                "initial_belief"});
  if (j.contains("preset")) {
    const auto p = j["preset"].get<std::string>();
    if (p == "standard")
      c = EnvConfig::standard();
    else if (p == "scaled")
      c = EnvConfig::scaled();
    else
      throw ConfigError("unknown env preset '" + p + "'");
  }
  detail::read(j, "horizon", c.horizon);
  detail::read(j, "discount", c.discount);
  detail::read(j, "rate_horizon", c.rate_horizon);
  if (j.contains("topology")) c.topology = topology_from_json(j["topology"]);
  if (j.contains("costs")) {
    const auto& k = j["costs"];
    detail::allow_keys(k, "costs", {"rebuild_cost", "replacement_fraction", "inspection_fraction",
                                    "partial_fraction_I", "partial_fraction_II", "partial_fraction_III"});
    auto& p = c.cost_params;
    detail::read(k, "rebuild_cost", p.rebuild_cost);
    detail::read(k, "replacement_fraction", p.replacement_fraction);
    detail::read(k, "inspection_fraction", p.inspection_fraction);
    detail::read(k, "partial_fraction_I", p.partial_fraction_I);
    detail::read(k, "partial_fraction_II", p.partial_fraction_II);
    detail::read(k, "partial_fraction_III", p.partial_fraction_III);
  }
  if (j.contains("losses")) {
    const auto& k = j["losses"];
    detail::allow_keys(k, "losses", {"perpetual", "instantaneous", "scale"});
    detail::read(k, "perpetual", c.losses.perpetual);
    detail::read(k, "instantaneous", c.losses.instantaneous);
    if (k.contains("scale")) c.losses = c.losses.scaled(k["scale"].get<double>());
  }
  if (j.contains("types")) {
    detail::allow_keys(j["types"], "types", {"I", "II", "III"});
    for (auto it = j["types"].begin(); it != j["types"].end(); ++it) {
      const auto label = parse_type_label(it.key());
      detail::allow_keys(it.value(), "type", {"initial_rates", "final_rates", "failure_probs"});
      auto found = std::find_if(c.types.begin(), c.types.end(), [&](auto const& t) { return t.label == label; });
      if (found == c.types.end()) {
        c.types.push_back(default_type(label));
        found = std::prev(c.types.end());
      }
      detail::read(it.value(), "initial_rates", found->initial_rates);
      detail::read(it.value(), "final_rates", found->final_rates);
      detail::read(it.value(), "failure_probs", found->failure_probs);
    }
  }
  if (j.contains("observation")) {
    detail::allow_keys(j["observation"], "observation", {"with_inspection", "without_inspection"});
    detail::read(j["observation"], "with_inspection", c.observation.with_inspection);
    detail::read(j["observation"], "without_inspection", c.observation.without_inspection);
  }
  if (j.contains("shutdown_rule")) {
    const auto r = j["shutdown_rule"].get<std::string>();
    if (r == "literal")
      c.shutdown_rule = ShutdownRule::literal;
    else if (r == "incremental")
      c.shutdown_rule = ShutdownRule::incremental;
    else
      throw ConfigError("unknown shutdown rule '" + r + "'");
  }
  if (j.contains("budget")) {
    if (j["budget"].is_null()) {
      c.budget.reset();
    } else {
      const auto& k = j["budget"];
      detail::allow_keys(k, "budget", {"cap", "cycle_length", "discounted_accounting"});
      BudgetSpec b = c.budget.value_or(BudgetSpec{});
      b.cap = detail::read_cap(k);
      detail::read(k, "cycle_length", b.cycle_length);
      detail::read(k, "discounted_accounting", b.discounted_accounting);
      c.budget = b;
    }
  }
  if (j.contains("soft_constraints")) {
    c.soft_constraints.clear();
    for (auto const& s : j["soft_constraints"]) c.soft_constraints.push_back(soft_constraint_from_json(s));
  }
  detail::read(j, "initial_belief", c.initial_belief);
}

inline Json train_to_json(const TrainConfig& t) {
  return {{"episodes", t.episodes},
          {"batch_size", t.batch_size},
          {"replay_capacity", t.replay_capacity},
          {"epsilon_start", t.epsilon_start},
          {"epsilon_end", t.epsilon_end},
          {"exploration_episodes", t.exploration_episodes},
          {"critic_lr", t.critic_lr},
          {"critic_lr_final", t.critic_lr_final},
          {"actor_lr", t.actor_lr},
          {"actor_lr_final", t.actor_lr_final},
          {"lr_switch_episode", t.lr_switch_episode},
          {"dual_lr", t.dual_lr},
          {"importance_clip", t.importance_clip},
          {"updates_per_step", t.updates_per_step},
          {"actor_hidden", t.actor_hidden},
          {"critic_hidden", t.critic_hidden},
          {"seed", t.seed}};
}

inline void apply_train_json(TrainConfig& t, const Json& j) {
  detail::allow_keys(j, "train",
                     {"preset", "episodes", "batch_size", "replay_capacity", "epsilon_start", "epsilon_end",
                      "exploration_episodes", "critic_lr", "critic_lr_final", "actor_lr", "actor_lr_final",
                      "lr_switch_episode", "dual_lr", "importance_clip", "updates_per_step", "actor_hidden",
                      "critic_hidden", "seed"});
  if (j.contains("preset")) {
    const auto p = j["preset"].get<std::string>();
    if (p == "standard")
      t = TrainConfig{};
    else if (p == "scaled")
      t = TrainConfig::scaled();
    else
      throw ConfigError("unknown train preset '" + p + "'");
  }
  detail::read(j, "episodes", t.episodes);
  detail::read(j, "batch_size", t.batch_size);
  detail::read(j, "replay_capacity", t.replay_capacity);
  detail::read(j, "epsilon_start", t.epsilon_start);
  detail::read(j, "epsilon_end", t.epsilon_end);
  detail::read(j, "exploration_episodes", t.exploration_episodes);
  detail::read(j, "critic_lr", t.critic_lr);
  detail::read(j, "critic_lr_final", t.critic_lr_final);
  detail::read(j, "actor_lr", t.actor_lr);
  detail::read(j, "actor_lr_final", t.actor_lr_final);
  detail::read(j, "lr_switch_episode", t.lr_switch_episode);
  detail::read(j, "dual_lr", t.dual_lr);
  detail::read(j, "importance_clip", t.importance_clip);
  detail::read(j, "updates_per_step", t.updates_per_step);
  detail::read(j, "actor_hidden", t.actor_hidden);
  detail::read(j, "critic_hidden", t.critic_hidden);
  detail::read(j, "seed", t.seed);
}

inline Json baseline_to_json(const BaselineSpec& b) {
  Json map = Json::array();
  for (auto a : b.map) map.push_back(std::string(to_string(a)));
  return {{"family", std::string(to_string(b.family))},
          {"partial_age", b.partial_age},
          {"replace_age", b.replace_age},
          {"interval", b.interval},
          {"threshold", b.threshold},
          {"map", map},
          {"n_cp", b.n_cp}};
}

inline BaselineSpec baseline_from_json(const Json& j) {
  detail::allow_keys(j, "baseline", {"family", "partial_age", "replace_age", "interval", "threshold", "map", "n_cp"});
  BaselineSpec b;
  std::string family = "FR";
  detail::read(j, "family", family);
  b.family = parse_family(family);
  detail::read(j, "partial_age", b.partial_age);
  detail::read(j, "replace_age", b.replace_age);
  detail::read(j, "interval", b.interval);
  detail::read(j, "threshold", b.threshold);
  detail::read(j, "n_cp", b.n_cp);
  if (j.contains("map")) {
    const auto& m = j["map"];
    if (!m.is_array() || m.size() != kNumDamageStates) throw ConfigError("maintenance map needs 4 entries");
    for (std::size_t k = 0; k < kNumDamageStates; ++k) b.map[k] = parse_maintenance(m[k].get<std::string>());
  }
  b.validate();
  return b;
}

// Whole run configuration as read from a file.
struct RunConfig {
  EnvConfig env = EnvConfig::standard();
  TrainConfig train;
  std::uint64_t seed = 0;

  Json to_json() const { return {{"env", env_to_json(env)}, {"train", train_to_json(train)}, {"seed", seed}}; }

  void apply(const Json& j) {
    detail::allow_keys(j, "config", {"env", "train", "seed"});
    if (j.contains("env")) apply_env_json(env, j["env"]);
    if (j.contains("train")) apply_train_json(train, j["train"]);
    detail::read(j, "seed", seed);
  }

  void validate() const {
    env.validate();
    train.validate();
  }
};

inline Json parse_json_text(const std::string& text, std::string_view what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse " + std::string(what) + ": " + e.what());
  }
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

inline RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  rc.apply(load_json_file(path));
  return rc;
}

}  // namespace imp
