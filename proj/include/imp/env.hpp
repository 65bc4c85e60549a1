#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "imp/action.hpp"
#include "imp/belief.hpp"
#include "imp/constraints.hpp"
#include "imp/costs.hpp"
#include "imp/deterioration.hpp"
#include "imp/errors.hpp"
#include "imp/rng.hpp"
#include "imp/system.hpp"

namespace imp {

// Cost parameters shared by every component, in money units.
struct CostParameters {
  double rebuild_cost = 1.0;
  double replacement_fraction = 0.10;  // of the rebuild cost
  double inspection_fraction = 0.015;  // of the replacement cost
  double partial_fraction_I = 0.075;   // of the replacement cost, per type
  double partial_fraction_II = 0.15;
  double partial_fraction_III = 0.10;

  ComponentCosts for_type(TypeLabel t) const {
    const double rep = replacement_fraction * rebuild_cost;
    const double frac = t == TypeLabel::I ? partial_fraction_I
                        : t == TypeLabel::II ? partial_fraction_II
                                             : partial_fraction_III;
    return {rep, frac * rep, inspection_fraction * rep};
  }
};

struct EnvConfig {
  int horizon = 50;
  double discount = 0.975;
  int rate_horizon = 50;
  Topology topology = Topology::standard();
  CostParameters cost_params;
  std::vector<DeteriorationType> types{default_type(TypeLabel::I), default_type(TypeLabel::II),
                                       default_type(TypeLabel::III)};
  ObservationModel observation = ObservationModel::standard();
  LossTable losses = LossTable::standard();
  ShutdownRule shutdown_rule = ShutdownRule::literal;
  std::optional<BudgetSpec> budget;
  std::vector<SoftConstraintSpec> soft_constraints;
  StateVector initial_belief = point_mass(DamageState::intact);

  std::size_t num_components() const { return topology.num_components(); }

  const DeteriorationType& type(TypeLabel l) const {
    for (auto const& t : types)
      if (t.label == l) return t;
    throw ConfigError("deterioration type " + std::string(to_string(l)) + " not configured");
  }

  std::vector<ComponentModel> build_models() const {
    std::vector<ComponentModel> out;
    out.reserve(num_components());
    for (auto l : topology.type_assignment)
      out.emplace_back(type(l), rate_horizon, cost_params.for_type(l));
    return out;
  }

  void validate() const {
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("discount must lie in (0,1]");
    if (rate_horizon < 1) throw ConfigError("rate_horizon must be >= 1");
    topology.validate();
    for (auto const& t : types) t.validate();
    observation.validate();
    losses.validate();
    if (budget) budget->validate();
    for (auto const& s : soft_constraints) s.validate();
    if (!on_simplex(initial_belief, 1e-12)) throw ConfigError("initial belief is not a distribution");
  }

  static EnvConfig standard() { return {}; }

  // Desk-scale variant: four components in two parallel links, 20 steps.
  static EnvConfig scaled() {
    EnvConfig c;
    c.horizon = 20;
    c.rate_horizon = 20;
    c.topology = Topology::two_parallel_links();
    return c;
  }
};

// Observable side of the state as seen by policies and stored in replay.
struct DecisionState {
  std::vector<StateVector> beliefs;
  std::vector<int> taus;
  int t = 0;
  double budget_remaining = 1.0;

  bool operator==(const DecisionState&) const = default;
};

// Network input: beliefs, tau / rate_horizon per component, t / T, remaining
// budget fraction.
inline std::size_t encoded_size(std::size_t n_components) { return n_components * (kNumStates + 1) + 2; }

inline void encode(const DecisionState& s, int rate_horizon, int horizon, std::span<double> out) {
  const std::size_t n = s.beliefs.size();
  std::size_t k = 0;
  for (auto const& b : s.beliefs)
    for (double p : b) out[k++] = p;
  for (std::size_t i = 0; i < n; ++i) out[k++] = static_cast<double>(s.taus[i]) / rate_horizon;
  out[k++] = static_cast<double>(s.t) / horizon;
  out[k++] = s.budget_remaining;
}

inline std::vector<double> encode(const DecisionState& s, int rate_horizon, int horizon) {
  std::vector<double> v(encoded_size(s.beliefs.size()));
  encode(s, rate_horizon, horizon, v);
  return v;
}

struct ReplayTuple {
  DecisionState state;
  JointAction action;
  std::vector<double> behavior_probs;  // mu_i(a_i) per agent
  double cost = 0.0;                   // expected step cost c_b
  std::vector<double> soft_g;          // g_{s,m}
  DecisionState next;
  bool terminal = false;

  bool operator==(const ReplayTuple&) const = default;
};

namespace detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("truncated replay record");
  return v;
}

inline void write_state(std::ostream& os, const DecisionState& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.beliefs.size()));
  for (auto const& b : s.beliefs)
    for (double p : b) write_pod(os, p);
  for (int tau : s.taus) write_pod<std::int32_t>(os, tau);
  write_pod<std::int32_t>(os, s.t);
  write_pod(os, s.budget_remaining);
}

inline DecisionState read_state(std::istream& is) {
  DecisionState s;
  const auto n = read_pod<std::uint32_t>(is);
  s.beliefs.resize(n);
  for (auto& b : s.beliefs)
    for (double& p : b) p = read_pod<double>(is);
  s.taus.resize(n);
  for (int& tau : s.taus) tau = read_pod<std::int32_t>(is);
  s.t = read_pod<std::int32_t>(is);
  s.budget_remaining = read_pod<double>(is);
  return s;
}

}  // namespace detail

// Binary record, native endianness; used for replay dumps.
inline void write_tuple(std::ostream& os, const ReplayTuple& r) {
  detail::write_state(os, r.state);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(r.action.size()));
  for (auto a : r.action) detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(a));
  for (double m : r.behavior_probs) detail::write_pod(os, m);
  detail::write_pod(os, r.cost);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(r.soft_g.size()));
  for (double g : r.soft_g) detail::write_pod(os, g);
  detail::write_state(os, r.next);
  detail::write_pod<std::uint8_t>(os, r.terminal ? 1 : 0);
}

inline ReplayTuple read_tuple(std::istream& is) {
  ReplayTuple r;
  r.state = detail::read_state(is);
  const auto n = detail::read_pod<std::uint32_t>(is);
  r.action.resize(n);
  for (auto& a : r.action) a = action_from_index(detail::read_pod<std::uint8_t>(is));
  r.behavior_probs.resize(n);
  for (double& m : r.behavior_probs) m = detail::read_pod<double>(is);
  r.cost = detail::read_pod<double>(is);
  r.soft_g.resize(detail::read_pod<std::uint32_t>(is));
  for (double& g : r.soft_g) g = detail::read_pod<double>(is);
  r.next = detail::read_state(is);
  r.terminal = detail::read_pod<std::uint8_t>(is) != 0;
  return r;
}

// Full simulator state of one episode.
struct EnvState {
  BeliefMatrix beliefs;
  std::vector<DamageState> hidden;
  std::vector<int> ages;  // steps since last replacement
  // Max-posterior state of components inspected at the previous step.
  std::vector<std::optional<DamageState>> last_inspected;
  BudgetState budget;
  CostLedger ledger;
  std::vector<double> soft_returns;

  int t() const { return beliefs.time; }
};

struct StepOutcome {
  ReplayTuple tuple;
  JointAction proposed;
  bool gated = false;
  StepCosts costs;
  EventProbs events_now{};
  EventProbs events_next{};
  std::vector<int> observations;
};

// Episodic simulator. Hidden transitions and observations consume a fixed
// number of uniforms per step from a stream keyed by (seed, episode), so two
// policies run on the same key see common random numbers.
class Environment {
 public:
  explicit Environment(EnvConfig config) : config_(std::move(config)), models_(config_.build_models()) {
    config_.validate();
  }

  const EnvConfig& config() const { return config_; }
  const std::vector<ComponentModel>& models() const { return models_; }
  std::size_t num_components() const { return models_.size(); }

  EnvState reset(std::uint64_t seed, std::uint64_t episode = 0) {
    rng_ = Rng(seed, "env", episode);
    EnvState s;
    const std::size_t n = num_components();
    s.beliefs.time = 0;
    s.beliefs.components.resize(n);
    s.hidden.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.beliefs.components[i] = {config_.initial_belief, 1, static_cast<int>(i)};
      s.hidden[i] = state_at(sample_discrete(config_.initial_belief, rng_.uniform()));
    }
    s.ages.assign(n, 0);
    s.last_inspected.assign(n, std::nullopt);
    s.ledger = CostLedger(config_.discount);
    s.soft_returns.assign(config_.soft_constraints.size(), 0.0);
    return s;
  }

  // Repositions the random stream without touching any episode state.
  void reseed(std::uint64_t seed, std::string_view stream, std::uint64_t index) { rng_ = Rng(seed, stream, index); }

  DecisionState decision_state(const EnvState& s) const {
    DecisionState d;
    d.beliefs.reserve(num_components());
    d.taus.reserve(num_components());
    for (auto const& b : s.beliefs.components) {
      d.beliefs.push_back(b.probs);
      d.taus.push_back(b.tau);
    }
    d.t = s.t();
    d.budget_remaining = config_.budget ? s.budget.remaining_fraction(*config_.budget) : 1.0;
    return d;
  }

  std::vector<double> encode_state(const EnvState& s) const {
    return encode(decision_state(s), config_.rate_horizon, config_.horizon);
  }

  StepOutcome step(EnvState& s, const JointAction& proposed) {
    const int t = s.t();
    const std::size_t n = num_components();
    if (t >= config_.horizon) throw LifecycleError("episode already reached its horizon");
    if (proposed.size() != n) throw DomainError("joint action size does not match component count");

    StepOutcome out;
    out.proposed = proposed;
    out.tuple.state = decision_state(s);

    // Budget gate.
    JointAction action = proposed;
    double counted = 0.0;
    if (config_.budget) {
      const auto [cm, ci] = action_costs(proposed, models_);
      const double g = step_expenditure(cm, ci, t, config_.discount, *config_.budget);
      auto gated = gate(proposed, s.budget, g, *config_.budget);
      out.gated = !gated.costs_allowed;
      action = std::move(gated.action);
      counted = gated.costs_allowed ? g : 0.0;
    }

    // Expected costs from beliefs.
    std::vector<ComponentBelief> predicted(n);
    for (std::size_t i = 0; i < n; ++i)
      predicted[i] = predict(s.beliefs.components[i], maintenance_of(action[i]), models_[i]);
    const auto link_now = link_failure_probs(s.beliefs, config_.topology);
    out.events_now = system_event_distribution(link_now, config_.topology);
    out.events_next = system_event_distribution(std::span<const ComponentBelief>(predicted), config_.topology);
    out.costs = step_cost(s.beliefs.components, action, predicted, config_.losses, models_, config_.topology,
                          config_.shutdown_rule);

    // Hidden dynamics and observations: 2n uniforms per step, always drawn.
    out.observations.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u_trans = rng_.uniform();
      const double u_obs = rng_.uniform();
      const auto m = maintenance_of(action[i]);
      const int tau = s.beliefs.components[i].tau;
      DamageState sa = apply_maintenance(s.hidden[i], m);
      if (!transition_skipped(m))
        sa = state_at(sample_discrete(models_[i].augmented_transition_matrix(tau)[index_of(sa)], u_trans));
      s.hidden[i] = sa;
      const bool insp = inspects(action[i]);
      const int o = sample_observation(sa, insp, config_.observation, u_obs);
      out.observations[i] = o;
      s.beliefs.components[i] = update(predicted[i], o, insp, config_.observation).posterior;
      s.ages[i] = m == MaintenanceAction::replace ? 0 : s.ages[i] + 1;
      s.last_inspected[i] = insp ? std::optional(max_posterior_state(s.beliefs.components[i].probs))
                                 : std::nullopt;
    }

    // Bookkeeping.
    s.ledger.add(t, out.costs);
    const bool terminal = t + 1 == config_.horizon;
    out.tuple.soft_g.resize(config_.soft_constraints.size());
    const std::size_t fs = index_of(SystemEvent::Fs);
    for (std::size_t m = 0; m < config_.soft_constraints.size(); ++m) {
      auto const& spec = config_.soft_constraints[m];
      SoftStepValues v;
      v.damage_cost = out.costs.damage;
      v.terminal = terminal;
      v.running_cost = s.ledger.running(spec.chance_component);
      v.failure_increment = out.events_next[fs] * (1.0 - out.events_now[fs]);
      const double g = soft_constraint_step(spec, v);
      out.tuple.soft_g[m] = g;
      s.soft_returns[m] += spec.return_weight(t, config_.discount) * g;
    }
    if (config_.budget) s.budget = advance_budget(s.budget, counted, t + 1, *config_.budget);
    s.beliefs.time = t + 1;
    s.beliefs.budget_used = s.budget.used;

    out.tuple.action = action;
    out.tuple.cost = out.costs.total(config_.discount);
    out.tuple.next = decision_state(s);
    out.tuple.terminal = terminal;
    return out;
  }

 private:
  EnvConfig config_;
  std::vector<ComponentModel> models_;
  Rng rng_;
};

// A policy maps the simulator state to one action distribution per agent.
template <class P>
concept Policy = requires(P& p, const EnvState& s) {
  { p(s) } -> std::convertible_to<std::vector<ActionDistribution>>;
};

struct StepRecord {
  int t = 0;
  std::vector<ComponentBelief> beliefs;
  JointAction action;  // after gating
  bool gated = false;
  StepCosts costs;
  EventProbs events_now{};
  EventProbs events_next{};
};

struct Trajectory {
  CostLedger ledger;
  std::vector<StepRecord> steps;
  std::vector<double> soft_returns;
};

inline JointAction sample_joint_action(const std::vector<ActionDistribution>& dists, Rng& rng) {
  JointAction a(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i)
    a[i] = action_from_index(sample_discrete(dists[i], rng.uniform()));
  return a;
}

// Runs one full episode. Action sampling uses its own stream so that
// deterministic policies leave the environment stream untouched.
template <Policy P>
Trajectory rollout(P&& policy, Environment& env, std::uint64_t seed, std::uint64_t episode = 0) {
  EnvState s = env.reset(seed, episode);
  Rng action_rng(seed, "action", episode);
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(env.config().horizon));
  while (s.t() < env.config().horizon) {
    StepRecord rec;
    rec.t = s.t();
    rec.beliefs = s.beliefs.components;
    const auto dists = policy(static_cast<const EnvState&>(s));
    const auto out = env.step(s, sample_joint_action(dists, action_rng));
    rec.action = out.tuple.action;
    rec.gated = out.gated;
    rec.costs = out.costs;
    rec.events_now = out.events_now;
    rec.events_next = out.events_next;
    traj.steps.push_back(std::move(rec));
  }
  traj.ledger = s.ledger;
  traj.soft_returns = s.soft_returns;
  return traj;
}

template <Policy P>
Trajectory rollout(P&& policy, const EnvConfig& config, std::uint64_t seed, std::uint64_t episode = 0) {
  Environment env(config);
  return rollout(std::forward<P>(policy), env, seed, episode);
}

// Always the trivial action.
struct TrivialPolicy {
  std::vector<ActionDistribution> operator()(const EnvState& s) const {
    return std::vector<ActionDistribution>(s.hidden.size(), one_hot(ComponentAction::none));
  }
};

// Uniform over the five component actions.
struct UniformPolicy {
  std::vector<ActionDistribution> operator()(const EnvState& s) const {
    ActionDistribution u;
    u.fill(1.0 / kNumComponentActions);
    return std::vector<ActionDistribution>(s.hidden.size(), u);
  }
};

}  // namespace imp
