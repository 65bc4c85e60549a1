#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "imp/action.hpp"
#include "imp/belief.hpp"
#include "imp/deterioration.hpp"
#include "imp/system.hpp"

namespace imp {

// Event losses in money units. E0 carries no loss.
struct LossTable {
  double rebuild_cost = 1.0;
  EventProbs perpetual{};
  EventProbs instantaneous{};

  static LossTable standard(double c_reb = 1.0) {
    LossTable t;
    t.rebuild_cost = c_reb;
    t.perpetual = {0.0, 0.05 * c_reb, 0.25 * c_reb, 2.5 * c_reb};
    t.instantaneous = {0.0, 1.0 * c_reb, 5.0 * c_reb, 50.0 * c_reb};
    return t;
  }

  static LossTable zero() { return {1.0, {}, {}}; }

  LossTable scaled(double k) const {
    LossTable t = *this;
    for (auto& x : t.perpetual) x *= k;
    for (auto& x : t.instantaneous) x *= k;
    return t;
  }

  void validate() const {
    for (std::size_t e = 0; e < kNumEvents; ++e)
      if (perpetual[e] < 0 || instantaneous[e] < 0) throw DomainError("losses must be non-negative");
    if (perpetual[0] != 0.0 || instantaneous[0] != 0.0) throw DomainError("E0 losses must be zero");
  }
};

// Expected damage cost over one step from the event distributions before
// and after the transition. Instantaneous losses only apply on arrival.
inline double interval_risk(const EventProbs& now, const EventProbs& next, const LossTable& losses) {
  double r = 0.0;
  for (SystemEvent e : {SystemEvent::Fs, SystemEvent::E2, SystemEvent::E1}) {
    const auto i = index_of(e);
    r += next[i] * (losses.perpetual[i] + (1.0 - now[i]) * losses.instantaneous[i]);
  }
  return r;
}

// Links taken out of service by non-trivial maintenance on any member.
inline std::uint32_t maintenance_down_links(const JointAction& action, const Topology& topo) {
  std::uint32_t down = 0;
  for (std::size_t l = 0; l < topo.links.size(); ++l)
    for (auto c : topo.links[l])
      if (maintenance_of(action[c]) != MaintenanceAction::no_repair) down |= 1U << l;
  return down;
}

enum class ShutdownRule {
  literal,      // perpetual loss of the maintenance-induced event, scaled by 1 - Pr(Fs)
  incremental,  // only the outage added on top of links already failed
};

inline double shutdown_cost(const JointAction& action, const EventProbs& now, const LossTable& losses,
                            const Topology& topo) {
  const auto down = maintenance_down_links(action, topo);
  const auto ea = classify_outcome(down, topo);
  return losses.perpetual[index_of(ea)] * (1.0 - now[index_of(SystemEvent::Fs)]);
}

// Expected extra perpetual loss from the maintenance outage, averaged over
// the current link failure pattern and charged only where the system is up.
inline double incremental_shutdown_cost(const JointAction& action, std::span<const double> link_probs,
                                        const LossTable& losses, const Topology& topo) {
  const auto down = maintenance_down_links(action, topo);
  if (down == 0) return 0.0;
  const std::size_t L = link_probs.size();
  double cost = 0.0;
  for (std::uint32_t failed = 0; failed < (1U << L); ++failed) {
    const auto base = classify_outcome(failed, topo);
    if (base == SystemEvent::Fs) continue;
    double w = 1.0;
    for (std::size_t i = 0; i < L; ++i) w *= ((failed >> i) & 1U) ? link_probs[i] : 1.0 - link_probs[i];
    if (w == 0.0) continue;
    const auto with_outage = classify_outcome(failed | down, topo);
    cost += w * (losses.perpetual[index_of(with_outage)] - losses.perpetual[index_of(base)]);
  }
  return cost;
}

struct StepCosts {
  double maintenance = 0.0;
  double inspection = 0.0;
  double shutdown = 0.0;
  double damage = 0.0;

  // Inspection and damage costs are realized after the transition.
  double total(double discount) const { return maintenance + shutdown + discount * (inspection + damage); }
};

// Action-only maintenance and inspection costs.
inline std::pair<double, double> action_costs(const JointAction& action,
                                              std::span<const ComponentModel> models) {
  double cm = 0.0, ci = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    cm += models[i].maintenance_cost(maintenance_of(action[i]));
    if (inspects(action[i])) ci += models[i].costs().inspection;
  }
  return {cm, ci};
}

// Belief-expected step costs. `predicted` holds b^{a,e} for every component.
inline StepCosts step_cost(std::span<const ComponentBelief> beliefs, const JointAction& action,
                           std::span<const ComponentBelief> predicted, const LossTable& losses,
                           std::span<const ComponentModel> models, const Topology& topo,
                           ShutdownRule rule = ShutdownRule::literal) {
  StepCosts c;
  std::tie(c.maintenance, c.inspection) = action_costs(action, models);
  const auto link_now = link_failure_probs(beliefs, topo);
  const auto now = system_event_distribution(link_now, topo);
  const auto next = system_event_distribution(predicted, topo);
  c.shutdown = rule == ShutdownRule::literal ? shutdown_cost(action, now, losses, topo)
                                             : incremental_shutdown_cost(action, link_now, losses, topo);
  c.damage = interval_risk(now, next, losses);
  return c;
}

enum class CostComponent { maintenance, inspection, shutdown, risk, total };

struct LedgerEntry {
  int t = 0;
  StepCosts costs;
};

// Per-episode cost record with discounted accumulators.
class CostLedger {
 public:
  explicit CostLedger(double discount = 1.0) : discount_(discount) {}

  void add(int t, const StepCosts& c) {
    entries_.push_back({t, c});
    const double w = std::pow(discount_, t);
    maintenance_ += w * c.maintenance;
    inspection_ += w * c.inspection;
    shutdown_ += w * c.shutdown;
    risk_ += w * c.damage;
  }

  double discount() const { return discount_; }
  const std::vector<LedgerEntry>& entries() const { return entries_; }

  double maintenance() const { return maintenance_; }
  double inspection() const { return inspection_; }
  double shutdown() const { return shutdown_; }
  double risk() const { return risk_; }

  double total() const { return maintenance_ + shutdown_ + discount_ * (inspection_ + risk_); }

  // Discounted running value J_i of one cost component so far.
  double running(CostComponent component) const {
    switch (component) {
      case CostComponent::maintenance: return maintenance_;
      case CostComponent::inspection: return inspection_;
      case CostComponent::shutdown: return shutdown_;
      case CostComponent::risk: return risk_;
      case CostComponent::total: return total();
    }
    return total();
  }

 private:
  double discount_;
  std::vector<LedgerEntry> entries_;
  double maintenance_ = 0.0, inspection_ = 0.0, shutdown_ = 0.0, risk_ = 0.0;
};

// Component-level adjacency: d(i,j) = 1 when j != i is a one-step
// environment successor of i at some rate index.
inline std::array<std::array<bool, kNumStates>, kNumStates> adjacency(const ComponentModel& model) {
  std::array<std::array<bool, kNumStates>, kNumStates> d{};
  for (int tau = 1; tau <= model.rate_horizon(); ++tau) {
    const auto& m = model.augmented_transition_matrix(tau);
    for (std::size_t i = 0; i < kNumStates; ++i)
      for (std::size_t j = 0; j < kNumStates; ++j)
        if (i != j && m[i][j] > 0.0) d[i][j] = true;
  }
  return d;
}

struct FailureRisk {
  double general = 0.0;      // damage-cost form with adjacency indicator
  double reliability = 0.0;  // failure-probability increment form
};

// Single component whose only loss is an instantaneous failure cost c_F.
// Discounted risk over steps t = 0..horizon under a fixed action sequence,
// expectation over all observation histories by exhaustive tree expansion.
inline FailureRisk failure_only_risk_oracle(const ComponentModel& model, const ObservationModel& obs,
                                            std::span<const ComponentAction> actions, int horizon,
                                            double discount, double failure_cost,
                                            ComponentBelief initial = {}) {
  if (horizon < 0 || static_cast<std::size_t>(horizon) + 1 > actions.size())
    throw RangeError("action sequence shorter than horizon + 1");
  const auto d = adjacency(model);
  FailureRisk total;

  std::function<void(const ComponentBelief&, int, double)> expand = [&](const ComponentBelief& b, int t,
                                                                        double weight) {
    const auto a = actions[static_cast<std::size_t>(t)];
    const auto m = maintenance_of(a);
    const StateVector ba = apply_maintenance(b.probs, m);
    const StateMatrix* trans = transition_skipped(m) ? nullptr : &model.augmented_transition_matrix(b.tau);
    auto p = [&](std::size_t i, std::size_t j) {
      if (trans) return (*trans)[i][j];
      return i == j ? 1.0 : 0.0;
    };

    double general = 0.0;
    for (std::size_t sa = 0; sa < kNumStates; ++sa) {
      if (ba[sa] == 0.0) continue;
      for (std::size_t sn = 0; sn < kNumStates; ++sn) {
        const double cinst = sn == kFailedIndex ? failure_cost : 0.0;
        if (d[sa][sn]) general += ba[sa] * p(sa, sn) * cinst;
      }
    }
    const ComponentBelief pred = predict(b, m, model);
    const double reliability = failure_cost * (pred.probs[kFailedIndex] - ba[kFailedIndex]);

    const double g = std::pow(discount, t);
    total.general += weight * g * general;
    total.reliability += weight * g * reliability;
    if (t == horizon) return;

    const bool insp = inspects(a);
    for (std::size_t o = 0; o < obs.num_symbols(insp); ++o) {
      double ev = 0.0;
      for (std::size_t s = 0; s < kNumStates; ++s) ev += obs.likelihood(static_cast<int>(o), s, insp) * pred.probs[s];
      if (ev <= 0.0) continue;
      const auto up = update(pred, static_cast<int>(o), insp, obs);
      expand(up.posterior, t + 1, weight * up.evidence);
    }
  };
  expand(initial, 0, 1.0);
  return total;
}

}  // namespace imp
