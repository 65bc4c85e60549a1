#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imp/action.hpp"
#include "imp/costs.hpp"
#include "imp/errors.hpp"

namespace imp {

// Hard cap on inspection + maintenance spending per budget cycle.
struct BudgetSpec {
  double cap = std::numeric_limits<double>::infinity();
  int cycle_length = 1;
  // Weight expenditures by gamma^t from t = 0 (literal form); otherwise count
  // them at face value within each cycle.
  bool discounted_accounting = true;

  void validate() const {
    if (!(cap >= 0.0)) throw DomainError("budget cap must be >= 0");
    if (cycle_length < 1) throw DomainError("budget cycle length must be >= 1");
  }
};

struct BudgetState {
  double used = 0.0;
  int cycle_index = 0;

  // Share of the cap still available, as fed to the networks.
  double remaining_fraction(const BudgetSpec& spec) const {
    if (!std::isfinite(spec.cap)) return 1.0;
    if (spec.cap <= 0.0) return 0.0;
    return (spec.cap - used) / spec.cap;
  }
};

inline double step_expenditure(double c_m, double c_i, int t, double discount, const BudgetSpec& spec) {
  const double g = c_m + discount * c_i;
  return spec.discounted_accounting ? std::pow(discount, t) * g : g;
}

struct GateResult {
  JointAction action;
  bool costs_allowed = true;
};

// Budget gate: an action that would overrun the cap is replaced as a whole
// by the trivial action, whose costs are zero.
inline GateResult gate(const JointAction& action, const BudgetState& y, double g_h, const BudgetSpec& spec) {
  if (y.used + g_h <= spec.cap) return {action, true};
  return {trivial_action(action.size()), false};
}

inline BudgetState advance_budget(const BudgetState& y, double counted, int t_next, const BudgetSpec& spec) {
  BudgetState next{y.used + counted, y.cycle_index};
  if (next.used > spec.cap) throw InconsistencyError("budget cap exceeded after gating");
  const int cycle = t_next / spec.cycle_length;
  if (cycle != y.cycle_index) next = {0.0, cycle};
  return next;
}

enum class SoftConstraintKind { lifecycle_risk, chance, failure_prob };

inline std::string_view to_string(SoftConstraintKind k) {
  switch (k) {
    case SoftConstraintKind::lifecycle_risk: return "lifecycle_risk";
    case SoftConstraintKind::chance: return "chance";
    case SoftConstraintKind::failure_prob: return "failure_prob";
  }
  return "?";
}

inline SoftConstraintKind parse_soft_kind(std::string_view s) {
  if (s == "lifecycle_risk") return SoftConstraintKind::lifecycle_risk;
  if (s == "chance") return SoftConstraintKind::chance;
  if (s == "failure_prob") return SoftConstraintKind::failure_prob;
  throw ConfigError("unknown soft constraint kind '" + std::string(s) + "'");
}

struct SoftConstraintSpec {
  SoftConstraintKind kind = SoftConstraintKind::lifecycle_risk;
  double threshold = 0.0;       // alpha_s
  double multiplier = 0.0;      // lambda, initial value for training
  double critical_value = 0.0;  // J_cr, chance kind only
  CostComponent chance_component = CostComponent::total;

  void validate() const {
    if (!(multiplier >= 0.0)) throw DomainError("Lagrange multiplier must be >= 0");
    if (kind != SoftConstraintKind::lifecycle_risk && !(threshold >= 0.0 && threshold <= 1.0))
      throw DomainError("probability threshold must lie in [0,1]");
  }

  // Weight of step t in the constraint return.
  double return_weight(int t, double discount) const {
    return kind == SoftConstraintKind::lifecycle_risk ? std::pow(discount, t) : 1.0;
  }
};

struct SoftStepValues {
  double damage_cost = 0.0;          // c_D of the step
  bool terminal = false;
  double running_cost = 0.0;         // J_i including this step
  double failure_increment = 0.0;    // probability of a new system failure this step
};

inline double soft_constraint_step(const SoftConstraintSpec& spec, const SoftStepValues& v) {
  switch (spec.kind) {
    case SoftConstraintKind::lifecycle_risk: return v.damage_cost;
    case SoftConstraintKind::chance:
      return v.terminal && v.running_cost > spec.critical_value ? 1.0 : 0.0;
    case SoftConstraintKind::failure_prob: return v.failure_increment;
  }
  return 0.0;
}

inline double lagrangian_penalty(std::span<const double> multipliers, std::span<const double> g) {
  if (multipliers.size() != g.size()) throw DomainError("multiplier/constraint count mismatch");
  double s = 0.0;
  for (std::size_t m = 0; m < g.size(); ++m) {
    if (multipliers[m] < 0.0) throw DomainError("negative Lagrange multiplier");
    s += multipliers[m] * g[m];
  }
  return s;
}

inline double lagrangian_penalty(std::span<const SoftConstraintSpec> specs, std::span<const double> g) {
  std::vector<double> lambda;
  lambda.reserve(specs.size());
  for (auto const& s : specs) lambda.push_back(s.multiplier);
  return lagrangian_penalty(lambda, g);
}

}  // namespace imp
