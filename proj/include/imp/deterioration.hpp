#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "imp/errors.hpp"

namespace imp {

// Damage states of a component after failure augmentation. Failure is
// absorbing under no-repair.
enum class DamageState : int { intact = 0, minor = 1, major = 2, severe = 3, failed = 4 };

inline constexpr std::size_t kNumStates = 5;
inline constexpr std::size_t kNumDamageStates = 4;
inline constexpr std::size_t kFailedIndex = 4;

using StateVector = std::array<double, kNumStates>;
using StateMatrix = std::array<StateVector, kNumStates>;
using DamageMatrix = std::array<std::array<double, kNumDamageStates>, kNumDamageStates>;

constexpr std::size_t index_of(DamageState s) { return static_cast<std::size_t>(s); }
constexpr DamageState state_at(std::size_t i) { return static_cast<DamageState>(static_cast<int>(i)); }

enum class TypeLabel { I, II, III };

inline std::string_view to_string(TypeLabel t) {
  switch (t) {
    case TypeLabel::I: return "I";
    case TypeLabel::II: return "II";
    case TypeLabel::III: return "III";
  }
  return "?";
}

inline TypeLabel parse_type_label(std::string_view s) {
  if (s == "I") return TypeLabel::I;
  if (s == "II") return TypeLabel::II;
  if (s == "III") return TypeLabel::III;
  throw ConfigError("unknown deterioration type '" + std::string(s) + "'");
}

// Off-diagonal damage rates ordered (p12, p13, p14, p23, p24, p34).
using RateSet = std::array<double, 6>;

// Row/column of each RateSet entry in the 4x4 damage matrix.
inline constexpr std::array<std::pair<int, int>, 6> kRateSlots{
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

struct DeteriorationType {
  TypeLabel label = TypeLabel::I;
  RateSet initial_rates{};
  RateSet final_rates{};
  std::array<double, kNumDamageStates> failure_probs{};

  void validate() const {
    auto check_rates = [](const RateSet& r, const char* what) {
      for (double p : r)
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(what) + " rate outside [0,1]");
      if (r[0] + r[1] + r[2] > 1.0 || r[3] + r[4] > 1.0 || r[5] > 1.0)
        throw DomainError(std::string(what) + " rates: row off-diagonal sum exceeds 1");
    };
    check_rates(initial_rates, "initial");
    check_rates(final_rates, "final");
    for (double p : failure_probs)
      if (!(p >= 0.0 && p <= 1.0)) throw DomainError("failure probability outside [0,1]");
  }
};

// Default parameters for the three deterioration severities.
inline DeteriorationType default_type(TypeLabel label) {
  switch (label) {
    case TypeLabel::I:
      return {label,
              {0.0129, 0.0072, 0.0008, 0.0102, 0.0038, 0.0092},
              {0.0618, 0.0512, 0.0036, 0.0905, 0.0091, 0.0768},
              {0.0019, 0.0067, 0.0115, 0.0177}};
    case TypeLabel::II:
      return {label,
              {0.0311, 0.0096, 0.0014, 0.0283, 0.0057, 0.0281},
              {0.0862, 0.0868, 0.0051, 0.1219, 0.0121, 0.1091},
              {0.0028, 0.0076, 0.0163, 0.0219}};
    case TypeLabel::III:
      return {label,
              {0.0428, 0.0229, 0.0033, 0.0406, 0.0095, 0.0328},
              {0.1347, 0.0669, 0.0098, 0.1665, 0.0244, 0.1462},
              {0.0088, 0.0210, 0.0449, 0.0564}};
  }
  throw DomainError("unknown type");
}

enum class MaintenanceAction { no_repair = 0, partial_repair = 1, replace = 2 };

inline std::string_view to_string(MaintenanceAction a) {
  switch (a) {
    case MaintenanceAction::no_repair: return "no_repair";
    case MaintenanceAction::partial_repair: return "partial_repair";
    case MaintenanceAction::replace: return "replace";
  }
  return "?";
}

inline MaintenanceAction parse_maintenance(std::string_view s) {
  if (s == "no_repair" || s == "none") return MaintenanceAction::no_repair;
  if (s == "partial_repair" || s == "partial") return MaintenanceAction::partial_repair;
  if (s == "replace") return MaintenanceAction::replace;
  throw ConfigError("unknown maintenance action '" + std::string(s) + "'");
}

struct ComponentCosts {
  double replacement = 0.0;
  double partial_repair = 0.0;
  double inspection = 0.0;
};

// Entries of `m` interpolated linearly between the initial rates (tau = 1)
// and the final rates (tau = horizon). Written as (1-w)a + wb so that both
// endpoints are reproduced bit-exactly.
inline DamageMatrix interpolated_damage_matrix(const DeteriorationType& type, int tau, int horizon) {
  const double w = horizon > 1 ? static_cast<double>(tau - 1) / static_cast<double>(horizon - 1) : 0.0;
  DamageMatrix m{};
  for (std::size_t k = 0; k < kRateSlots.size(); ++k) {
    const auto [r, c] = kRateSlots[k];
    m[r][c] = (1.0 - w) * type.initial_rates[k] + w * type.final_rates[k];
  }
  for (std::size_t r = 0; r < kNumDamageStates; ++r) {
    double off = 0.0;
    for (std::size_t c = r + 1; c < kNumDamageStates; ++c) off += m[r][c];
    m[r][r] = 1.0 - off;
  }
  return m;
}

// Per-component deterioration model. All rate-indexed matrices are built
// once at construction; the object is immutable afterwards.
class ComponentModel {
 public:
  ComponentModel() : ComponentModel(default_type(TypeLabel::I), 50, {}) {}

  ComponentModel(DeteriorationType type, int rate_horizon, ComponentCosts costs)
      : type_(type), rate_horizon_(rate_horizon), costs_(costs) {
    if (rate_horizon_ < 1) throw RangeError("rate_horizon must be >= 1");
    if (costs_.replacement < 0 || costs_.partial_repair < 0 || costs_.inspection < 0)
      throw DomainError("component costs must be non-negative");
    type_.validate();
    damage_.reserve(static_cast<std::size_t>(rate_horizon_));
    augmented_.reserve(static_cast<std::size_t>(rate_horizon_));
    for (int tau = 1; tau <= rate_horizon_; ++tau) {
      damage_.push_back(interpolated_damage_matrix(type_, tau, rate_horizon_));
      augmented_.push_back(augment(damage_.back()));
    }
  }

  const DeteriorationType& det_type() const { return type_; }
  int rate_horizon() const { return rate_horizon_; }
  const ComponentCosts& costs() const { return costs_; }

  // 4x4 damage-only transition at rate index tau (1-based).
  const DamageMatrix& damage_transition_matrix(int tau) const { return damage_[checked(tau)]; }

  // 5x5 transition with the absorbing failed state, failure drawn first.
  const StateMatrix& augmented_transition_matrix(int tau) const { return augmented_[checked(tau)]; }

  double maintenance_cost(MaintenanceAction a) const {
    switch (a) {
      case MaintenanceAction::no_repair: return 0.0;
      case MaintenanceAction::partial_repair: return costs_.partial_repair;
      case MaintenanceAction::replace: return costs_.replacement;
    }
    return 0.0;
  }

  // Rate index at the next step: reset on replacement, otherwise advance
  // and saturate at the horizon.
  int next_tau(int tau, MaintenanceAction a) const {
    if (a == MaintenanceAction::replace) return 1;
    return tau < rate_horizon_ ? tau + 1 : rate_horizon_;
  }

 private:
  std::size_t checked(int tau) const {
    if (tau < 1 || tau > rate_horizon_)
      throw RangeError("rate index " + std::to_string(tau) + " outside [1, " +
                       std::to_string(rate_horizon_) + "]");
    return static_cast<std::size_t>(tau - 1);
  }

  StateMatrix augment(const DamageMatrix& d) const {
    StateMatrix m{};
    for (std::size_t r = 0; r < kNumDamageStates; ++r) {
      const double pf = type_.failure_probs[r];
      for (std::size_t c = 0; c < kNumDamageStates; ++c) m[r][c] = (1.0 - pf) * d[r][c];
      m[r][kFailedIndex] = pf;
    }
    m[kFailedIndex][kFailedIndex] = 1.0;
    return m;
  }

  DeteriorationType type_;
  int rate_horizon_;
  ComponentCosts costs_;
  std::vector<DamageMatrix> damage_;
  std::vector<StateMatrix> augmented_;
};

inline constexpr double kSimplexTolerance = 1e-9;

inline bool on_simplex(const StateVector& b, double tol = kSimplexTolerance) {
  double sum = 0.0;
  for (double p : b) {
    if (!(p >= -tol) || !std::isfinite(p)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

inline StateVector point_mass(DamageState s) {
  StateVector v{};
  v[index_of(s)] = 1.0;
  return v;
}

// Maintenance effect on a hidden state (s -> s^a). Replacement yields the
// intact state; the caller must then skip the environment transition.
constexpr DamageState apply_maintenance(DamageState s, MaintenanceAction a) {
  switch (a) {
    case MaintenanceAction::no_repair: return s;
    case MaintenanceAction::partial_repair:
      if (s == DamageState::intact || s == DamageState::failed) return s;
      return state_at(index_of(s) - 1);
    case MaintenanceAction::replace: return DamageState::intact;
  }
  return s;
}

// Maintenance effect on a belief (b -> b^a).
inline StateVector apply_maintenance(const StateVector& b, MaintenanceAction a) {
  if (!on_simplex(b)) throw DomainError("belief is not on the probability simplex");
  switch (a) {
    case MaintenanceAction::no_repair: return b;
    case MaintenanceAction::partial_repair:
      return {b[0] + b[1], b[2], b[3], 0.0, b[4]};
    case MaintenanceAction::replace: return point_mass(DamageState::intact);
  }
  return b;
}

// Environment transition applied after maintenance. Replacement negates the
// deterioration of the step, so the successor distribution is the point mass
// already produced by apply_maintenance.
inline bool transition_skipped(MaintenanceAction a) { return a == MaintenanceAction::replace; }

// Row-vector product b^T M.
inline StateVector propagate(const StateVector& b, const StateMatrix& m) {
  StateVector out{};
  for (std::size_t s = 0; s < kNumStates; ++s) {
    if (b[s] == 0.0) continue;
    for (std::size_t n = 0; n < kNumStates; ++n) out[n] += b[s] * m[s][n];
  }
  return out;
}

}  // namespace imp
