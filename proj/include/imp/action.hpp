#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "imp/deterioration.hpp"
#include "imp/errors.hpp"

namespace imp {

// Per-component inspection x maintenance choice. Replacement combined with
// inspection is not representable.
enum class ComponentAction : int {
  none = 0,              // no repair, no inspection
  inspect = 1,           // no repair, inspection
  partial = 2,           // partial repair, no inspection
  partial_inspect = 3,   // partial repair, inspection
  replace = 4,           // replacement, no inspection
};

inline constexpr std::size_t kNumComponentActions = 5;

constexpr MaintenanceAction maintenance_of(ComponentAction a) {
  switch (a) {
    case ComponentAction::none:
    case ComponentAction::inspect: return MaintenanceAction::no_repair;
    case ComponentAction::partial:
    case ComponentAction::partial_inspect: return MaintenanceAction::partial_repair;
    case ComponentAction::replace: return MaintenanceAction::replace;
  }
  return MaintenanceAction::no_repair;
}

constexpr bool inspects(ComponentAction a) {
  return a == ComponentAction::inspect || a == ComponentAction::partial_inspect;
}

constexpr bool is_trivial(ComponentAction a) { return a == ComponentAction::none; }

// Combine maintenance and inspection; (replace, inspect) is rejected.
constexpr ComponentAction make_action(MaintenanceAction m, bool inspect) {
  switch (m) {
    case MaintenanceAction::no_repair: return inspect ? ComponentAction::inspect : ComponentAction::none;
    case MaintenanceAction::partial_repair:
      return inspect ? ComponentAction::partial_inspect : ComponentAction::partial;
    case MaintenanceAction::replace:
      if (inspect) throw DomainError("replacement combined with inspection is not an admissible action");
      return ComponentAction::replace;
  }
  return ComponentAction::none;
}

constexpr ComponentAction action_from_index(std::size_t i) {
  if (i >= kNumComponentActions) throw RangeError("component action index out of range");
  return static_cast<ComponentAction>(static_cast<int>(i));
}

constexpr std::size_t index_of(ComponentAction a) { return static_cast<std::size_t>(a); }

inline std::string_view to_string(ComponentAction a) {
  switch (a) {
    case ComponentAction::none: return "none";
    case ComponentAction::inspect: return "inspect";
    case ComponentAction::partial: return "partial";
    case ComponentAction::partial_inspect: return "partial+inspect";
    case ComponentAction::replace: return "replace";
  }
  return "?";
}

using JointAction = std::vector<ComponentAction>;

inline JointAction trivial_action(std::size_t n) { return JointAction(n, ComponentAction::none); }

inline bool is_trivial(const JointAction& a) {
  for (auto x : a)
    if (!is_trivial(x)) return false;
  return true;
}

// Per-agent distribution over the five component actions.
using ActionDistribution = std::array<double, kNumComponentActions>;

inline ActionDistribution one_hot(ComponentAction a) {
  ActionDistribution d{};
  d[index_of(a)] = 1.0;
  return d;
}

}  // namespace imp
