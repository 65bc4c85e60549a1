#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "imp/deterioration.hpp"
#include "imp/errors.hpp"
#include "imp/rng.hpp"

namespace imp {

inline constexpr std::size_t kInspectionSymbols = 5;
// Without inspection only failure is announced.
inline constexpr std::size_t kDefaultSymbols = 2;
inline constexpr int kNoInformation = 0;
inline constexpr int kFailureAnnounced = 1;

struct ObservationModel {
  // Pr(o | s) when inspecting; rows are states.
  std::array<std::array<double, kInspectionSymbols>, kNumStates> with_inspection{};
  // Pr(o | s) over {no-information, failed} when not inspecting.
  std::array<std::array<double, kDefaultSymbols>, kNumStates> without_inspection{};

  static ObservationModel standard() {
    ObservationModel m;
    m.with_inspection = {{{0.84, 0.13, 0.02, 0.01, 0.0},
                          {0.11, 0.77, 0.09, 0.03, 0.0},
                          {0.02, 0.16, 0.70, 0.12, 0.0},
                          {0.01, 0.02, 0.13, 0.84, 0.0},
                          {0.0, 0.0, 0.0, 0.0, 1.0}}};
    m.without_inspection = {{{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}};
    return m;
  }

  void validate() const {
    auto check_row = [](auto const& row) {
      double s = 0.0;
      for (double p : row) {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("observation probability outside [0,1]");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) throw DomainError("observation matrix row does not sum to 1");
    };
    for (auto const& r : with_inspection) check_row(r);
    for (auto const& r : without_inspection) check_row(r);
    if (with_inspection[kFailedIndex][kFailedIndex] != 1.0 ||
        without_inspection[kFailedIndex][kFailureAnnounced] != 1.0)
      throw DomainError("failure must be self-announcing");
  }

  double likelihood(int symbol, std::size_t state, bool inspected) const {
    if (inspected) {
      if (symbol < 0 || symbol >= static_cast<int>(kInspectionSymbols))
        throw DomainError("invalid inspection observation symbol");
      return with_inspection[state][static_cast<std::size_t>(symbol)];
    }
    if (symbol < 0 || symbol >= static_cast<int>(kDefaultSymbols))
      throw DomainError("invalid default observation symbol");
    return without_inspection[state][static_cast<std::size_t>(symbol)];
  }

  std::size_t num_symbols(bool inspected) const {
    return inspected ? kInspectionSymbols : kDefaultSymbols;
  }
};

struct ComponentBelief {
  StateVector probs = point_mass(DamageState::intact);
  int tau = 1;
  int component_id = 0;

  double failure_prob() const { return probs[kFailedIndex]; }
};

// Beliefs of every component plus the fully observable side information.
struct BeliefMatrix {
  std::vector<ComponentBelief> components;
  int time = 0;
  double budget_used = 0.0;

  std::size_t size() const { return components.size(); }
};

// b -> b^{a,e}: maintenance effect followed by the environment transition
// at the current rate index. The returned belief carries the next tau.
inline ComponentBelief predict(const ComponentBelief& belief, MaintenanceAction action,
                               const ComponentModel& model) {
  StateVector after = apply_maintenance(belief.probs, action);
  if (!transition_skipped(action))
    after = propagate(after, model.augmented_transition_matrix(belief.tau));
  return {after, model.next_tau(belief.tau, action), belief.component_id};
}

struct BeliefUpdate {
  ComponentBelief posterior;
  double evidence = 0.0;  // Pr(o | b, a)
};

// Bayes rule on a predicted belief. A zero normalizer means the observation
// is impossible under the belief and is reported, not papered over.
inline BeliefUpdate update(const ComponentBelief& predicted, int observation, bool inspected,
                           const ObservationModel& obs) {
  StateVector post{};
  double evidence = 0.0;
  for (std::size_t s = 0; s < kNumStates; ++s) {
    post[s] = obs.likelihood(observation, s, inspected) * predicted.probs[s];
    evidence += post[s];
  }
  if (!(evidence > 0.0))
    throw InconsistencyError("observation has zero probability under the predicted belief");
  for (double& p : post) p /= evidence;
  return {{post, predicted.tau, predicted.component_id}, evidence};
}

inline int sample_observation(DamageState true_state, bool inspected, const ObservationModel& obs,
                              double u) {
  const std::size_t s = index_of(true_state);
  if (inspected) return static_cast<int>(sample_discrete(obs.with_inspection[s], u));
  return static_cast<int>(sample_discrete(obs.without_inspection[s], u));
}

inline int sample_observation(DamageState true_state, bool inspected, const ObservationModel& obs,
                              Rng& rng) {
  return sample_observation(true_state, inspected, obs, rng.uniform());
}

// Most probable state, lowest index on ties; condition-based rules treat it
// as the observed state.
inline DamageState max_posterior_state(const StateVector& b) {
  std::size_t best = 0;
  for (std::size_t s = 1; s < kNumStates; ++s)
    if (b[s] > b[best]) best = s;
  return state_at(best);
}

}  // namespace imp
