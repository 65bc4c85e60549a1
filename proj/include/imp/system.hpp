#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imp/belief.hpp"
#include "imp/deterioration.hpp"
#include "imp/errors.hpp"

namespace imp {

enum class SystemEvent : int { E0 = 0, E1 = 1, E2 = 2, Fs = 3 };
inline constexpr std::size_t kNumEvents = 4;
using EventProbs = std::array<double, kNumEvents>;

constexpr std::size_t index_of(SystemEvent e) { return static_cast<std::size_t>(e); }

inline std::string_view to_string(SystemEvent e) {
  switch (e) {
    case SystemEvent::E0: return "E0";
    case SystemEvent::E1: return "E1";
    case SystemEvent::E2: return "E2";
    case SystemEvent::Fs: return "Fs";
  }
  return "?";
}

// Components grouped into series links; the system fails when every link of
// some cut set is down. Component and link ids are 0-based here and 1-based
// in configuration files.
struct Topology {
  std::vector<std::vector<std::size_t>> links;
  std::vector<std::vector<std::size_t>> cut_sets;
  std::vector<TypeLabel> type_assignment;

  std::size_t num_components() const { return type_assignment.size(); }
  std::size_t num_links() const { return links.size(); }

  // Ten components, four links; A-B connectivity is lost when links (1,3) or
  // (2,4) are both down. Components 3, 4, 8, 9 deteriorate fastest.
  static Topology standard() {
    using T = TypeLabel;
    return {{{0, 1, 2}, {3, 4}, {5, 6}, {7, 8, 9}},
            {{0, 2}, {1, 3}},
            {T::I, T::I, T::III, T::III, T::I, T::II, T::II, T::III, T::III, T::I}};
  }

  // Four components in two parallel two-component links.
  static Topology two_parallel_links() {
    using T = TypeLabel;
    return {{{0, 1}, {2, 3}}, {{0, 1}}, {T::I, T::III, T::II, T::III}};
  }

  bool is_bridge_pair_form() const {
    if (links.size() != 4 || cut_sets.size() != 2) return false;
    auto sorted = [](std::vector<std::size_t> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    auto a = sorted(cut_sets[0]), b = sorted(cut_sets[1]);
    const std::vector<std::size_t> c13{0, 2}, c24{1, 3};
    return (a == c13 && b == c24) || (a == c24 && b == c13);
  }

  void validate() const {
    if (links.empty()) throw ConfigError("topology has no links");
    if (links.size() > 16) throw ConfigError("at most 16 links are supported");
    if (cut_sets.empty()) throw ConfigError("topology has no cut sets");
    std::vector<bool> covered(num_components(), false);
    for (auto const& l : links) {
      if (l.empty()) throw ConfigError("empty link");
      for (auto c : l) {
        if (c >= num_components()) throw ConfigError("link references unknown component");
        covered[c] = true;
      }
    }
    if (std::find(covered.begin(), covered.end(), false) != covered.end())
      throw ConfigError("every component must belong to at least one link");
    for (auto const& cs : cut_sets) {
      if (cs.empty()) throw ConfigError("empty cut set");
      for (auto l : cs)
        if (l >= links.size()) throw ConfigError("cut set references unknown link");
    }
  }
};

// Pr(link i down) = 1 - prod_{j in link} (1 - b_j(failed)).
inline std::vector<double> link_failure_probs(std::span<const ComponentBelief> beliefs,
                                              const Topology& topo) {
  std::vector<double> out;
  out.reserve(topo.links.size());
  for (auto const& link : topo.links) {
    double up = 1.0;
    for (auto c : link) up *= 1.0 - beliefs[c].failure_prob();
    out.push_back(1.0 - up);
  }
  return out;
}

inline std::vector<double> link_failure_probs(const BeliefMatrix& b, const Topology& topo) {
  return link_failure_probs(std::span<const ComponentBelief>(b.components), topo);
}

// Bit i of `down` set means link i is unavailable.
inline SystemEvent classify_outcome(std::uint32_t down, const Topology& topo) {
  for (auto const& cs : topo.cut_sets) {
    bool all = true;
    for (auto l : cs) all = all && ((down >> l) & 1U);
    if (all) return SystemEvent::Fs;
  }
  const int n = __builtin_popcount(down);
  if (n == 0) return SystemEvent::E0;
  if (n == 1) return SystemEvent::E1;
  return SystemEvent::E2;
}

// Four-link form: Fs iff (l1 and l3) or (l2 and l4).
inline SystemEvent classify_outcome(const std::array<bool, 4>& link_down) {
  std::uint32_t down = 0;
  for (std::size_t i = 0; i < 4; ++i)
    if (link_down[i]) down |= 1U << i;
  return classify_outcome(down, Topology::standard());
}

namespace detail {

inline EventProbs check_distribution(EventProbs p) {
  if (p[index_of(SystemEvent::E2)] < -1e-12)
    throw InconsistencyError("negative E2 probability: link probabilities are inconsistent");
  return p;
}

inline double prob_no_failure(std::span<const double> p) {
  double r = 1.0;
  for (double x : p) r *= 1.0 - x;
  return r;
}

inline double prob_single_failure(std::span<const double> p) {
  double r = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double term = p[i];
    for (std::size_t j = 0; j < p.size(); ++j)
      if (j != i) term *= 1.0 - p[j];
    r += term;
  }
  return r;
}

}  // namespace detail

// Closed form for the four-link bridge-pair system.
inline EventProbs system_event_distribution(std::span<const double> p) {
  if (p.size() != 4) throw DomainError("closed-form event distribution needs 4 link probabilities");
  for (double x : p)
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("link probability outside [0,1]");
  EventProbs out{};
  out[index_of(SystemEvent::Fs)] = p[0] * p[2] + p[1] * p[3] - p[0] * p[1] * p[2] * p[3];
  out[index_of(SystemEvent::E0)] = detail::prob_no_failure(p);
  out[index_of(SystemEvent::E1)] = detail::prob_single_failure(p);
  out[index_of(SystemEvent::E2)] =
      1.0 - out[index_of(SystemEvent::E0)] - out[index_of(SystemEvent::E1)] - out[index_of(SystemEvent::Fs)];
  return detail::check_distribution(out);
}

// Any topology: closed form when it has the bridge-pair structure, otherwise
// Pr(Fs) by summation over link outcomes.
inline EventProbs system_event_distribution(std::span<const double> p, const Topology& topo) {
  if (topo.is_bridge_pair_form()) return system_event_distribution(p);
  if (p.size() != topo.num_links()) throw DomainError("link probability count mismatch");
  const std::size_t L = p.size();
  double fs = 0.0;
  for (std::uint32_t down = 0; down < (1U << L); ++down) {
    if (classify_outcome(down, topo) != SystemEvent::Fs) continue;
    double w = 1.0;
    for (std::size_t i = 0; i < L; ++i) w *= ((down >> i) & 1U) ? p[i] : 1.0 - p[i];
    fs += w;
  }
  EventProbs out{};
  out[index_of(SystemEvent::Fs)] = fs;
  out[index_of(SystemEvent::E0)] = detail::prob_no_failure(p);
  // A single down link can itself be a cut set (e.g. a lone series link).
  double e1 = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    if (classify_outcome(1U << i, topo) == SystemEvent::Fs) continue;
    double term = p[i];
    for (std::size_t j = 0; j < L; ++j)
      if (j != i) term *= 1.0 - p[j];
    e1 += term;
  }
  out[index_of(SystemEvent::E1)] = e1;
  out[index_of(SystemEvent::E2)] =
      1.0 - out[index_of(SystemEvent::E0)] - out[index_of(SystemEvent::E1)] - fs;
  return detail::check_distribution(out);
}

inline EventProbs system_event_distribution(std::span<const ComponentBelief> beliefs,
                                            const Topology& topo) {
  const auto lp = link_failure_probs(beliefs, topo);
  return system_event_distribution(lp, topo);
}

}  // namespace imp
