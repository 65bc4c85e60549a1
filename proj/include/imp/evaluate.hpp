#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "imp/action.hpp"
#include "imp/env.hpp"
#include "imp/errors.hpp"

namespace imp {

// Sample mean with standard error; the error is absent for one sample.
struct Estimate {
  double mean = 0.0;
  std::optional<double> stderr_;

  static Estimate from(std::span<const double> xs) {
    if (xs.empty()) throw DomainError("no samples");
    const double n = static_cast<double>(xs.size());
    double sum = 0.0;
    for (double x : xs) sum += x;
    Estimate e{sum / n, std::nullopt};
    if (xs.size() > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - e.mean) * (x - e.mean);
      e.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    }
    return e;
  }
};

struct ConstraintStats {
  SoftConstraintSpec spec;
  Estimate episode_return;
  double satisfied_fraction = 0.0;  // episodes with return <= threshold
};

struct EvalReport {
  int episodes = 0;
  double discount = 1.0;
  Estimate total, maintenance, inspection, shutdown, risk;
  // [component][step][action] relative frequency of executed actions.
  std::vector<std::vector<ActionDistribution>> action_frequency;
  // Per-step means over episodes.
  std::vector<double> failure_prob_now;
  std::vector<double> failure_prob_next;
  std::vector<StepCosts> step_costs;  // undiscounted
  std::vector<double> gated_fraction;
  std::vector<ConstraintStats> constraints;

  // Discounted decomposition recombined from the component estimators.
  double recombined_total() const {
    return maintenance.mean + shutdown.mean + discount * (inspection.mean + risk.mean);
  }
};

template <Policy P>
EvalReport evaluate(P&& policy, Environment& env, int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("evaluation needs at least one episode");
  const auto& cfg = env.config();
  const std::size_t N = env.num_components();
  const auto T = static_cast<std::size_t>(cfg.horizon);
  const std::size_t n_soft = cfg.soft_constraints.size();

  EvalReport r;
  r.episodes = n;
  r.discount = cfg.discount;
  r.action_frequency.assign(N, std::vector<ActionDistribution>(T, ActionDistribution{}));
  r.failure_prob_now.assign(T, 0.0);
  r.failure_prob_next.assign(T, 0.0);
  r.step_costs.assign(T, StepCosts{});
  r.gated_fraction.assign(T, 0.0);

  std::vector<double> tot, cm, ci, cs, cr;
  std::vector<std::vector<double>> soft(n_soft);
  const std::size_t fs = index_of(SystemEvent::Fs);
  const double w = 1.0 / n;
  for (int k = 0; k < n; ++k) {
    const auto traj = rollout(policy, env, seed, static_cast<std::uint64_t>(k));
    tot.push_back(traj.ledger.total());
    cm.push_back(traj.ledger.maintenance());
    ci.push_back(traj.ledger.inspection());
    cs.push_back(traj.ledger.shutdown());
    cr.push_back(traj.ledger.risk());
    for (std::size_t m = 0; m < n_soft; ++m) soft[m].push_back(traj.soft_returns[m]);
    for (auto const& st : traj.steps) {
      const auto t = static_cast<std::size_t>(st.t);
      for (std::size_t i = 0; i < N; ++i) r.action_frequency[i][t][index_of(st.action[i])] += w;
      r.failure_prob_now[t] += w * st.events_now[fs];
      r.failure_prob_next[t] += w * st.events_next[fs];
      r.step_costs[t].maintenance += w * st.costs.maintenance;
      r.step_costs[t].inspection += w * st.costs.inspection;
      r.step_costs[t].shutdown += w * st.costs.shutdown;
      r.step_costs[t].damage += w * st.costs.damage;
      if (st.gated) r.gated_fraction[t] += w;
    }
  }
  r.total = Estimate::from(tot);
  r.maintenance = Estimate::from(cm);
  r.inspection = Estimate::from(ci);
  r.shutdown = Estimate::from(cs);
  r.risk = Estimate::from(cr);
  for (std::size_t m = 0; m < n_soft; ++m) {
    ConstraintStats c{cfg.soft_constraints[m], Estimate::from(soft[m]), 0.0};
    for (double x : soft[m])
      if (x <= c.spec.threshold) c.satisfied_fraction += w;
    r.constraints.push_back(c);
  }
  return r;
}

template <Policy P>
EvalReport evaluate(P&& policy, const EnvConfig& config, int n, std::uint64_t seed) {
  Environment env(config);
  return evaluate(std::forward<P>(policy), env, n, seed);
}

struct VoiEstimate {
  Estimate voi;
  double net = 0.0;  // voi.mean minus the inspection cost
};

// Step-wise value of information of inspecting the components flagged in
// `inspect` at fixed maintenance `maint`. Hidden states are drawn from the
// beliefs in `s`; both branches then share every random draw and continue
// under `policy`.
template <Policy P>
VoiEstimate voi_step(P&& policy, Environment& env, const EnvState& s, std::span<const MaintenanceAction> maint,
                     const std::vector<bool>& inspect, int n, std::uint64_t seed) {
  const std::size_t N = env.num_components();
  if (maint.size() != N || inspect.size() != N) throw DomainError("action size does not match component count");
  if (n < 1) throw DomainError("need at least one sample");
  const auto& cfg = env.config();
  JointAction plain(N), informed(N);
  double inspection_cost = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    plain[i] = make_action(maint[i], false);
    informed[i] = make_action(maint[i], inspect[i]);
    if (inspect[i]) inspection_cost += env.models()[i].costs().inspection;
  }

  auto continuation = [&](EnvState st, const JointAction& first, std::uint64_t k) {
    env.reseed(seed, "voi-step", k);
    env.step(st, first);
    const double before = st.ledger.total();
    const int t1 = st.t();
    Rng action_rng(seed, "voi-action", k);
    env.reseed(seed, "voi-continue", k);
    while (st.t() < cfg.horizon) env.step(st, sample_joint_action(policy(static_cast<const EnvState&>(st)), action_rng));
    return (st.ledger.total() - before) / std::pow(cfg.discount, t1);
  };

  std::vector<double> diffs;
  diffs.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    EnvState base = s;
    Rng hid(seed, "voi-hidden", static_cast<std::uint64_t>(k));
    for (std::size_t i = 0; i < N; ++i)
      base.hidden[i] = state_at(sample_discrete(base.beliefs.components[i].probs, hid.uniform()));
    const auto kk = static_cast<std::uint64_t>(k);
    diffs.push_back(continuation(base, plain, kk) - continuation(base, informed, kk));
  }
  VoiEstimate v{Estimate::from(diffs), 0.0};
  v.net = v.voi.mean - inspection_cost;
  return v;
}

// Small finite POMDP solved exactly by enumeration. Actions are pairs
// (maintenance m, inspection k); inspection k = 0 yields no extra symbol.
// Each step emits a default symbol from `default_obs` and, when inspecting,
// an independent symbol from `inspection_obs[k-1]`, both conditioned on the
// post-transition state.
template <class Scalar>
struct TinyPomdp {
  using Vec = std::vector<Scalar>;
  using Mat = std::vector<Vec>;

  std::vector<Mat> transition;       // [m][s][s']
  Mat default_obs;                   // [s'][o]
  std::vector<Mat> inspection_obs;   // [k-1][s'][o]
  Vec maintenance_cost;              // [m]
  Vec inspection_cost;               // [k], entry 0 for no inspection
  Vec damage_cost;                   // [s'], charged after the transition
  Scalar discount = Scalar(1);

  static constexpr std::size_t kMaxStates = 5, kMaxSymbols = 5, kMaxActions = 5;
  static constexpr int kMaxHorizon = 4;

  std::size_t num_states() const { return damage_cost.size(); }
  std::size_t num_maintenance() const { return transition.size(); }
  std::size_t num_inspection() const { return inspection_obs.size() + 1; }
  std::size_t num_actions() const { return num_maintenance() * num_inspection(); }

  void validate(int horizon) const {
    const std::size_t S = num_states();
    if (S == 0 || S > kMaxStates) throw SizeError("tiny model state count outside 1..5");
    if (num_actions() > kMaxActions) throw SizeError("tiny model has more than 5 actions");
    if (horizon < 0 || horizon > kMaxHorizon) throw SizeError("tiny model horizon outside 0..4");
    if (maintenance_cost.size() != num_maintenance() || inspection_cost.size() != num_inspection())
      throw DomainError("cost vectors do not match action counts");
    auto check_stochastic = [&](const Mat& m, std::size_t cols_max) {
      if (m.size() != S) throw DomainError("matrix row count must equal state count");
      for (auto const& row : m) {
        if (row.empty() || row.size() > cols_max || row.size() != m.front().size())
          throw SizeError("tiny model symbol count outside 1..5");
        Scalar sum(0);
        for (auto const& p : row) {
          if (p < Scalar(0)) throw DomainError("negative probability");
          sum += p;
        }
        if constexpr (std::is_floating_point_v<Scalar>) {
          if (std::abs(sum - Scalar(1)) > Scalar(1e-12)) throw DomainError("row does not sum to one");
        } else if (sum != Scalar(1)) {
          throw DomainError("row does not sum to one");
        }
      }
    };
    for (auto const& t : transition) check_stochastic(t, kMaxStates);
    check_stochastic(default_obs, kMaxSymbols);
    for (auto const& o : inspection_obs) check_stochastic(o, kMaxSymbols);
  }
};

template <class Scalar>
struct TinyBranch {
  Scalar probability;
  std::vector<Scalar> posterior;
};

// b' = b T[m].
template <class Scalar>
std::vector<Scalar> tiny_predict(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, std::size_t m) {
  const std::size_t S = M.num_states();
  std::vector<Scalar> out(S, Scalar(0));
  for (std::size_t s = 0; s < S; ++s)
    if (b[s] != Scalar(0))
      for (std::size_t sn = 0; sn < S; ++sn) out[sn] += b[s] * M.transition[m][s][sn];
  return out;
}

// Posterior branches over the joint symbol (default, inspection) after
// maintenance m and inspection k. Zero-probability branches are dropped.
template <class Scalar>
std::vector<TinyBranch<Scalar>> tiny_branches(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, std::size_t m,
                                              std::size_t k) {
  const auto pred = tiny_predict(M, b, m);
  const std::size_t S = M.num_states();
  const std::size_t De = M.default_obs.front().size();
  const std::size_t Di = k == 0 ? 1 : M.inspection_obs[k - 1].front().size();
  std::vector<TinyBranch<Scalar>> out;
  for (std::size_t oe = 0; oe < De; ++oe)
    for (std::size_t oi = 0; oi < Di; ++oi) {
      std::vector<Scalar> un(S);
      Scalar z(0);
      for (std::size_t s = 0; s < S; ++s) {
        un[s] = pred[s] * M.default_obs[s][oe];
        if (k > 0) un[s] *= M.inspection_obs[k - 1][s][oi];
        z += un[s];
      }
      if (z == Scalar(0)) continue;
      for (auto& x : un) x /= z;
      out.push_back({z, std::move(un)});
    }
  return out;
}

template <class Scalar>
Scalar tiny_step_cost(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, std::size_t m, std::size_t k) {
  const auto pred = tiny_predict(M, b, m);
  Scalar damage(0);
  for (std::size_t s = 0; s < M.num_states(); ++s) damage += pred[s] * M.damage_cost[s];
  return M.maintenance_cost[m] + M.discount * (M.inspection_cost[k] + damage);
}

namespace detail {

template <class Scalar>
Scalar tiny_value(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, int horizon);

template <class Scalar>
Scalar tiny_q(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, std::size_t m, std::size_t k, int horizon) {
  Scalar q = tiny_step_cost(M, b, m, k);
  if (horizon > 1) {
    Scalar cont(0);
    for (auto const& br : tiny_branches(M, b, m, k)) cont += br.probability * tiny_value(M, br.posterior, horizon - 1);
    q += M.discount * cont;
  }
  return q;
}

template <class Scalar>
Scalar tiny_value(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, int horizon) {
  if (horizon == 0) return Scalar(0);
  std::optional<Scalar> best;
  for (std::size_t m = 0; m < M.num_maintenance(); ++m)
    for (std::size_t k = 0; k < M.num_inspection(); ++k) {
      Scalar q = tiny_q(M, b, m, k, horizon);
      if (!best || q < *best) best = q;
    }
  return *best;
}

}  // namespace detail

// Q(b, m, k) for `horizon` remaining steps.
template <class Scalar>
Scalar tiny_q_value(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, std::size_t m, std::size_t k,
                    int horizon) {
  M.validate(horizon);
  return detail::tiny_q(M, b, m, k, horizon);
}

// Exact optimal cost-to-go over `horizon` steps (terminal value zero).
template <class Scalar>
Scalar expectimax_value(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, int horizon) {
  M.validate(horizon);
  return detail::tiny_value(M, b, horizon);
}

struct TinyDecision {
  std::size_t maintenance = 0;
  std::size_t inspection = 0;
};

// Lowest-index minimizer of Q.
template <class Scalar>
TinyDecision tiny_optimal_action(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, int horizon) {
  M.validate(horizon);
  if (horizon < 1) throw DomainError("no decision at horizon 0");
  TinyDecision best;
  std::optional<Scalar> bq;
  for (std::size_t m = 0; m < M.num_maintenance(); ++m)
    for (std::size_t k = 0; k < M.num_inspection(); ++k) {
      Scalar q = detail::tiny_q(M, b, m, k, horizon);
      if (!bq || q < *bq) {
        bq = q;
        best = {m, k};
      }
    }
  return best;
}

template <class Scalar>
struct TinyVoi {
  Scalar voi;
  Scalar net;
};

namespace detail {

// E[V_{h-1}(b')] over the symbols of (m, k).
template <class Scalar>
Scalar tiny_expected_next(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, std::size_t m, std::size_t k,
                          int horizon) {
  Scalar v(0);
  for (auto const& br : tiny_branches(M, b, m, k)) v += br.probability * tiny_value(M, br.posterior, horizon - 1);
  return v;
}

}  // namespace detail

// Exact step-wise VoI of inspection k at maintenance m under the optimal
// continuation value, with `horizon` steps remaining at b.
template <class Scalar>
TinyVoi<Scalar> tiny_voi(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b, std::size_t m, std::size_t k,
                         int horizon) {
  M.validate(horizon);
  if (horizon < 1) throw DomainError("VoI needs at least one step");
  Scalar voi = detail::tiny_expected_next(M, b, m, 0, horizon) - detail::tiny_expected_next(M, b, m, k, horizon);
  return {voi, voi - M.inspection_cost[k]};
}

// VoI of every (m, k); row m, column k, column 0 is zero.
template <class Scalar>
std::vector<std::vector<TinyVoi<Scalar>>> tiny_voi_table(const TinyPomdp<Scalar>& M, const std::vector<Scalar>& b,
                                                         int horizon) {
  M.validate(horizon);
  if (horizon < 1) throw DomainError("VoI needs at least one step");
  std::vector<std::vector<TinyVoi<Scalar>>> table(M.num_maintenance());
  for (std::size_t m = 0; m < M.num_maintenance(); ++m) {
    const Scalar base = detail::tiny_expected_next(M, b, m, 0, horizon);
    for (std::size_t k = 0; k < M.num_inspection(); ++k) {
      Scalar voi = k == 0 ? Scalar(0) : Scalar(base - detail::tiny_expected_next(M, b, m, k, horizon));
      table[m].push_back({voi, voi - M.inspection_cost[k]});
    }
  }
  return table;
}

}  // namespace imp
