#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "imp/env.hpp"

using namespace imp;

namespace {

EnvConfig two_component() {
  EnvConfig c;
  c.horizon = 10;
  c.rate_horizon = 10;
  c.topology = {{{0}, {1}}, {{0, 1}}, {TypeLabel::III, TypeLabel::II}};
  return c;
}

struct FixedPolicy {
  ComponentAction a;
  std::vector<ActionDistribution> operator()(const EnvState& s) const {
    return std::vector<ActionDistribution>(s.hidden.size(), one_hot(a));
  }
};

}  // namespace

TEST(Env, ResetDefaults) {
  Environment env(EnvConfig::standard());
  const auto s = env.reset(1);
  EXPECT_EQ(s.beliefs.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(s.beliefs.components[i].probs, point_mass(DamageState::intact));
    EXPECT_EQ(s.beliefs.components[i].tau, 1);
    EXPECT_EQ(s.hidden[i], DamageState::intact);
  }
  EXPECT_EQ(s.t(), 0);
  EXPECT_EQ(s.budget.used, 0.0);
}

TEST(Env, ResetSamplesInitialBelief) {
  EnvConfig c = two_component();
  c.initial_belief = {0.5, 0.3, 0.2, 0, 0};
  Environment env(c);
  std::array<int, 5> counts{};
  const int n = 100000;
  for (int k = 0; k < n; ++k) ++counts[index_of(env.reset(7, static_cast<std::uint64_t>(k)).hidden[0])];
  for (int s = 0; s < 5; ++s) {
    const double p = c.initial_belief[s];
    const double se = std::sqrt(p * (1 - p) / n);
    EXPECT_LE(std::abs(double(counts[s]) / n - p), 3 * se + 1e-12);
  }
}

TEST(Env, Determinism) {
  Environment a(EnvConfig::scaled()), b(EnvConfig::scaled());
  auto sa = a.reset(42, 3), sb = b.reset(42, 3);
  Rng pick(1);
  while (sa.t() < 20) {
    JointAction act(4);
    for (auto& x : act) x = action_from_index(pick.index(5));
    const auto oa = a.step(sa, act);
    const auto ob = b.step(sb, act);
    EXPECT_EQ(sa.hidden, sb.hidden);
    EXPECT_EQ(oa.tuple, ob.tuple);
  }
  EXPECT_EQ(sa.ledger.total(), sb.ledger.total());
}

TEST(Env, TrivialStepFromIntact) {
  Environment env(EnvConfig::standard());
  auto s = env.reset(1);
  const auto out = env.step(s, trivial_action(10));
  EXPECT_EQ(out.costs.maintenance, 0.0);
  EXPECT_EQ(out.costs.inspection, 0.0);
  EXPECT_EQ(out.costs.shutdown, 0.0);
  EXPECT_GT(out.costs.damage, 0.0);
  EXPECT_EQ(s.t(), 1);
  EXPECT_FALSE(out.tuple.terminal);
}

TEST(Env, ReplaceAllGivesIntactBeliefs) {
  Environment env(EnvConfig::standard());
  auto s = env.reset(1);
  for (int t = 0; t < 5; ++t) env.step(s, trivial_action(10));
  env.step(s, JointAction(10, ComponentAction::replace));
  for (auto const& b : s.beliefs.components) {
    EXPECT_EQ(b.probs, point_mass(DamageState::intact));
    EXPECT_EQ(b.tau, 1);
  }
  for (auto h : s.hidden) EXPECT_EQ(h, DamageState::intact);
  for (int a : s.ages) EXPECT_EQ(a, 0);
}

TEST(Env, GatedActionIsTrivial) {
  EnvConfig c = EnvConfig::scaled();
  c.budget = BudgetSpec{0.05, 5, true};
  Environment env(c);
  auto s = env.reset(3);
  const auto out = env.step(s, JointAction(4, ComponentAction::replace));
  EXPECT_TRUE(out.gated);
  EXPECT_EQ(out.costs.maintenance, 0.0);
  EXPECT_EQ(out.costs.inspection, 0.0);
  EXPECT_EQ(out.costs.shutdown, 0.0);
  EXPECT_EQ(out.tuple.action, trivial_action(4));
  EXPECT_EQ(s.budget.used, 0.0);
  // Trivial dynamics: rate clocks advanced instead of resetting.
  for (auto const& b : s.beliefs.components) EXPECT_EQ(b.tau, 2);
}

TEST(Env, InfiniteCapMatchesUngated) {
  EnvConfig gated = EnvConfig::scaled();
  gated.budget = BudgetSpec{};
  const auto a = rollout(UniformPolicy{}, EnvConfig::scaled(), 11, 2);
  const auto b = rollout(UniformPolicy{}, gated, 11, 2);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    EXPECT_EQ(a.steps[t].action, b.steps[t].action);
    EXPECT_EQ(a.steps[t].beliefs[0].probs, b.steps[t].beliefs[0].probs);
  }
  EXPECT_EQ(a.ledger.total(), b.ledger.total());
}

TEST(Env, SteppingPastHorizonThrows) {
  Environment env(two_component());
  auto s = env.reset(1);
  for (int t = 0; t < 10; ++t) {
    const auto out = env.step(s, trivial_action(2));
    EXPECT_EQ(out.tuple.terminal, t == 9);
  }
  EXPECT_THROW(env.step(s, trivial_action(2)), LifecycleError);
  EXPECT_NO_THROW(env.reset(1));
}

TEST(Env, WrongActionSizeThrows) {
  Environment env(two_component());
  auto s = env.reset(1);
  EXPECT_THROW(env.step(s, trivial_action(3)), DomainError);
}

TEST(Env, ReplayTupleRoundTrip) {
  EnvConfig c = EnvConfig::scaled();
  c.soft_constraints = {{SoftConstraintKind::lifecycle_risk, 1.0, 0.1}};
  Environment env(c);
  auto s = env.reset(5);
  std::stringstream ss;
  std::vector<ReplayTuple> written;
  Rng pick(2);
  while (s.t() < 20) {
    JointAction a(4);
    for (auto& x : a) x = action_from_index(pick.index(5));
    auto out = env.step(s, a);
    out.tuple.behavior_probs = {0.1, 0.2, 0.3, 0.4};
    write_tuple(ss, out.tuple);
    written.push_back(out.tuple);
  }
  for (auto const& w : written) EXPECT_EQ(read_tuple(ss), w);
  EXPECT_THROW(read_tuple(ss), ConfigError);
}

TEST(Env, ZeroLossTrivialPolicyCostsNothing) {
  EnvConfig c = EnvConfig::scaled();
  c.discount = 1.0;
  c.losses = LossTable::zero();
  const auto tr = rollout(TrivialPolicy{}, c, 9);
  EXPECT_EQ(tr.ledger.total(), 0.0);
}

TEST(Env, LedgerIdentityOnRollouts) {
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto tr = rollout(UniformPolicy{}, EnvConfig::scaled(), 1, k);
    const auto& L = tr.ledger;
    EXPECT_NEAR(L.total(), L.maintenance() + L.shutdown() + 0.975 * (L.inspection() + L.risk()), 1e-10);
  }
}

TEST(Env, EncodingLayout) {
  Environment env(EnvConfig::scaled());
  auto s = env.reset(1);
  env.step(s, trivial_action(4));
  const auto x = env.encode_state(s);
  ASSERT_EQ(x.size(), encoded_size(4));
  EXPECT_EQ(x.size(), 26u);
  EXPECT_EQ(x[20], 2.0 / 20.0);     // tau of component 0
  EXPECT_EQ(x[24], 1.0 / 20.0);     // t / T
  EXPECT_EQ(x[25], 1.0);            // no budget
}

// Among episodes sharing an observation history the hidden state is
// distributed as the belief.
TEST(Env, BeliefMatchesHiddenFrequencies) {
  Environment env(two_component());
  const FixedPolicy inspect_all{ComponentAction::inspect};
  struct Bin {
    StateVector belief;
    std::array<int, 5> counts{};
    int n = 0;
  };
  std::map<std::vector<int>, Bin> bins;
  Rng dummy(0);
  for (std::uint64_t k = 0; k < 40000; ++k) {
    auto s = env.reset(77, k);
    std::vector<int> history;
    for (int t = 0; t < 3; ++t) {
      const auto out = env.step(s, sample_joint_action(inspect_all(s), dummy));
      history.push_back(out.observations[0]);
    }
    auto& bin = bins[history];
    bin.belief = s.beliefs.components[0].probs;
    ++bin.counts[index_of(s.hidden[0])];
    ++bin.n;
  }
  int checked = 0;
  for (auto const& [h, bin] : bins) {
    if (bin.n < 2000) continue;
    ++checked;
    for (int st = 0; st < 5; ++st) {
      const double p = bin.belief[st];
      const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / bin.n);
      EXPECT_LE(std::abs(double(bin.counts[st]) / bin.n - p), 3 * se + 1e-9) << "state " << st;
    }
  }
  EXPECT_GE(checked, 2);
}
