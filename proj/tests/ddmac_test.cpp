#include <gtest/gtest.h>

#include <limits>
#include <memory>
#include <numeric>

#include "imp/ddmac.hpp"

using namespace imp;

namespace {

TrainConfig small_config(int episodes) {
  TrainConfig c;
  c.episodes = episodes;
  c.batch_size = 8;
  c.replay_capacity = 1000;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.exploration_episodes = episodes;
  c.seed = 4;
  return c;
}

AgentSet zero_agents(std::size_t n, int input) {
  AgentSet a;
  for (std::size_t i = 0; i < n; ++i) a.actors.emplace_back(std::vector<int>{input, 4, 5}, nn::Head::softmax);
  a.critic = nn::Mlp({input, 4, 1}, nn::Head::linear);
  return a;
}

ReplayTuple tuple_for(const EnvConfig& c, JointAction a, double cost) {
  Environment env(c);
  auto s = env.reset(1);
  auto out = env.step(s, trivial_action(env.num_components()));
  out.tuple.action = std::move(a);
  out.tuple.behavior_probs.assign(env.num_components(), 0.2);
  out.tuple.cost = cost;
  return out.tuple;
}

}  // namespace

TEST(Ddmac, JointProbabilityFactorizes) {
  const auto agents = zero_agents(2, 5);
  const auto jp = joint_policy(agents, std::vector<double>(5, 0.3));
  double sum = 0;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = 0; b < 5; ++b) {
      const double p = jp.probability({action_from_index(a), action_from_index(b)});
      EXPECT_NEAR(p, 1.0 / 25, 1e-15);
      sum += p;
    }
  EXPECT_NEAR(sum, 1.0, 1e-14);

  Rng rng(2);
  auto trained = AgentSet::create(2, 5, small_config(1), rng);
  const auto jq = joint_policy(trained, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5});
  sum = 0;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = 0; b < 5; ++b) {
      const JointAction ja{action_from_index(a), action_from_index(b)};
      EXPECT_DOUBLE_EQ(jq.probability(ja), jq.per_agent[0][a] * jq.per_agent[1][b]);
      sum += jq.probability(ja);
    }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Ddmac, AdvantageExamples) {
  EXPECT_DOUBLE_EQ(advantage(1.0, 0.5, 2.0, 1.0, false, 0.75), 0.25);
  EXPECT_DOUBLE_EQ(advantage(1.0, 0.5, 1.25, 99.0, true, 0.75), 0.25);
  EXPECT_EQ(advantage(0.0, 0.0, 0.0, 0.0, false, 0.975), 0.0);
}

TEST(Ddmac, ImportanceWeights) {
  EXPECT_EQ(importance_weight(std::vector<double>{0.2, 0.2}, std::vector<double>{0.2, 0.2}, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(importance_weight(std::vector<double>{0.5, 0.4}, std::vector<double>{0.5, 0.2}, 2.0), 2.0);
  EXPECT_EQ(importance_weight(std::vector<double>{0.9, 0.9}, std::vector<double>{0.3, 0.3}, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(importance_weight(std::vector<double>{0.3}, std::vector<double>{0.5}, 2.0), 0.6);
  EXPECT_THROW(importance_weight(std::vector<double>{0.3}, std::vector<double>{0.0}, 2.0), DomainError);
}

TEST(Ddmac, DualUpdate) {
  EXPECT_NEAR(dual_update(0.0, 0.105, 0.1, 1e-3), 5e-6, 1e-18);
  EXPECT_EQ(dual_update(0.0, 0.05, 0.1, 1e-3), 0.0);
  EXPECT_NEAR(dual_update(1.0, 0.0, 0.1, 1.0), 0.9, 1e-15);
  EXPECT_THROW(dual_update(-1e-9, 1, 0, 1), DomainError);
}

TEST(Ddmac, ZeroAdvantageLeavesNetworksUnchanged) {
  const EnvConfig c = EnvConfig::scaled();
  const int input = static_cast<int>(encoded_size(4));
  auto agents = zero_agents(4, input);
  const auto before = agents.all_networks();
  auto opt = Optimizers::create(agents, 1e-2, 1e-2);
  const auto r = tuple_for(c, JointAction(4, ComponentAction::replace), 0.0);
  const ReplayTuple* batch[] = {&r};
  update(batch, agents, {}, opt, {c.discount, 2.0, c.rate_horizon, c.horizon});
  const auto after = agents.all_networks();
  for (std::size_t k = 0; k < before.size(); ++k)
    for (std::size_t l = 0; l < before[k].layers().size(); ++l) {
      EXPECT_EQ(before[k].layers()[l].weight, after[k].layers()[l].weight);
      EXPECT_EQ(before[k].layers()[l].bias, after[k].layers()[l].bias);
    }
}

TEST(Ddmac, AdvantageSignMovesTakenActionProbability) {
  const EnvConfig c = EnvConfig::scaled();
  const JointAction a{ComponentAction::inspect, ComponentAction::replace, ComponentAction::none,
                      ComponentAction::partial_inspect};
  for (double cost : {1.0, -1.0}) {
    Rng rng(8);
    auto agents = AgentSet::create(4, static_cast<int>(encoded_size(4)), small_config(1), rng);
    auto opt = Optimizers::create(agents, 1e-3, 1e-3);
    auto r = tuple_for(c, a, cost);
    r.terminal = true;
    const auto x = encode(r.state, c.rate_horizon, c.horizon);
    const auto p0 = joint_policy(agents, x);
    const double v = state_value(agents.critic, x);
    ASSERT_LT(std::abs(v), std::abs(cost));
    const ReplayTuple* batch[] = {&r};
    update(batch, agents, {}, opt, {c.discount, 2.0, c.rate_horizon, c.horizon});
    const auto p1 = joint_policy(agents, x);
    for (std::size_t i = 0; i < 4; ++i) {
      if (cost > 0)
        EXPECT_LT(p1.per_agent[i][index_of(a[i])], p0.per_agent[i][index_of(a[i])]);
      else
        EXPECT_GT(p1.per_agent[i][index_of(a[i])], p0.per_agent[i][index_of(a[i])]);
    }
    // The critic moves toward the observed cost.
    EXPECT_LT(std::abs(state_value(agents.critic, x) - cost), std::abs(v - cost));
  }
}

TEST(Ddmac, NonFiniteValuesRaiseTrainingError) {
  const EnvConfig c = EnvConfig::scaled();
  auto agents = zero_agents(4, static_cast<int>(encoded_size(4)));
  agents.critic.layers().back().bias(0) = std::numeric_limits<double>::quiet_NaN();
  auto opt = Optimizers::create(agents, 1e-3, 1e-3);
  const auto r = tuple_for(c, trivial_action(4), 1.0);
  const ReplayTuple* batch[] = {&r};
  EXPECT_THROW(update(batch, agents, {}, opt, {c.discount, 2.0, c.rate_horizon, c.horizon}), TrainingError);
}

TEST(Ddmac, ReplayBufferIsFifo) {
  ReplayBuffer buf(3);
  for (int k = 0; k < 5; ++k) {
    ReplayTuple r;
    r.cost = k;
    buf.push(r);
  }
  ASSERT_EQ(buf.size(), 3u);
  std::vector<double> costs;
  for (std::size_t i = 0; i < 3; ++i) costs.push_back(buf[i].cost);
  std::sort(costs.begin(), costs.end());
  EXPECT_EQ(costs, (std::vector<double>{2, 3, 4}));
  EXPECT_THROW(ReplayBuffer(0), DomainError);
  EXPECT_THROW(ReplayBuffer(4).sample_indices(1, *std::make_unique<Rng>(1)), DomainError);
}

TEST(Ddmac, ReplaySamplingIsUniform) {
  ReplayBuffer buf(10);
  for (int k = 0; k < 10; ++k) buf.push({});
  Rng rng(12);
  std::array<int, 10> counts{};
  const int n = 100000;
  for (auto i : buf.sample_indices(n, rng)) ++counts[i];
  double chi2 = 0;
  for (int c : counts) chi2 += (c - n / 10.0) * (c - n / 10.0) / (n / 10.0);
  EXPECT_LT(chi2, 27.88);  // 9 degrees of freedom, p = 0.001
}

TEST(Ddmac, EpsilonSchedule) {
  TrainConfig c;
  c.exploration_episodes = 100;
  EXPECT_EQ(c.epsilon(0), 1.0);
  EXPECT_NEAR(c.epsilon(50), 0.505, 1e-15);
  EXPECT_EQ(c.epsilon(100), 0.01);
  EXPECT_EQ(c.epsilon(5000), 0.01);
  EXPECT_EQ(c.effective_lr_switch(), 5000);
}

TEST(Ddmac, ConfigValidation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.importance_clip = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.actor_lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.replay_capacity = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Ddmac, ExplorationFrequency) {
  auto cfg = small_config(30);
  cfg.epsilon_start = cfg.epsilon_end = 0.3;
  Trainer tr(EnvConfig::scaled(), cfg);
  int random = 0, total = 0;
  for (auto const& e : tr.train()) {
    random += e.random_actions;
    total += e.agent_steps;
  }
  EXPECT_EQ(total, 30 * 20 * 4);
  const double se = std::sqrt(0.3 * 0.7 / total);
  EXPECT_NEAR(double(random) / total, 0.3, 3 * se);
}

TEST(Ddmac, TrainingIsReproducible) {
  EnvConfig env = EnvConfig::scaled();
  env.soft_constraints = {{SoftConstraintKind::lifecycle_risk, 0.05, 0.0}};
  Trainer a(env, small_config(5)), b(env, small_config(5));
  const auto la = a.train(), lb = b.train();
  ASSERT_EQ(la.size(), 5u);
  for (std::size_t k = 0; k < la.size(); ++k) {
    EXPECT_EQ(la[k].total, lb[k].total);
    EXPECT_EQ(la[k].lambda, lb[k].lambda);
  }
  const auto na = a.agents().all_networks(), nb = b.agents().all_networks();
  for (std::size_t k = 0; k < na.size(); ++k) EXPECT_EQ(na[k].layers()[0].weight, nb[k].layers()[0].weight);
}

TEST(Ddmac, ZeroEpisodesKeepsInitialNetworks) {
  Trainer a(EnvConfig::scaled(), small_config(0));
  EXPECT_TRUE(a.train().empty());
  Rng init(4, "init");
  const auto fresh = AgentSet::create(4, static_cast<int>(encoded_size(4)), small_config(0), init);
  EXPECT_EQ(a.agents().actors[2].layers()[1].weight, fresh.actors[2].layers()[1].weight);
  EXPECT_EQ(a.buffer().size(), 0u);
}

TEST(Ddmac, ReplayStoresProposedActions) {
  EnvConfig env = EnvConfig::scaled();
  env.budget = BudgetSpec{0.0, 5, true};
  auto cfg = small_config(2);
  cfg.epsilon_start = cfg.epsilon_end = 1.0;
  Trainer tr(env, cfg);
  tr.train();
  int nontrivial = 0;
  for (std::size_t k = 0; k < tr.buffer().size(); ++k) nontrivial += tr.buffer()[k].action != trivial_action(4);
  EXPECT_GT(nontrivial, 0);
}

TEST(Ddmac, GreedyPolicyIsDeterministic) {
  Rng rng(6);
  const EnvConfig c = EnvConfig::scaled();
  const auto agents = AgentSet::create(4, static_cast<int>(encoded_size(4)), small_config(1), rng);
  Environment env(c);
  const auto s = env.reset(1);
  for (auto const& d : DdmacPolicy(agents, c, true)(s)) {
    EXPECT_EQ(*std::max_element(d.begin(), d.end()), 1.0);
    EXPECT_EQ(std::accumulate(d.begin(), d.end(), 0.0), 1.0);
  }
}

TEST(Ddmac, CheckpointShapeValidation) {
  std::vector<nn::Mlp> nets{nn::Mlp({3, 4}, nn::Head::softmax), nn::Mlp({3, 1}, nn::Head::linear)};
  EXPECT_THROW(AgentSet::from_networks(nets), ConfigError);
  nets[0] = nn::Mlp({3, 5}, nn::Head::softmax);
  EXPECT_NO_THROW(AgentSet::from_networks(nets));
  EXPECT_THROW(AgentSet::from_networks({nets[1]}), ConfigError);
}

TEST(Ddmac, CheckpointMustFitEnvironment) {
  Rng rng(1);
  const auto agents = AgentSet::create(4, static_cast<int>(encoded_size(4)), small_config(1), rng);
  EXPECT_NO_THROW(agents.check_shape(4));
  EXPECT_THROW(agents.check_shape(10), ConfigError);
  auto wrong = AgentSet::create(4, static_cast<int>(encoded_size(4)) + 1, small_config(1), rng);
  EXPECT_THROW(wrong.check_shape(4), ConfigError);
}

// With zero multipliers, no budget and behaviour equal to the current
// policy, one update is a plain actor-critic step. Adam is made linear
// (huge epsilon) so parameter changes equal minus the gradient, which is
// compared with finite differences of the actor-critic losses.
TEST(Ddmac, OnPolicyUpdateIsVanillaActorCritic) {
  EnvConfig c = EnvConfig::scaled();
  c.soft_constraints = {{SoftConstraintKind::lifecycle_risk, 1.0, 0.0, 0.0, CostComponent::risk}};
  Environment env(c);
  Rng init(6);
  const int in = static_cast<int>(encoded_size(4));
  AgentSet agents = AgentSet::create(4, in, small_config(1), init);
  const AgentSet before = agents;
  auto enc = [&](const DecisionState& d) { return to_vector(encode(d, c.rate_horizon, c.horizon)); };

  std::vector<ReplayTuple> tuples;
  Rng pick(8);
  auto s = env.reset(3);
  while (s.t() < c.horizon) {
    const auto jp = joint_policy(agents, env.encode_state(s));
    const auto a = sample_joint_action(jp.per_agent, pick);
    auto out = env.step(s, a);
    out.tuple.behavior_probs.clear();
    for (std::size_t i = 0; i < 4; ++i) out.tuple.behavior_probs.push_back(jp.per_agent[i][index_of(a[i])]);
    tuples.push_back(out.tuple);
  }
  std::vector<const ReplayTuple*> batch;
  for (std::size_t k = 0; k < tuples.size(); k += 2) batch.push_back(&tuples[k]);
  batch.push_back(&tuples.back());
  const double B = static_cast<double>(batch.size());

  Optimizers opt = Optimizers::create(agents, 1.0, 1.0);
  for (auto& o : opt.actors) o.epsilon = o.learning_rate = 1e7;
  opt.critic.epsilon = opt.critic.learning_rate = 1e7;
  const std::vector<double> lambda{0.0};
  const UpdateContext ctx{c.discount, 2.0, c.rate_horizon, c.horizon};
  const auto stats = update(batch, agents, lambda, opt, ctx);
  EXPECT_NEAR(stats.mean_weight, 1.0, 1e-12);

  std::vector<double> adv;
  for (auto const* r : batch) {
    const double vn = r->terminal ? 0.0 : before.critic.forward(enc(r->next))(0);
    adv.push_back(r->cost + c.discount * vn - before.critic.forward(enc(r->state))(0));
  }
  auto actor_loss = [&](const nn::Mlp& net, std::size_t i) {
    double f = 0;
    for (std::size_t j = 0; j < batch.size(); ++j)
      f += adv[j] * std::log(net.forward(enc(batch[j]->state))(index_of(batch[j]->action[i])));
    return f / B;
  };
  auto critic_loss = [&](const nn::Mlp& net) {
    double f = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const double target = batch[j]->cost + (batch[j]->terminal ? 0.0 : c.discount * before.critic.forward(enc(batch[j]->next))(0));
      const double e = target - net.forward(enc(batch[j]->state))(0);
      f += 0.5 * e * e;
    }
    return f / B;
  };
  auto compare = [&](nn::Mlp net, const nn::Mlp& after, auto loss) {
    const double h = 1e-6;
    double worst = 0, scale = 0;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto visit = [&](auto& p, const auto& q) {
        for (Eigen::Index k = 0; k < p.size(); ++k) {
          const double saved = p.data()[k];
          p.data()[k] = saved + h;
          const double up = loss(net);
          p.data()[k] = saved - h;
          const double down = loss(net);
          p.data()[k] = saved;
          const double g = (up - down) / (2 * h);
          const double step = saved - q.data()[k];
          worst = std::max(worst, std::abs(step - g));
          scale = std::max(scale, std::abs(g));
        }
      };
      visit(net.layers()[l].weight, after.layers()[l].weight);
      visit(net.layers()[l].bias, after.layers()[l].bias);
    }
    EXPECT_GT(scale, 1e-6);
    EXPECT_LE(worst, 1e-6 * std::max(1.0, scale));
  };
  for (std::size_t i = 0; i < 4; ++i)
    compare(before.actors[i], agents.actors[i], [&](const nn::Mlp& n) { return actor_loss(n, i); });
  compare(before.critic, agents.critic, critic_loss);
}
