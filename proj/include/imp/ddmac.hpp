#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imp/action.hpp"
#include "imp/constraints.hpp"
#include "imp/env.hpp"
#include "imp/errors.hpp"
#include "imp/neural.hpp"
#include "imp/rng.hpp"

namespace imp {

struct TrainConfig {
  int episodes = 10000;
  int batch_size = 32;
  std::size_t replay_capacity = 300000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.01;
  int exploration_episodes = 2500;
  double critic_lr = 1e-3;
  double critic_lr_final = 1e-4;
  double actor_lr = 1e-4;
  double actor_lr_final = 1e-5;
  // Episode at which learning rates drop to their final values; negative
  // means half-way through training.
  int lr_switch_episode = -1;
  double dual_lr = 1e-5;
  double importance_clip = 2.0;
  int updates_per_step = 1;
  std::vector<int> actor_hidden{50, 50};
  std::vector<int> critic_hidden{150, 150};
  std::uint64_t seed = 0;

  // Settings for the 4-component, 20-step environment: short exploration,
  // near-greedy behaviour afterwards, larger batches and several updates per
  // step. The dual rate matches the scale of its constraint returns.
  static TrainConfig scaled() {
    TrainConfig t;
    t.episodes = 2000;
    t.exploration_episodes = 300;
    t.epsilon_end = 0.001;
    t.batch_size = 128;
    t.dual_lr = 0.01;
    t.actor_lr_final = 5e-5;
    t.critic_lr_final = 3e-4;
    t.lr_switch_episode = 1500;
    t.updates_per_step = 4;
    return t;
  }

  void validate() const {
    if (episodes < 0) throw ConfigError("episodes must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (replay_capacity < static_cast<std::size_t>(batch_size)) throw ConfigError("replay capacity below batch size");
    if (!(critic_lr > 0 && critic_lr_final > 0 && actor_lr > 0 && actor_lr_final > 0 && dual_lr > 0))
      throw ConfigError("learning rates must be positive");
    if (!(importance_clip >= 1.0)) throw ConfigError("importance weight clip must be >= 1");
    if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1))
      throw ConfigError("exploration rates must lie in [0,1]");
    if (updates_per_step < 0) throw ConfigError("updates_per_step must be >= 0");
  }

  int effective_lr_switch() const { return lr_switch_episode >= 0 ? lr_switch_episode : episodes / 2; }

  // Linear annealing over the first exploration_episodes, constant after.
  double epsilon(int episode) const {
    if (exploration_episodes <= 0 || episode >= exploration_episodes) return epsilon_end;
    const double f = static_cast<double>(episode) / exploration_episodes;
    return epsilon_start + f * (epsilon_end - epsilon_start);
  }
};

// One actor per control unit (no shared parameters) and one critic.
struct AgentSet {
  std::vector<nn::Mlp> actors;
  nn::Mlp critic;

  static AgentSet create(std::size_t n_agents, int input_size, const TrainConfig& cfg, Rng& rng) {
    AgentSet a;
    auto sizes = [&](const std::vector<int>& hidden, int out) {
      std::vector<int> s{input_size};
      s.insert(s.end(), hidden.begin(), hidden.end());
      s.push_back(out);
      return s;
    };
    for (std::size_t i = 0; i < n_agents; ++i) {
      nn::Mlp actor(sizes(cfg.actor_hidden, static_cast<int>(kNumComponentActions)), nn::Head::softmax);
      actor.initialize(rng);
      a.actors.push_back(std::move(actor));
    }
    a.critic = nn::Mlp(sizes(cfg.critic_hidden, 1), nn::Head::linear);
    a.critic.initialize(rng);
    return a;
  }

  std::vector<nn::Mlp> all_networks() const {
    std::vector<nn::Mlp> v = actors;
    v.push_back(critic);
    return v;
  }

  static AgentSet from_networks(std::vector<nn::Mlp> nets) {
    if (nets.size() < 2) throw ConfigError("checkpoint must hold at least one actor and a critic");
    AgentSet a;
    a.critic = std::move(nets.back());
    nets.pop_back();
    a.actors = std::move(nets);
    for (auto const& actor : a.actors)
      if (actor.head() != nn::Head::softmax || actor.output_size() != static_cast<int>(kNumComponentActions))
        throw ConfigError("actor networks must have a 5-way softmax head");
    if (a.critic.head() != nn::Head::linear || a.critic.output_size() != 1)
      throw ConfigError("critic must have a scalar linear head");
    return a;
  }

  // Throws ConfigError unless the networks fit an environment with
  // `n_components` control units.
  void check_shape(std::size_t n_components) const {
    if (actors.size() != n_components)
      throw ConfigError("checkpoint has " + std::to_string(actors.size()) + " actors, environment has " +
                        std::to_string(n_components) + " components");
    const int in = static_cast<int>(encoded_size(n_components));
    for (auto const& actor : actors)
      if (actor.input_size() != in) throw ConfigError("actor input size does not match the environment");
    if (critic.input_size() != in) throw ConfigError("critic input size does not match the environment");
  }
};

inline nn::Vector to_vector(std::span<const double> x) {
  return Eigen::Map<const nn::Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

struct JointPolicy {
  std::vector<ActionDistribution> per_agent;

  // Factored joint probability of a joint action.
  double probability(const JointAction& a) const {
    double p = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) p *= per_agent[i][index_of(a[i])];
    return p;
  }
};

inline JointPolicy joint_policy(const AgentSet& agents, std::span<const double> input) {
  const nn::Vector x = to_vector(input);
  JointPolicy jp;
  jp.per_agent.reserve(agents.actors.size());
  for (auto const& actor : agents.actors) {
    const nn::Vector p = actor.forward(x);
    ActionDistribution d;
    for (std::size_t k = 0; k < kNumComponentActions; ++k) d[k] = p(static_cast<Eigen::Index>(k));
    jp.per_agent.push_back(d);
  }
  return jp;
}

inline double state_value(const nn::Mlp& critic, std::span<const double> input) {
  return critic.forward(to_vector(input))(0);
}

// Temporal-difference estimate of the Lagrangian cost advantage.
inline double advantage(double cost, double penalty, double value, double next_value, bool terminal,
                        double discount) {
  return terminal ? cost + penalty - value : cost + penalty + discount * next_value - value;
}

inline double advantage(const ReplayTuple& r, const nn::Mlp& critic, std::span<const double> lambda,
                        double discount, int rate_horizon, int horizon) {
  const double penalty = lagrangian_penalty(lambda, r.soft_g);
  const double v = state_value(critic, encode(r.state, rate_horizon, horizon));
  const double vn = r.terminal ? 0.0 : state_value(critic, encode(r.next, rate_horizon, horizon));
  return advantage(r.cost, penalty, v, vn, r.terminal, discount);
}

// Truncated importance weight min(clip, prod_i pi_i(a_i) / mu_i(a_i)).
inline double importance_weight(std::span<const double> target_probs, std::span<const double> behavior_probs,
                                double clip) {
  double ratio = 1.0;
  for (std::size_t i = 0; i < target_probs.size(); ++i) {
    if (!(behavior_probs[i] > 0.0)) throw DomainError("behavior probability must be positive");
    ratio *= target_probs[i] / behavior_probs[i];
  }
  return std::min(clip, ratio);
}

inline double importance_weight(const ReplayTuple& r, const AgentSet& agents, double clip, int rate_horizon,
                                int horizon) {
  const auto jp = joint_policy(agents, encode(r.state, rate_horizon, horizon));
  std::vector<double> target(r.action.size());
  for (std::size_t i = 0; i < r.action.size(); ++i) target[i] = jp.per_agent[i][index_of(r.action[i])];
  return importance_weight(target, r.behavior_probs, clip);
}

// Projected dual ascent on one multiplier.
inline double dual_update(double lambda, double constraint_return, double threshold, double lr) {
  if (lambda < 0.0) throw DomainError("Lagrange multiplier must be >= 0");
  return std::max(0.0, lambda + lr * (constraint_return - threshold));
}

// Bounded FIFO of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw DomainError("replay capacity must be positive");
  }

  void push(ReplayTuple r) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(r));
    } else {
      data_[head_] = std::move(r);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const ReplayTuple& operator[](std::size_t i) const { return data_[i]; }

  // Indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
    if (data_.empty()) throw DomainError("cannot sample from an empty replay buffer");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = rng.index(data_.size());
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<ReplayTuple> data_;
};

struct Optimizers {
  std::vector<nn::AdamState> actors;
  nn::AdamState critic;

  static Optimizers create(const AgentSet& a, double actor_lr, double critic_lr) {
    Optimizers o;
    for (auto const& actor : a.actors) o.actors.push_back(nn::AdamState::for_network(actor, actor_lr));
    o.critic = nn::AdamState::for_network(a.critic, critic_lr);
    return o;
  }

  void set_rates(double actor_lr, double critic_lr) {
    for (auto& s : actors) s.learning_rate = actor_lr;
    critic.learning_rate = critic_lr;
  }
};

struct UpdateStats {
  double mean_advantage = 0.0;
  double mean_abs_advantage = 0.0;
  double mean_weight = 0.0;
};

struct UpdateContext {
  double discount = 0.975;
  double importance_clip = 2.0;
  int rate_horizon = 50;
  int horizon = 50;
};

// One off-policy actor-critic step on a minibatch. Actors descend
// w * A * grad log pi_i(a_i); the critic descends the semi-gradient of
// w * A^2 / 2 with the bootstrap target held fixed.
inline UpdateStats update(std::span<const ReplayTuple* const> batch, AgentSet& agents, std::span<const double> lambda,
                          Optimizers& opt, const UpdateContext& ctx) {
  if (batch.empty()) throw DomainError("empty minibatch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int in = agents.critic.input_size();
  nn::Matrix x(in, B), xn(in, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    encode(batch[j]->state, ctx.rate_horizon, ctx.horizon, std::span<double>(x.col(j).data(), in));
    encode(batch[j]->next, ctx.rate_horizon, ctx.horizon, std::span<double>(xn.col(j).data(), in));
  }

  nn::Cache critic_cache;
  const nn::Matrix v = agents.critic.forward(x, &critic_cache);
  const nn::Matrix vn = agents.critic.forward(xn);

  const std::size_t n_agents = agents.actors.size();
  std::vector<nn::Cache> caches(n_agents);
  std::vector<nn::Matrix> probs(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) probs[i] = agents.actors[i].forward(x, &caches[i]);

  nn::Vector adv(B), w(B);
  UpdateStats stats;
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto& r = *batch[j];
    adv(j) = advantage(r.cost, lagrangian_penalty(lambda, r.soft_g), v(0, j), vn(0, j), r.terminal, ctx.discount);
    double ratio = 1.0;
    for (std::size_t i = 0; i < n_agents; ++i) {
      const double mu = r.behavior_probs[i];
      if (!(mu > 0.0)) throw DomainError("behavior probability must be positive");
      ratio *= probs[i](static_cast<Eigen::Index>(index_of(r.action[i])), j) / mu;
    }
    w(j) = std::min(ctx.importance_clip, ratio);
    stats.mean_advantage += adv(j) / B;
    stats.mean_abs_advantage += std::abs(adv(j)) / B;
    stats.mean_weight += w(j) / B;
  }
  if (!adv.allFinite() || !w.allFinite()) throw TrainingError("non-finite advantage or importance weight");

  const nn::Vector scale = (w.array() * adv.array() / static_cast<double>(B)).matrix();
  for (std::size_t i = 0; i < n_agents; ++i) {
    // d/dz log softmax(z)_a = e_a - p
    nn::Matrix dz = -probs[i];
    for (Eigen::Index j = 0; j < B; ++j) dz(static_cast<Eigen::Index>(index_of(batch[j]->action[i])), j) += 1.0;
    dz = dz * scale.asDiagonal();
    const auto g = agents.actors[i].backward_logits(caches[i], dz);
    if (!g.all_finite()) throw TrainingError("non-finite actor gradient for agent " + std::to_string(i));
    nn::adam_step(agents.actors[i], g, opt.actors[i]);
  }
  const nn::Matrix critic_grad = -scale.transpose();
  const auto gc = agents.critic.backward(critic_cache, critic_grad);
  if (!gc.all_finite()) throw TrainingError("non-finite critic gradient");
  nn::adam_step(agents.critic, gc, opt.critic);
  return stats;
}

struct EpisodeLog {
  int episode = 0;
  double total = 0.0;
  double maintenance = 0.0;
  double inspection = 0.0;
  double shutdown = 0.0;
  double risk = 0.0;
  std::vector<double> lambda;
  std::vector<double> constraint_returns;
  double epsilon = 0.0;
  int random_actions = 0;  // agent-steps that explored
  int agent_steps = 0;
};

// Policy backed by trained actors; samples from (or maximizes) each actor's
// distribution.
class DdmacPolicy {
 public:
  DdmacPolicy(const AgentSet& agents, const EnvConfig& config, bool greedy = false)
      : agents_(&agents), config_(&config), greedy_(greedy) {}

  std::vector<ActionDistribution> operator()(const EnvState& s) const {
    DecisionState d;
    for (auto const& b : s.beliefs.components) {
      d.beliefs.push_back(b.probs);
      d.taus.push_back(b.tau);
    }
    d.t = s.t();
    d.budget_remaining = config_->budget ? s.budget.remaining_fraction(*config_->budget) : 1.0;
    auto jp = joint_policy(*agents_, encode(d, config_->rate_horizon, config_->horizon));
    if (greedy_)
      for (auto& dist : jp.per_agent) {
        const auto best = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        dist = one_hot(action_from_index(best));
      }
    return jp.per_agent;
  }

 private:
  const AgentSet* agents_;
  const EnvConfig* config_;
  bool greedy_;
};

// Constrained decentralized multi-agent actor-critic training loop.
class Trainer {
 public:
  Trainer(EnvConfig env_config, TrainConfig cfg)
      : env_(std::move(env_config)), cfg_(std::move(cfg)), buffer_(cfg_.replay_capacity) {
    cfg_.validate();
    Rng init(cfg_.seed, "init");
    const int input = static_cast<int>(encoded_size(env_.num_components()));
    agents_ = AgentSet::create(env_.num_components(), input, cfg_, init);
    opt_ = Optimizers::create(agents_, cfg_.actor_lr, cfg_.critic_lr);
    for (auto const& s : env_.config().soft_constraints) lambda_.push_back(s.multiplier);
  }

  const AgentSet& agents() const { return agents_; }
  const std::vector<double>& multipliers() const { return lambda_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const Environment& environment() const { return env_; }

  // Runs the configured number of episodes; `on_episode` sees each log
  // entry as it is produced.
  std::vector<EpisodeLog> train(const std::function<void(const EpisodeLog&)>& on_episode = {}) {
    std::vector<EpisodeLog> log;
    for (int ep = 0; ep < cfg_.episodes; ++ep) {
      log.push_back(run_episode(ep));
      if (on_episode) on_episode(log.back());
    }
    return log;
  }

  EpisodeLog run_episode(int ep) {
    if (ep == cfg_.effective_lr_switch()) opt_.set_rates(cfg_.actor_lr_final, cfg_.critic_lr_final);
    const auto& ec = env_.config();
    const double eps = cfg_.epsilon(ep);
    Rng explore(cfg_.seed, "explore", static_cast<std::uint64_t>(ep));
    Rng sampler(cfg_.seed, "replay", static_cast<std::uint64_t>(ep));
    const UpdateContext ctx{ec.discount, cfg_.importance_clip, ec.rate_horizon, ec.horizon};

    EpisodeLog entry;
    entry.episode = ep;
    entry.epsilon = eps;
    EnvState s = env_.reset(cfg_.seed, static_cast<std::uint64_t>(ep));
    const std::size_t n = env_.num_components();
    while (s.t() < ec.horizon) {
      const auto jp = joint_policy(agents_, env_.encode_state(s));
      JointAction a(n);
      std::vector<double> mu(n);
      for (std::size_t i = 0; i < n; ++i) {
        const bool random = explore.uniform() < eps;
        const double u = explore.uniform();
        if (random) {
          a[i] = action_from_index(std::min<std::size_t>(kNumComponentActions - 1,
                                                         static_cast<std::size_t>(u * kNumComponentActions)));
          ++entry.random_actions;
        } else {
          a[i] = action_from_index(sample_discrete(jp.per_agent[i], u));
        }
        mu[i] = eps / kNumComponentActions + (1.0 - eps) * jp.per_agent[i][index_of(a[i])];
        ++entry.agent_steps;
      }
      auto out = env_.step(s, a);
      // Replay keeps the action the agents chose; gating is part of the
      // environment response.
      out.tuple.action = a;
      out.tuple.behavior_probs = std::move(mu);
      buffer_.push(std::move(out.tuple));

      if (buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size)) {
        for (int u = 0; u < cfg_.updates_per_step; ++u) {
          const auto idx = buffer_.sample_indices(static_cast<std::size_t>(cfg_.batch_size), sampler);
          std::vector<const ReplayTuple*> batch;
          batch.reserve(idx.size());
          for (auto k : idx) batch.push_back(&buffer_[k]);
          update(batch, agents_, lambda_, opt_, ctx);
        }
      }
    }
    entry.total = s.ledger.total();
    entry.maintenance = s.ledger.maintenance();
    entry.inspection = s.ledger.inspection();
    entry.shutdown = s.ledger.shutdown();
    entry.risk = s.ledger.risk();

    if (!lambda_.empty()) {
      // Dual ascent from a fresh on-policy episode.
      const auto traj = rollout(DdmacPolicy(agents_, ec), env_, cfg_.seed ^ 0x5d0a1ULL, static_cast<std::uint64_t>(ep));
      entry.constraint_returns = traj.soft_returns;
      for (std::size_t m = 0; m < lambda_.size(); ++m)
        lambda_[m] = dual_update(lambda_[m], traj.soft_returns[m], ec.soft_constraints[m].threshold, cfg_.dual_lr);
    }
    entry.lambda = lambda_;
    return entry;
  }

 private:
  Environment env_;
  TrainConfig cfg_;
  AgentSet agents_;
  Optimizers opt_;
  ReplayBuffer buffer_;
  std::vector<double> lambda_;
};

}  // namespace imp
