#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cheaptalk/belief/belief.hpp"
#include "cheaptalk/belief/obl.hpp"
#include "cheaptalk/env/maze.hpp"
#include "cheaptalk/learn/config.hpp"
#include "cheaptalk/learn/evaluate.hpp"
#include "cheaptalk/learn/losses.hpp"
#include "cheaptalk/learn/replay.hpp"
#include "cheaptalk/mi/mi_engine.hpp"
#include "cheaptalk/nn/adam.hpp"
#include "cheaptalk/nn/agent_net.hpp"
#include "cheaptalk/nn/checkpoint.hpp"

namespace cheaptalk::learn {

enum class Stage { kDiscovery, kUtilization };

inline std::string_view stage_name(Stage s) {
  return s == Stage::kDiscovery ? "discovery" : "utilization";
}

struct Agent {
  nn::AgentNet online;
  nn::AgentNet target;
  nn::Adam optimizer;
};

struct TrainerStats {
  long env_steps = 0;
  long train_steps = 0;
  long dial_updates = 0;
  long mi_loss_updates = 0;
  long sampler_fallbacks = 0;
  int episodes = 0;
  // Episode index of the first DIAL update and of the last MI-loss update.
  std::optional<int> first_dial_episode;
  std::optional<int> last_mi_loss_episode;
};

// One evaluation point of a run.
struct EvalPoint {
  int episode = 0;
  Stage stage = Stage::kDiscovery;
  double epsilon = 0.0;
  EvalResult result;
  TrainerStats stats;
};

class Trainer {
 public:
  Trainer(std::shared_ptr<const Maze> maze, TrainerConfig cfg)
      : maze_(std::move(maze)), cfg_(cfg), traits_(traits(cfg.algorithm)), rng_(cfg.seed),
        obl_replay_(cfg.buffer_capacity), dial_replay_(cfg.buffer_capacity) {
    cfg_.validate();
    for (Role r : kRoles) {
      nn::AgentNetConfig nc;
      nc.input_size = maze_->observation_size(r);
      nc.hidden_size = cfg_.hidden_size;
      nc.trunk_size = cfg_.hidden_size;
      nn::AgentNet online(nc);
      online.init_xavier(rng_);
      nn::AgentNet target = online.clone();
      nn::AdamConfig ac;
      ac.learning_rate = cfg_.learning_rate;
      agents_[index_of(r)] =
          std::make_unique<Agent>(Agent{std::move(online), std::move(target), {}});
      Agent& a = *agents_[index_of(r)];
      a.optimizer = nn::Adam(a.online.parameters(), ac);
    }
  }

  const TrainerConfig& config() const { return cfg_; }
  const Maze& maze() const { return *maze_; }
  const TrainerStats& stats() const { return stats_; }
  const Agent& agent(Role r) const { return *agents_[index_of(r)]; }
  Agent& agent(Role r) { return *agents_[index_of(r)]; }
  const ObLReplay& obl_replay() const { return obl_replay_; }
  const DialReplay& dial_replay() const { return dial_replay_; }

  Stage stage() const {
    return traits_.utilization_stage && stats_.episodes >= cfg_.num_discovery_episodes
               ? Stage::kUtilization
               : Stage::kDiscovery;
  }

  double epsilon() const { return cfg_.epsilon.at(stats_.env_steps); }

  // Plays one training episode and learns along the way.
  void run_episode() {
    const Stage st = stage();
    const bool obl_targets = traits_.obl_discovery && st == Stage::kDiscovery;
    const bool boltzmann = obl_targets;
    const bool dial_exec = traits_.dial && st == Stage::kUtilization;
    const RewardWeights weights = reward_weights(st);

    EnvState s = maze_->sample_initial_state(rng_);
    EpisodeRecord ep;
    ep.goal = s.goal;
    std::array<nn::RecurrentState, 2> h_online, h_target;
    for (Role r : kRoles) {
      h_online[index_of(r)] = agent(r).online.initial_state(1);
      h_target[index_of(r)] = agent(r).target.initial_state(1);
    }
    std::array<std::optional<belief::BeliefTracker>, 2> trackers;
    if (obl_targets)
      for (Role r : kRoles) trackers[index_of(r)].emplace(*maze_, maze_->observe(s, r));

    while (!s.done) {
      StepRecord rec;
      std::array<nn::Tensor, 2> q;
      for (Role r : kRoles) {
        const int ri = index_of(r);
        nn::NoGradGuard no_grad;
        rec.obs[ri] = maze_->observe(s, r).features;
        auto x = nn::row_tensor(rec.obs[ri]);
        auto out = agent(r).online.step(x, h_online[ri]);
        h_online[ri] = out.state;
        q[ri] = out.q;
        if (r == Role::kSender) rec.message = out.message.item();
        if (obl_targets) h_target[ri] = agent(r).target.step(x, h_target[ri]).state;
      }
      std::array<Action, 2> selected{}, executed{};
      for (Role r : kRoles) {
        const int ri = index_of(r);
        selected[ri] = select_action(q[ri], boltzmann);
        executed[ri] = selected[ri];
      }
      if (dial_exec && is_comm(selected[0])) executed[0] = hint_for_message(rec.message);

      rec.action = {index_of(selected[0]), index_of(selected[1])};
      rec.mi = mi_of(s);
      rec.in_comm = maze_->in_comm_state(s);
      if (rec.in_comm) rec.mi_terms = mi::mi_loss_terms(*maze_, s);

      // Pseudo-environment targets from the pre-step beliefs.
      if (obl_targets) {
        for (Role r : kRoles) {
          const int ri = index_of(r);
          auto sample = trackers[ri]->sample(rng_, cfg_.belief_max_attempts);
          belief::FictitiousNets nets;
          nets.acting_online = &agent(r).online;
          nets.acting_online_state = h_online[ri];
          nets.acting_target = &agent(r).target;
          nets.acting_target_state = h_target[ri];
          nets.other_online = &agent(other(r)).online;
          nets.temperature = cfg_.temperature;
          rec.obl[ri] = belief::fictitious_rollout(
              *maze_, sample, r, executed[ri], nets,
              [&](const EnvState& before, const Transition& tr) {
                return tr.reward + weights.beta * mi_of(before) +
                       (maze_->in_comm_state(before) ? weights.intermediate_reward : 0.0);
              },
              rng_);
        }
        rec.has_obl = true;
      }

      auto [next, result] = maze_->step(s, {executed[0], executed[1]}, rng_);
      rec.task_reward = result.reward;
      rec.delivered = result.info.message_delivered;
      rec.terminal = next.done;
      if (obl_targets) {
        for (Role r : kRoles) {
          const int ri = index_of(r);
          trackers[ri]->update(executed[ri], result.observations[ri], next.done);
        }
      }
      ep.steps.push_back(std::move(rec));
      s = std::move(next);
      ++stats_.env_steps;

      if (stats_.env_steps >= cfg_.initial_exploration_steps &&
          stats_.env_steps % cfg_.train_every == 0 && obl_replay_.episodes() > 0)
        train_step(st);
    }
    if (obl_targets)
      for (const auto& t : trackers) stats_.sampler_fallbacks += t->fallbacks();
    if (ep.has_delivery()) dial_replay_.add(ep);
    obl_replay_.add(std::move(ep));
    ++stats_.episodes;
  }

  EvalPoint evaluate() const {
    EvalPoint p;
    p.episode = stats_.episodes;
    p.stage = stage();
    p.epsilon = epsilon();
    p.stats = stats_;
    EvalOptions opt;
    opt.episodes_per_goal = cfg_.eval_episodes_per_goal;
    opt.dial_messages = traits_.dial && p.stage == Stage::kUtilization;
    opt.temperature = cfg_.temperature;
    opt.pmi_gamma = cfg_.gamma;
    std::seed_seq seq{static_cast<unsigned>(cfg_.seed & 0xffffffffu),
                      static_cast<unsigned>(cfg_.seed >> 32),
                      static_cast<unsigned>(stats_.episodes), 0x5eedu};
    Rng eval_rng(seq);
    p.result = evaluate_greedy(*maze_, agent(Role::kSender).online,
                               agent(Role::kReceiver).online, opt, eval_rng);
    return p;
  }

  // Trains for the configured number of episodes, evaluating every
  // eval_every episodes (and at the very end).
  void run(const std::function<void(const EvalPoint&)>& on_eval,
           const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt) {
    while (stats_.episodes < cfg_.total_episodes) {
      run_episode();
      bool last = stats_.episodes == cfg_.total_episodes;
      if (stats_.episodes % cfg_.eval_every == 0 || last) {
        on_eval(evaluate());
        if (checkpoint_dir) save(*checkpoint_dir);
      }
    }
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nn::save_checkpoint(agent(Role::kSender).online, (dir / "sender.json").string());
    nn::save_checkpoint(agent(Role::kReceiver).online, (dir / "receiver.json").string());
  }

  RewardWeights reward_weights(Stage st) const {
    RewardWeights w;
    if (st == Stage::kDiscovery) {
      if (traits_.mi_reward) w.beta = cfg_.beta;
      if (traits_.intermediate_reward) w.intermediate_reward = cfg_.intermediate_reward;
    }
    return w;
  }

  // One gradient step per agent (two in the utilization stage with DIAL).
  void train_step(Stage st) {
    const RewardWeights w = reward_weights(st);
    const bool use_mi_loss = traits_.mi_loss && st == Stage::kDiscovery && cfg_.kappa > 0.0;
    if (st == Stage::kUtilization && traits_.dial && dial_replay_.episodes() > 0) {
      Batch b = make_batch(dial_replay_.sample(cfg_.batch_size, rng_));
      DialNets nets{&agent(Role::kSender).online, &agent(Role::kSender).target,
                    &agent(Role::kReceiver).online, &agent(Role::kReceiver).target};
      auto losses = dial_losses(b, nets, cfg_.gamma, cfg_.sigma, draw_dru_noise(b, rng_), w);
      for (Role r : kRoles) agent(r).optimizer.zero_grad();
      losses.total.backward();
      for (Role r : kRoles) apply_gradients(agent(r));
      ++stats_.dial_updates;
      if (!stats_.first_dial_episode) stats_.first_dial_episode = stats_.episodes;
    }
    for (Role r : kRoles) {
      Agent& a = agent(r);
      Batch b = make_batch(obl_replay_.sample(cfg_.batch_size, rng_));
      auto online = unroll_batch(a.online, input_tensors(b, r));
      nn::Tensor loss;
      if (traits_.obl_discovery && st == Stage::kDiscovery) {
        loss = obl_loss_from_outputs(online, b, r);
      } else {
        loss = td_loss(online, b, r, batch_rewards(b, w), target_max_q(a.target, b, r),
                       cfg_.gamma);
      }
      if (use_mi_loss && r == Role::kSender) {
        nn::Tensor mi_term = mi_objective(online, b, cfg_.temperature);
        if (mi_term.defined()) {
          loss = nn::sub(loss, nn::scale(mi_term, cfg_.kappa));
          ++stats_.mi_loss_updates;
          stats_.last_mi_loss_episode = stats_.episodes;
        }
      }
      a.optimizer.zero_grad();
      loss.backward();
      apply_gradients(a);
    }
    ++stats_.train_steps;
    if (stats_.train_steps % cfg_.target_update_C == 0)
      for (Role r : kRoles) agent(r).target.copy_from(agent(r).online);
  }

 private:
  void apply_gradients(Agent& a) {
    if (cfg_.grad_clip > 0.0) a.optimizer.clip_grad_norm(cfg_.grad_clip);
    a.optimizer.step();
  }

  Action select_action(const nn::Tensor& q, bool boltzmann) {
    if (stats_.env_steps < cfg_.initial_exploration_steps) {
      std::uniform_int_distribution<int> u(0, kNumActions - 1);
      return action_at(u(rng_));
    }
    auto row = belief::q_row(q);
    if (boltzmann)
      return belief::sample_action(belief::obl_policy(row, cfg_.temperature), rng_);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng_) < epsilon()) {
      std::uniform_int_distribution<int> pick(0, kNumActions - 1);
      return action_at(pick(rng_));
    }
    return belief::argmax_action(row);
  }

  // pairwise_mi ignores t, so states are cached with t cleared.
  double mi_of(const EnvState& s) {
    EnvState k = s;
    k.t = 0;
    auto key = state_key(k);
    auto it = mi_cache_.find(key);
    if (it != mi_cache_.end()) return it->second;
    double v = mi::pairwise_mi(*maze_, s);
    mi_cache_.emplace(std::move(key), v);
    return v;
  }

  std::shared_ptr<const Maze> maze_;
  TrainerConfig cfg_;
  AlgorithmTraits traits_;
  Rng rng_;
  std::array<std::unique_ptr<Agent>, 2> agents_;
  ObLReplay obl_replay_;
  DialReplay dial_replay_;
  TrainerStats stats_;
  std::unordered_map<std::string, double> mi_cache_;
};

}  // namespace cheaptalk::learn
