#pragma once

// Exact beliefs over the other agent's hidden state. The rooms are disjoint,
// so each agent's uncertainty factorises:
//   sender view:   receiver position x token
//   receiver view: sender position x goal (decoy layout stays at its prior)
// The other agent is assumed to play a fixed, state-independent base policy.

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cheaptalk/env/maze.hpp"
#include "cheaptalk/errors.hpp"
#include "cheaptalk/mi/mi_engine.hpp"

namespace cheaptalk::belief {

using ActionDist = mi::ActionDist;

struct BasePolicy {
  std::string name = "uniform";
  ActionDist probs = mi::uniform_prior();
};

inline BasePolicy uniform_base_policy() { return {}; }

// Action-observation history of one agent: o_0, a_0, o_1, ..., a_{t-1}, o_t.
struct AOH {
  Role role = Role::kSender;
  std::vector<Observation> observations;
  std::vector<Action> actions;
  bool terminal = false;  // the last observation ended the episode

  int t() const { return static_cast<int>(actions.size()); }
  void append(Action a, Observation next, bool done = false) {
    actions.push_back(a);
    observations.push_back(std::move(next));
    terminal = done;
  }
};

// Components of the state an agent reads off its own observation.
struct OwnView {
  Cell position;
  Goal goal = Goal::kUp;            // sender only
  int token = 0;                    // receiver only
  std::vector<Cell> decoys;         // sender only
};

inline OwnView decode_own(const Maze& maze, const Observation& obs) {
  const ObservationLayout lay = maze.layout(obs.role);
  OwnView v;
  for (int i = 0; i < lay.channel_size(); ++i) {
    if (obs.features[lay.agent_offset() + i] > 0.5) v.position = lay.room.cell(i);
  }
  if (obs.role == Role::kSender) {
    v.goal = obs.features[lay.role_offset()] > 0.5 ? Goal::kUp : Goal::kDown;
    for (int i = 0; i < lay.channel_size(); ++i) {
      Cell c = lay.room.cell(i);
      if (obs.features[lay.booth_offset() + i] > 0.5 && !maze.functional_booth_at(c))
        v.decoys.push_back(c);
    }
  } else {
    v.token = static_cast<int>(std::lround(obs.features[lay.role_offset()]));
  }
  return v;
}

// P(hidden | own AOH, base policy) as a table over (other position, aux) where
// aux is the token index (sender view) or the goal (receiver view).
struct StateBelief {
  Role perspective = Role::kSender;
  RoomShape other_room;
  int aux_count = 0;
  EnvState known;  // own components and t; other components are placeholders
  bool done = false;
  std::string base_policy = "uniform";
  std::vector<double> probs;

  int size() const { return static_cast<int>(probs.size()); }
  int index(Cell other_pos, int aux) const {
    return other_room.index(other_pos) * aux_count + aux;
  }
  Cell other_position(int idx) const { return other_room.cell(idx / aux_count); }
  int aux(int idx) const { return idx % aux_count; }

  // Full state for hidden index idx.
  EnvState materialize(int idx) const {
    EnvState s = known;
    s.done = done;
    if (perspective == Role::kSender) {
      s.receiver_pos = other_position(idx);
      s.token = token_value(aux(idx));
    } else {
      s.sender_pos = other_position(idx);
      s.goal = static_cast<Goal>(aux(idx));
    }
    return s;
  }

  int hidden_index_of(const EnvState& s) const {
    return perspective == Role::kSender
               ? index(s.receiver_pos, token_index(s.token))
               : index(s.sender_pos, static_cast<int>(s.goal));
  }

  std::vector<double> other_position_marginal() const {
    std::vector<double> m(other_room.area(), 0.0);
    for (int i = 0; i < size(); ++i) m[other_room.index(other_position(i))] += probs[i];
    return m;
  }
  std::vector<double> aux_marginal() const {
    std::vector<double> m(aux_count, 0.0);
    for (int i = 0; i < size(); ++i) m[aux(i)] += probs[i];
    return m;
  }
  double total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }
};

inline EnvState known_from_view(const Maze& maze, Role role, const OwnView& v, int t) {
  EnvState s = maze.initial_state(Goal::kUp, maze.config().fixed_decoys());
  s.t = t;
  if (role == Role::kSender) {
    s.sender_pos = v.position;
    s.goal = v.goal;
    s.decoy_positions = v.decoys;
  } else {
    s.receiver_pos = v.position;
    s.token = v.token;
  }
  return s;
}

inline StateBelief initial_belief(const Maze& maze, const Observation& first,
                                  const BasePolicy& pi0 = {}) {
  StateBelief b;
  b.perspective = first.role;
  b.base_policy = pi0.name;
  const auto& cfg = maze.config();
  OwnView v = decode_own(maze, first);
  b.known = known_from_view(maze, first.role, v, 0);
  if (first.role == Role::kSender) {
    b.other_room = cfg.receiver_room;
    b.aux_count = kNumTokenValues;
    b.probs.assign(b.other_room.area() * b.aux_count, 0.0);
    b.probs[b.index(cfg.receiver_start, token_index(0))] = 1.0;
  } else {
    b.other_room = cfg.sender_room;
    b.aux_count = 2;
    b.probs.assign(b.other_room.area() * b.aux_count, 0.0);
    b.probs[b.index(cfg.sender_start, static_cast<int>(Goal::kUp))] = 0.5;
    b.probs[b.index(cfg.sender_start, static_cast<int>(Goal::kDown))] = 0.5;
  }
  return b;
}

namespace detail {

inline JointAction joint(Role own, Action own_action, Action other_action) {
  return own == Role::kSender ? JointAction{own_action, other_action}
                              : JointAction{other_action, own_action};
}

// The own-view part of a candidate next state must reproduce the observation.
inline bool consistent(const Maze& maze, const EnvState& next, const Observation& obs,
                       bool done) {
  return next.done == done && maze.observe(next, obs.role) == obs;
}

}  // namespace detail

// One exact Bayes step: push every hidden state through the true transition
// function under base-policy actions of the other agent, then condition on the
// agent's next observation (and on whether the episode ended).
inline StateBelief filter_update(const Maze& maze, const StateBelief& belief,
                                 Action own_action, const Observation& next_obs,
                                 bool next_done = false, const BasePolicy& pi0 = {}) {
  if (std::abs(belief.total() - 1.0) > 1e-9)
    throw UsageError("filter_update: belief is not normalised");
  StateBelief out = belief;
  std::fill(out.probs.begin(), out.probs.end(), 0.0);
  out.known = known_from_view(maze, belief.perspective, decode_own(maze, next_obs),
                              belief.known.t + 1);
  out.done = next_done;
  for (int h = 0; h < belief.size(); ++h) {
    const double p = belief.probs[h];
    if (p <= 0.0) continue;
    EnvState s = belief.materialize(h);
    for (Action other_action : kAllActions) {
      const double pa = pi0.probs[index_of(other_action)];
      if (pa <= 0.0) continue;
      for (const auto& tr :
           maze.transitions(s, detail::joint(belief.perspective, own_action, other_action))) {
        if (!detail::consistent(maze, tr.next, next_obs, next_done)) continue;
        out.probs[out.hidden_index_of(tr.next)] += p * pa * tr.probability;
      }
    }
  }
  double total = out.total();
  if (total <= 0.0)
    throw InconsistencyError("filter_update: observation has zero posterior mass");
  for (double& q : out.probs) q /= total;
  return out;
}

// Forward filter over a whole AOH; element k conditions on o_0..o_k.
inline std::vector<StateBelief> filter_history(const Maze& maze, const AOH& aoh,
                                               const BasePolicy& pi0 = {}) {
  std::vector<StateBelief> out{initial_belief(maze, aoh.observations.at(0), pi0)};
  for (int k = 0; k < aoh.t(); ++k) {
    bool done = aoh.terminal && k + 1 == aoh.t();
    out.push_back(filter_update(maze, out.back(), aoh.actions[k], aoh.observations[k + 1],
                                done, pi0));
  }
  return out;
}

// Full environment trajectory: states s_0..s_t and joint actions a_0..a_{t-1}.
struct Trajectory {
  std::vector<EnvState> states;
  std::vector<JointAction> actions;
};

inline int sample_index(const std::vector<double>& weights, Rng& rng) {
  double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::uniform_real_distribution<double> u(0.0, total);
  double x = u(rng), acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = static_cast<int>(i);
    if (x < acc) return last;
  }
  return last;
}

inline Action sample_action(const ActionDist& probs, Rng& rng) {
  std::vector<double> w(probs.begin(), probs.end());
  return action_at(sample_index(w, rng));
}

// Exact draw from P(trajectory | AOH, base policy) by rejection: replay the
// agent's own actions, let the other agent play the base policy, and accept
// only runs whose own observations match the AOH.
inline Trajectory sample_consistent_trajectory(const Maze& maze, const AOH& aoh,
                                               const BasePolicy& pi0, Rng& rng,
                                               int max_attempts) {
  const Role own = aoh.role;
  const OwnView first = decode_own(maze, aoh.observations.at(0));
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    EnvState s = maze.sample_initial_state(rng);
    if (own == Role::kSender) {
      s.goal = first.goal;
      s.decoy_positions = first.decoys;
    }
    if (!(maze.observe(s, own) == aoh.observations[0])) continue;
    Trajectory traj;
    traj.states.push_back(s);
    bool ok = true;
    for (int k = 0; k < aoh.t() && ok; ++k) {
      Action other_action = sample_action(pi0.probs, rng);
      JointAction ja = detail::joint(own, aoh.actions[k], other_action);
      auto [next, result] = maze.step(traj.states.back(), ja, rng);
      bool done = aoh.terminal && k + 1 == aoh.t();
      if (!detail::consistent(maze, next, aoh.observations[k + 1], done)) {
        ok = false;
        break;
      }
      traj.actions.push_back(ja);
      traj.states.push_back(std::move(next));
    }
    if (ok) return traj;
  }
  throw SamplingError("rejection sampling exhausted " + std::to_string(max_attempts) +
                      " attempts");
}

// Exact draw from the same posterior by forward filtering, backward sampling.
// `history` must come from filter_history() on the same AOH.
inline Trajectory sample_trajectory_from_filter(const Maze& maze, const AOH& aoh,
                                                const std::vector<StateBelief>& history,
                                                const BasePolicy& pi0, Rng& rng) {
  const int t = aoh.t();
  if (static_cast<int>(history.size()) != t + 1)
    throw UsageError("filter history does not match the AOH length");
  Trajectory traj;
  traj.states.resize(t + 1);
  traj.actions.resize(t);
  int h_next = sample_index(history[t].probs, rng);
  traj.states[t] = history[t].materialize(h_next);
  if (aoh.role == Role::kReceiver && maze.config().reinit_decoys) {
    EnvState prior = maze.sample_initial_state(rng);
    traj.states[t].decoy_positions = prior.decoy_positions;
  }
  for (int k = t - 1; k >= 0; --k) {
    const StateBelief& b = history[k];
    const EnvState& target = traj.states[k + 1];
    struct Candidate {
      int hidden;
      Action other_action;
      double weight;
    };
    std::vector<Candidate> candidates;
    std::vector<double> weights;
    for (int h = 0; h < b.size(); ++h) {
      if (b.probs[h] <= 0.0) continue;
      EnvState s = b.materialize(h);
      s.decoy_positions = target.decoy_positions;
      for (Action other_action : kAllActions) {
        const double pa = pi0.probs[index_of(other_action)];
        if (pa <= 0.0) continue;
        for (const auto& tr :
             maze.transitions(s, detail::joint(aoh.role, aoh.actions[k], other_action))) {
          if (!(tr.next == target)) continue;
          candidates.push_back({h, other_action, b.probs[h] * pa * tr.probability});
          weights.push_back(candidates.back().weight);
        }
      }
    }
    if (candidates.empty())
      throw InconsistencyError("backward sampling found no predecessor");
    const Candidate& c = candidates[sample_index(weights, rng)];
    traj.states[k] = b.materialize(c.hidden);
    traj.states[k].decoy_positions = target.decoy_positions;
    traj.actions[k] = detail::joint(aoh.role, aoh.actions[k], c.other_action);
  }
  return traj;
}

// Running belief for one agent during an episode, with the rejection sampler
// and its filter-based fallback.
class BeliefTracker {
 public:
  BeliefTracker(const Maze& maze, const Observation& first, BasePolicy pi0 = {})
      : maze_(&maze), pi0_(std::move(pi0)) {
    aoh_.role = first.role;
    aoh_.observations.push_back(first);
    history_.push_back(initial_belief(maze, first, pi0_));
  }

  void update(Action own_action, const Observation& next, bool done) {
    aoh_.append(own_action, next, done);
    history_.push_back(filter_update(*maze_, history_.back(), own_action, next, done, pi0_));
  }

  const AOH& aoh() const { return aoh_; }
  const StateBelief& current() const { return history_.back(); }
  const std::vector<StateBelief>& history() const { return history_; }

  // Tries rejection first; falls back to forward-filter backward-sample.
  Trajectory sample(Rng& rng, int max_attempts) {
    if (max_attempts > 0) {
      try {
        return sample_consistent_trajectory(*maze_, aoh_, pi0_, rng, max_attempts);
      } catch (const SamplingError&) {
        ++fallbacks_;
      }
    }
    return sample_trajectory_from_filter(*maze_, aoh_, history_, pi0_, rng);
  }

  long fallbacks() const { return fallbacks_; }

 private:
  const Maze* maze_;
  BasePolicy pi0_;
  AOH aoh_;
  std::vector<StateBelief> history_;
  long fallbacks_ = 0;
};

}  // namespace cheaptalk::belief
