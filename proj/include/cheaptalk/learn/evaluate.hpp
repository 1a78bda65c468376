#pragma once

#include <array>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "cheaptalk/belief/obl.hpp"
#include "cheaptalk/env/maze.hpp"
#include "cheaptalk/learn/losses.hpp"
#include "cheaptalk/mi/mi_engine.hpp"
#include "cheaptalk/nn/agent_net.hpp"

namespace cheaptalk::learn {

struct EvalOptions {
  int episodes_per_goal = 1;
  bool dial_messages = false;  // comm actions execute the message head's hint
  double temperature = 0.1;    // for policy_at_booth
  double pmi_gamma = 0.99;
};

struct EvalResult {
  double test_reward = 0.0;
  double steps_to_first_booth = 0.0;
  std::vector<std::string> booth_labels;  // functional booths, then "decoy"
  std::vector<double> booth_visits;       // sender-steps per episode on each
  std::array<mi::ActionDist, 2> policy_at_booth{};  // indexed by Goal
  double nu_hat = 0.0;
};

inline std::vector<std::string> booth_labels(const Maze& maze) {
  std::vector<std::string> labels;
  for (const auto& b : maze.functional_booths()) labels.push_back(b.label);
  labels.push_back("decoy");
  return labels;
}

// The functional booth with the highest communicative MI; ties go to the
// cheaper, then the earlier booth.
inline int best_booth(const Maze& maze) {
  const auto& booths = maze.functional_booths();
  int best = 0;
  double best_mi = -1.0;
  for (std::size_t i = 0; i < booths.size(); ++i) {
    EnvState s = maze.initial_state(Goal::kUp, maze.config().fixed_decoys());
    s.sender_pos = booths[i].position;
    s.receiver_pos = maze.config().receiver_booth;
    double v = mi::pairwise_mi(maze, s);
    bool better = v > best_mi + 1e-12 ||
                  (std::abs(v - best_mi) <= 1e-12 && booths[i].cost < booths[best].cost);
    if (better) {
      best = static_cast<int>(i);
      best_mi = v;
    }
  }
  return best;
}

// Shortest sender path from the start to `target`, both ends included.
// Neighbours expand in action order, so the path is canonical.
inline std::vector<Cell> sender_shortest_path(const Maze& maze, Cell target) {
  const auto& cfg = maze.config();
  const RoomShape room = cfg.sender_room;
  std::vector<int> parent(room.area(), -2);
  std::deque<Cell> frontier{cfg.sender_start};
  parent[room.index(cfg.sender_start)] = -1;
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop_front();
    if (c == target) break;
    for (Action a : {Action::kUp, Action::kDown, Action::kLeft, Action::kRight}) {
      Cell n = maze.move_sender(c, a);
      if (parent[room.index(n)] != -2) continue;
      parent[room.index(n)] = room.index(c);
      frontier.push_back(n);
    }
  }
  if (parent[room.index(target)] == -2) throw ConfigError("booth unreachable from the start");
  std::vector<Cell> path;
  for (int i = room.index(target); i != -1; i = parent[i]) path.push_back(room.cell(i));
  std::reverse(path.begin(), path.end());
  return path;
}

// softmax(Q / T) of the sender after walking the canonical path to the best
// booth, for each goal.
inline std::array<mi::ActionDist, 2> policy_at_booth(const Maze& maze, const nn::AgentNet& sender,
                                                     double temperature) {
  nn::NoGradGuard no_grad;
  auto path = sender_shortest_path(maze, maze.functional_booths()[best_booth(maze)].position);
  std::array<mi::ActionDist, 2> out{};
  for (Goal g : {Goal::kUp, Goal::kDown}) {
    EnvState s = maze.initial_state(g, maze.config().fixed_decoys());
    auto st = sender.initial_state(1);
    nn::Tensor q;
    for (std::size_t k = 0; k < path.size(); ++k) {
      s.sender_pos = path[k];
      s.t = static_cast<int>(k);
      auto o = sender.step(nn::row_tensor(maze.observe(s, Role::kSender).features), st);
      st = o.state;
      q = o.q;
    }
    out[static_cast<int>(g)] = belief::obl_policy(belief::q_row(q), temperature);
  }
  return out;
}

// Greedy (argmax, lowest index on ties) rollouts under both goals.
inline EvalResult evaluate_greedy(const Maze& maze, const nn::AgentNet& sender,
                                  const nn::AgentNet& receiver, const EvalOptions& opt,
                                  Rng& rng) {
  nn::NoGradGuard no_grad;
  EvalResult res;
  res.booth_labels = booth_labels(maze);
  res.booth_visits.assign(res.booth_labels.size(), 0.0);
  const int limit = maze.config().episode_limit;
  int episodes = 0;
  for (Goal g : {Goal::kUp, Goal::kDown}) {
    for (int e = 0; e < opt.episodes_per_goal; ++e) {
      EnvState s = maze.sample_initial_state(rng);
      s.goal = g;
      std::vector<EnvState> visited{s};
      auto hs = sender.initial_state(1);
      auto hr = receiver.initial_state(1);
      double total = 0.0;
      int first_booth = maze.functional_booth_at(s.sender_pos) ? 0 : limit;
      while (!s.done) {
        auto os = sender.step(nn::row_tensor(maze.observe(s, Role::kSender).features), hs);
        auto orc = receiver.step(nn::row_tensor(maze.observe(s, Role::kReceiver).features), hr);
        hs = os.state;
        hr = orc.state;
        Action as = belief::argmax_action(belief::q_row(os.q));
        Action ar = belief::argmax_action(belief::q_row(orc.q));
        if (opt.dial_messages && is_comm(as)) as = hint_for_message(os.message.item());
        auto [next, result] = maze.step(s, {as, ar}, rng);
        total += result.reward;
        if (result.info.booth_visited) {
          res.booth_visits[*result.info.booth_visited] += 1.0;
          first_booth = std::min(first_booth, next.t);
        } else if (std::find(next.decoy_positions.begin(), next.decoy_positions.end(),
                             next.sender_pos) != next.decoy_positions.end()) {
          res.booth_visits.back() += 1.0;
        }
        s = std::move(next);
        visited.push_back(s);
      }
      res.test_reward += total;
      res.steps_to_first_booth += first_booth;
      res.nu_hat += mi::discounted_pmi(maze, visited, opt.pmi_gamma);
      ++episodes;
    }
  }
  res.test_reward /= episodes;
  res.steps_to_first_booth /= episodes;
  res.nu_hat /= episodes;
  for (double& v : res.booth_visits) v /= episodes;
  res.policy_at_booth = policy_at_booth(maze, sender, opt.temperature);
  return res;
}

}  // namespace cheaptalk::learn
