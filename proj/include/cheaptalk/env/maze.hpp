#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cheaptalk/env/maze_config.hpp"
#include "cheaptalk/env/types.hpp"
#include "cheaptalk/errors.hpp"

namespace cheaptalk {

// Ground-truth Dec-POMDP state.
struct EnvState {
  Cell sender_pos;
  Cell receiver_pos;
  int token = 0;
  Goal goal = Goal::kUp;
  std::vector<Cell> decoy_positions;
  int t = 0;
  bool done = false;

  Cell position_of(Role r) const {
    return r == Role::kSender ? sender_pos : receiver_pos;
  }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

// Canonical identifier, stable across runs.
inline std::string state_key(const EnvState& s) {
  std::ostringstream os;
  os << "s" << s.sender_pos.row << "," << s.sender_pos.col << "|r"
     << s.receiver_pos.row << "," << s.receiver_pos.col << "|k" << s.token
     << "|g" << static_cast<int>(s.goal) << "|d";
  for (Cell c : s.decoy_positions) os << c.row << "," << c.col << ";";
  os << "|t" << s.t << (s.done ? "|x" : "");
  return os.str();
}

// Flattened observation: [wall | booth | agent] channels over the agent's own
// room (row-major), followed by role info (sender: 2-bit goal one-hot,
// receiver: scalar token).
struct Observation {
  Role role = Role::kSender;
  std::vector<double> features;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct ObservationLayout {
  RoomShape room;
  int role_info_size = 0;

  int channel_size() const { return room.area(); }
  int wall_offset() const { return 0; }
  int booth_offset() const { return channel_size(); }
  int agent_offset() const { return 2 * channel_size(); }
  int role_offset() const { return 3 * channel_size(); }
  int size() const { return 3 * channel_size() + role_info_size; }
};

using JointObservation = std::array<Observation, 2>;

struct StepInfo {
  bool in_comm_state = false;  // evaluated on the pre-step state
  bool message_delivered = false;
  bool hint_attempted = false;
  bool truncated = false;
  std::optional<int> booth_visited;  // functional booth under the sender after the step
};

struct StepResult {
  JointObservation observations;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// One branch of the exact transition distribution.
struct Transition {
  double probability = 1.0;
  EnvState next;
  double reward = 0.0;
  StepInfo info;
};

// The Phone Booth Maze rules. Immutable; states are plain values.
class Maze {
 public:
  explicit Maze(MazeConfig config) : config_(std::move(config)) {
    validate(config_);
    for (std::size_t i = 0; i < config_.booths.size(); ++i)
      if (config_.booths[i].functional) functional_.push_back(config_.booths[i]);
  }

  const MazeConfig& config() const { return config_; }
  const std::vector<BoothSpec>& functional_booths() const { return functional_; }

  ObservationLayout layout(Role r) const {
    return r == Role::kSender ? ObservationLayout{config_.sender_room, 2}
                              : ObservationLayout{config_.receiver_room, 1};
  }
  int observation_size(Role r) const { return layout(r).size(); }

  std::optional<int> functional_booth_at(Cell c) const {
    for (std::size_t i = 0; i < functional_.size(); ++i)
      if (functional_[i].position == c) return static_cast<int>(i);
    return std::nullopt;
  }

  bool in_comm_state(const EnvState& s) const {
    return functional_booth_at(s.sender_pos).has_value() &&
           s.receiver_pos == config_.receiver_booth;
  }

  EnvState initial_state(Goal goal, std::vector<Cell> decoys) const {
    EnvState s;
    s.sender_pos = config_.sender_start;
    s.receiver_pos = config_.receiver_start;
    s.token = 0;
    s.goal = goal;
    s.decoy_positions = std::move(decoys);
    return s;
  }

  // Cells a re-initialised decoy may occupy.
  std::vector<Cell> free_decoy_cells() const {
    std::vector<Cell> free;
    for (int i = 0; i < config_.sender_room.area(); ++i) {
      Cell c = config_.sender_room.cell(i);
      if (!config_.sender_walkable(c) || c == config_.sender_start) continue;
      if (functional_booth_at(c)) continue;
      free.push_back(c);
    }
    return free;
  }

  EnvState sample_initial_state(Rng& rng) const {
    std::bernoulli_distribution coin(0.5);
    Goal goal = coin(rng) ? Goal::kDown : Goal::kUp;
    std::vector<Cell> decoys;
    if (config_.reinit_decoys) {
      auto free = free_decoy_cells();
      std::shuffle(free.begin(), free.end(), rng);
      decoys.assign(free.begin(), free.begin() + config_.n_decoys);
      std::sort(decoys.begin(), decoys.end());
    } else {
      decoys = config_.fixed_decoys();
    }
    return initial_state(goal, std::move(decoys));
  }

  std::pair<EnvState, JointObservation> reset(Rng& rng) const {
    EnvState s = sample_initial_state(rng);
    return {s, observe_all(s)};
  }

  // Probability that a sender action at s writes the token.
  double delivery_probability(const EnvState& s, Action sender_action) const {
    if (!is_comm(sender_action)) return 0.0;
    auto booth = functional_booth_at(s.sender_pos);
    if (!booth || s.receiver_pos != config_.receiver_booth) return 0.0;
    return 1.0 - functional_[*booth].noise_factor;
  }

  std::pair<EnvState, StepResult> step(const EnvState& s, JointAction a,
                                       Rng& rng) const {
    if (s.done) throw UsageError("step() called on a finished episode");
    double p = delivery_probability(s, a.sender);
    bool delivered = false;
    if (p >= 1.0) {
      delivered = true;
    } else if (p > 0.0) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      delivered = u(rng) < p;
    }
    Transition tr = apply(s, a, delivered);
    StepResult result;
    result.observations = observe_all(tr.next);
    result.reward = tr.reward;
    result.done = tr.next.done;
    result.info = tr.info;
    return {std::move(tr.next), std::move(result)};
  }

  // Exact transition distribution (one or two branches).
  std::vector<Transition> transitions(const EnvState& s, JointAction a) const {
    if (s.done) throw UsageError("transitions() called on a finished episode");
    double p = delivery_probability(s, a.sender);
    std::vector<Transition> out;
    if (p > 0.0) {
      Transition hit = apply(s, a, true);
      hit.probability = p;
      out.push_back(std::move(hit));
    }
    if (p < 1.0) {
      Transition miss = apply(s, a, false);
      miss.probability = 1.0 - p;
      out.push_back(std::move(miss));
    }
    return out;
  }

  // Distribution over the receiver's next token {-1, 0, +1} when the sender
  // takes `sender_action` and the receiver stays put.
  std::array<double, kNumTokenValues> hint_outcome_distribution(
      const EnvState& s, Action sender_action) const {
    std::array<double, kNumTokenValues> dist{};
    double p = delivery_probability(s, sender_action);
    if (p > 0.0) {
      int written =
          sender_action == Action::kHintUp ? kTokenHintUp : kTokenHintDown;
      dist[token_index(written)] += p;
    }
    dist[token_index(s.token)] += 1.0 - p;
    return dist;
  }

  Observation observe(const EnvState& s, Role role) const {
    const ObservationLayout lay = layout(role);
    Observation obs;
    obs.role = role;
    obs.features.assign(lay.size(), 0.0);
    const auto& walls =
        role == Role::kSender ? config_.sender_walls : config_.receiver_walls;
    for (Cell w : walls) obs.features[lay.wall_offset() + lay.room.index(w)] = 1.0;
    if (role == Role::kSender) {
      for (const auto& b : functional_)
        obs.features[lay.booth_offset() + lay.room.index(b.position)] = 1.0;
      for (Cell d : s.decoy_positions)
        obs.features[lay.booth_offset() + lay.room.index(d)] = 1.0;
      obs.features[lay.agent_offset() + lay.room.index(s.sender_pos)] = 1.0;
      obs.features[lay.role_offset() + static_cast<int>(s.goal)] = 1.0;
    } else {
      obs.features[lay.booth_offset() + lay.room.index(config_.receiver_booth)] =
          1.0;
      obs.features[lay.agent_offset() + lay.room.index(s.receiver_pos)] = 1.0;
      obs.features[lay.role_offset()] = static_cast<double>(s.token);
    }
    return obs;
  }

  JointObservation observe_all(const EnvState& s) const {
    return {observe(s, Role::kSender), observe(s, Role::kReceiver)};
  }

  Cell move_sender(Cell c, Action a) const {
    return move(c, a, [&](Cell n) { return config_.sender_walkable(n); });
  }
  Cell move_receiver(Cell c, Action a) const {
    return move(c, a, [&](Cell n) { return config_.receiver_walkable(n); });
  }

  // Deterministic part of step() given the outcome of the delivery coin.
  Transition apply(const EnvState& s, JointAction a, bool delivered) const {
    Transition tr;
    tr.next = s;
    EnvState& n = tr.next;
    tr.info.in_comm_state = in_comm_state(s);
    double reward = 0.0;

    if (is_comm(a.sender)) {
      if (auto booth = functional_booth_at(s.sender_pos)) {
        tr.info.hint_attempted = true;
        reward -= functional_[*booth].cost;
        if (delivered && s.receiver_pos == config_.receiver_booth) {
          n.token = a.sender == Action::kHintUp ? kTokenHintUp : kTokenHintDown;
          tr.info.message_delivered = true;
        }
      }
    } else {
      n.sender_pos = move_sender(s.sender_pos, a.sender);
    }
    if (!is_comm(a.receiver)) n.receiver_pos = move_receiver(s.receiver_pos, a.receiver);

    if (config_.use_intermediate_reward && tr.info.in_comm_state)
      reward += config_.intermediate_reward;

    n.t = s.t + 1;
    if (n.receiver_pos == config_.exit_up || n.receiver_pos == config_.exit_down) {
      Goal chosen = n.receiver_pos == config_.exit_up ? Goal::kUp : Goal::kDown;
      reward += chosen == s.goal ? config_.correct_reward : config_.wrong_reward;
      n.done = true;
    } else if (n.t >= config_.episode_limit) {
      n.done = true;
      tr.info.truncated = true;
    }
    tr.info.booth_visited = functional_booth_at(n.sender_pos);
    tr.reward = reward;
    return tr;
  }

 private:
  template <typename Walkable>
  static Cell move(Cell c, Action a, Walkable walkable) {
    Cell n = c;
    switch (a) {
      case Action::kUp: n.row -= 1; break;
      case Action::kDown: n.row += 1; break;
      case Action::kLeft: n.col -= 1; break;
      case Action::kRight: n.col += 1; break;
      default: return c;
    }
    return walkable(n) ? n : c;
  }

  MazeConfig config_;
  std::vector<BoothSpec> functional_;
};

// Stateful wrapper: one episode in progress over a shared Maze. Copying an
// Environment snapshots it.
class Environment {
 public:
  explicit Environment(std::shared_ptr<const Maze> maze)
      : maze_(std::move(maze)) {
    state_ = maze_->initial_state(Goal::kUp, maze_->config().fixed_decoys());
  }

  JointObservation reset(Rng& rng) {
    auto [s, obs] = maze_->reset(rng);
    state_ = std::move(s);
    return obs;
  }

  StepResult step(JointAction a, Rng& rng) {
    auto [next, result] = maze_->step(state_, a, rng);
    state_ = std::move(next);
    return result;
  }

  const EnvState& state() const { return state_; }
  const Maze& maze() const { return *maze_; }
  std::shared_ptr<const Maze> maze_ptr() const { return maze_; }

  EnvState snapshot() const { return state_; }
  static Environment restore(std::shared_ptr<const Maze> maze, EnvState s) {
    Environment env(std::move(maze));
    env.state_ = std::move(s);
    return env;
  }

 private:
  std::shared_ptr<const Maze> maze_;
  EnvState state_;
};

// Shortest walkable path length between two cells of the sender room.
inline int sender_path_length(const MazeConfig& cfg, Cell from, Cell to) {
  const RoomShape room = cfg.sender_room;
  std::vector<int> dist(room.area(), -1);
  std::vector<Cell> frontier{from};
  dist[room.index(from)] = 0;
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    Cell c = frontier[head];
    if (c == to) return dist[room.index(c)];
    for (Cell d : {Cell{c.row - 1, c.col}, Cell{c.row + 1, c.col},
                   Cell{c.row, c.col - 1}, Cell{c.row, c.col + 1}}) {
      if (!cfg.sender_walkable(d) || dist[room.index(d)] >= 0) continue;
      dist[room.index(d)] = dist[room.index(c)] + 1;
      frontier.push_back(d);
    }
  }
  return -1;
}

// Fewest sender steps from the start to any functional booth.
inline int optimal_steps_to_booth(const Maze& maze) {
  int best = -1;
  for (const auto& b : maze.functional_booths()) {
    int d = sender_path_length(maze.config(), maze.config().sender_start,
                               b.position);
    if (d >= 0 && (best < 0 || d < best)) best = d;
  }
  return best;
}

}  // namespace cheaptalk
