#pragma once

// Off-belief learning pieces: the Boltzmann policy, fictitious two-step
// targets drawn from a belief sample, and the squared error against them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "cheaptalk/belief/belief.hpp"
#include "cheaptalk/nn/agent_net.hpp"

namespace cheaptalk::belief {

using nn::Index;

// Boltzmann distribution over Q / temperature.
inline ActionDist obl_policy(std::span<const double> q, double temperature) {
  if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
  if (q.size() != static_cast<std::size_t>(kNumActions))
    throw UsageError("obl_policy expects one value per action");
  double top = *std::max_element(q.begin(), q.end());
  ActionDist p{};
  double z = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    p[a] = std::exp((q[a] - top) / temperature);
    z += p[a];
  }
  for (double& x : p) x /= z;
  return p;
}

inline std::vector<double> q_row(const nn::Tensor& q, Index row = 0) {
  std::vector<double> out(q.cols());
  for (Index a = 0; a < q.cols(); ++a) out[a] = q.value()(row, a);
  return out;
}

// Greedy action; ties go to the lowest index.
inline Action argmax_action(std::span<const double> q) {
  return action_at(static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin()));
}

// G' = r'_t + r'_{t+1} + max_a Qhat(a | tau'_{t+2}); a terminal transition
// zeroes everything after it.
struct ObLTarget {
  double reward_t = 0.0;
  double reward_t1 = 0.0;
  double bootstrap = 0.0;
  bool terminal_t = false;
  bool terminal_t1 = false;

  double value() const { return reward_t + reward_t1 + bootstrap; }
};

// Learning reward of one transition from `before`.
using RewardFn = std::function<double(const EnvState& before, const Transition& tr)>;

struct FictitiousNets {
  const nn::AgentNet* acting_online = nullptr;
  nn::RecurrentState acting_online_state;  // after consuming the real o_0..o_t
  const nn::AgentNet* acting_target = nullptr;
  nn::RecurrentState acting_target_state;  // same inputs through the target net
  const nn::AgentNet* other_online = nullptr;
  double temperature = 0.1;
};

namespace detail {

inline Transition sample_transition(const Maze& maze, const EnvState& s, JointAction a,
                                    Rng& rng) {
  auto branches = maze.transitions(s, a);
  if (branches.size() == 1) return branches.front();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < branches.front().probability ? branches.front() : branches.back();
}

inline Action sample_boltzmann(const nn::Tensor& q, double temperature, Rng& rng) {
  auto row = q_row(q);
  return sample_action(obl_policy(row, temperature), rng);
}

}  // namespace detail

// Replays the acting agent's real action a_t from the sampled state s'_t with
// the other agent on pi_1, lets both play pi_1 for one more step, and
// bootstraps from the acting agent's target net.
inline ObLTarget fictitious_rollout(const Maze& maze, const Trajectory& sample, Role acting,
                                    Action action, const FictitiousNets& nets,
                                    const RewardFn& reward, Rng& rng) {
  nn::NoGradGuard no_grad;
  const Role other_role = other(acting);
  const EnvState& s_t = sample.states.back();
  ObLTarget out;

  // The other agent's fictitious history o'_0..o'_t.
  nn::RecurrentState other_state = nets.other_online->initial_state(1);
  nn::Tensor other_q;
  for (const auto& s : sample.states) {
    auto o = nets.other_online->step(nn::row_tensor(maze.observe(s, other_role).features),
                                     other_state);
    other_state = o.state;
    other_q = o.q;
  }
  Action other_action = detail::sample_boltzmann(other_q, nets.temperature, rng);
  auto joint_of = [&](Action mine, Action theirs) {
    return acting == Role::kSender ? JointAction{mine, theirs} : JointAction{theirs, mine};
  };

  Transition tr = detail::sample_transition(maze, s_t, joint_of(action, other_action), rng);
  out.reward_t = reward(s_t, tr);
  if (tr.next.done) {
    out.terminal_t = true;
    return out;
  }
  const EnvState s1 = tr.next;

  auto own_in1 = nn::row_tensor(maze.observe(s1, acting).features);
  auto own1 = nets.acting_online->step(own_in1, nets.acting_online_state);
  auto other1 = nets.other_online->step(
      nn::row_tensor(maze.observe(s1, other_role).features), other_state);
  Action a1 = detail::sample_boltzmann(own1.q, nets.temperature, rng);
  Action b1 = detail::sample_boltzmann(other1.q, nets.temperature, rng);
  Transition tr1 = detail::sample_transition(maze, s1, joint_of(a1, b1), rng);
  out.reward_t1 = reward(s1, tr1);
  if (tr1.next.done) {
    out.terminal_t1 = true;
    return out;
  }

  auto tgt1 = nets.acting_target->step(own_in1, nets.acting_target_state);
  auto tgt2 = nets.acting_target->step(
      nn::row_tensor(maze.observe(tr1.next, acting).features), tgt1.state);
  out.bootstrap = tgt2.q.value().row(0).maxCoeff();
  return out;
}

// Mean over steps of 0.5 * (G' - Q(a_t | tau_t))^2. `q` holds one row per
// step and `valid` masks padded rows.
inline nn::Tensor obl_loss(const nn::Tensor& q_taken, const nn::Matrix& targets,
                           const nn::Matrix& valid) {
  if (q_taken.rows() != targets.rows() || q_taken.cols() != 1 || targets.cols() != 1)
    throw UsageError("obl_loss: expected matching column vectors");
  double count = valid.sum();
  if (count <= 0.0) throw UsageError("obl_loss: empty batch");
  nn::Tensor err = nn::mul_const(nn::sub(q_taken, nn::Tensor(targets)), valid);
  return nn::scale(nn::sum(nn::square(err)), 0.5 / count);
}

}  // namespace cheaptalk::belief
