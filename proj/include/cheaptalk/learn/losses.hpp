#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "cheaptalk/belief/obl.hpp"
#include "cheaptalk/errors.hpp"
#include "cheaptalk/learn/replay.hpp"
#include "cheaptalk/mi/mi_engine.hpp"
#include "cheaptalk/nn/agent_net.hpp"

namespace cheaptalk::learn {

using nn::Matrix;
using nn::Tensor;
using nn::Index;

// r + beta * MI(s) with the uniform probe prior.
inline double shaped_reward(double r, const Maze& maze, const EnvState& s, double beta) {
  if (beta == 0.0) return r;
  return r + beta * mi::pairwise_mi(maze, s);
}

// Bonus for occupying the communicative state.
inline double intermediate_reward_bonus(const Maze& maze, const EnvState& s, double ir) {
  return maze.in_comm_state(s) ? ir : 0.0;
}

// How stored per-step quantities combine into the learning reward.
struct RewardWeights {
  double beta = 0.0;
  double intermediate_reward = 0.0;

  double operator()(const StepRecord& s) const {
    return s.task_reward + beta * s.mi + (s.in_comm ? intermediate_reward : 0.0);
  }
};

// ---------------------------------------------------------------- DRU

enum class DruMode { kTraining, kExecution };

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double dru(double m, double sigma, DruMode mode, Rng& rng) {
  if (sigma < 0.0) throw UsageError("dru: sigma must be non-negative");
  if (mode == DruMode::kExecution) return m > 0.0 ? 1.0 : 0.0;
  if (sigma == 0.0) return logistic(m);
  std::normal_distribution<double> z(0.0, 1.0);
  return logistic(m + sigma * z(rng));
}

// Training-mode DRU on a column of messages with explicit standard-normal
// draws, differentiable in m.
inline Tensor dru_tensor(const Tensor& m, double sigma, const Matrix& standard_normal) {
  return nn::sigmoid(nn::add(m, Tensor(standard_normal * sigma)));
}

// Receiver token in [-1, 1] from a DRU output in [0, 1]; execution-mode DRU
// maps onto the environment's -1 / +1 hint tokens.
inline Tensor token_from_dru(const Tensor& d) { return nn::add_scalar(nn::scale(d, 2.0), -1.0); }

inline Action hint_for_message(double m) {
  return m > 0.0 ? Action::kHintDown : Action::kHintUp;
}

// ---------------------------------------------------------------- batches

// Time-major view of a set of episodes, padded to the longest one.
struct Batch {
  int size = 0;
  int length = 0;
  std::array<std::vector<Matrix>, 2> inputs;             // [role][t]: B x in
  std::array<std::vector<std::vector<int>>, 2> actions;  // [role][t][b]
  std::vector<Matrix> valid;                             // [t]: B x 1
  std::vector<Matrix> terminal;
  std::vector<Matrix> delivered;
  std::vector<Matrix> in_comm;
  std::vector<std::vector<const StepRecord*>> steps;  // [t][b], null when padded
  std::array<std::vector<Matrix>, 2> obl_target;       // [role][t]
};

inline Batch make_batch(const std::vector<const EpisodeRecord*>& episodes) {
  if (episodes.empty()) throw UsageError("make_batch: no episodes");
  Batch b;
  b.size = static_cast<int>(episodes.size());
  for (const auto* e : episodes) b.length = std::max(b.length, e->length());
  const Index B = b.size;
  std::array<Index, 2> width{};
  for (Role r : kRoles)
    width[index_of(r)] = static_cast<Index>(episodes[0]->steps.at(0).obs[index_of(r)].size());
  for (int t = 0; t < b.length; ++t) {
    for (Role r : kRoles) {
      const int ri = index_of(r);
      b.inputs[ri].push_back(Matrix::Zero(B, width[ri]));
      b.actions[ri].push_back(std::vector<int>(B, 0));
      b.obl_target[ri].push_back(Matrix::Zero(B, 1));
    }
    b.valid.push_back(Matrix::Zero(B, 1));
    b.terminal.push_back(Matrix::Ones(B, 1));
    b.delivered.push_back(Matrix::Zero(B, 1));
    b.in_comm.push_back(Matrix::Zero(B, 1));
    b.steps.push_back(std::vector<const StepRecord*>(B, nullptr));
    for (Index i = 0; i < B; ++i) {
      const auto& ep = *episodes[i];
      if (t >= ep.length()) continue;
      const StepRecord& s = ep.steps[t];
      b.steps[t][i] = &s;
      for (Role r : kRoles) {
        const int ri = index_of(r);
        const auto& o = s.obs[ri];
        if (static_cast<Index>(o.size()) != width[ri])
          throw UsageError("make_batch: observation width differs across episodes");
        for (Index c = 0; c < width[ri]; ++c) b.inputs[ri][t](i, c) = o[c];
        b.actions[ri][t][i] = s.action[ri];
        b.obl_target[ri][t](i, 0) = s.obl[ri].value();
      }
      b.valid[t](i, 0) = 1.0;
      b.terminal[t](i, 0) = s.terminal ? 1.0 : 0.0;
      b.delivered[t](i, 0) = s.delivered ? 1.0 : 0.0;
      b.in_comm[t](i, 0) = s.in_comm ? 1.0 : 0.0;
    }
  }
  return b;
}

inline std::vector<Tensor> input_tensors(const Batch& b, Role r) {
  std::vector<Tensor> xs;
  for (const auto& m : b.inputs[index_of(r)]) xs.emplace_back(m);
  return xs;
}

inline std::vector<nn::NetOutput> unroll_batch(const nn::AgentNet& net,
                                               const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw UsageError("unroll_batch: no steps");
  return net.unroll(inputs, net.initial_state(inputs[0].rows()));
}

// max_a Qhat(a | tau_t) for every t, without a graph.
inline std::vector<Matrix> target_max_q(const nn::AgentNet& target, const Batch& b, Role r) {
  nn::NoGradGuard no_grad;
  auto outs = unroll_batch(target, input_tensors(b, r));
  std::vector<Matrix> m;
  for (const auto& o : outs) m.push_back(o.q.value().rowwise().maxCoeff());
  return m;
}

inline std::vector<Matrix> batch_rewards(const Batch& b, const RewardWeights& w) {
  std::vector<Matrix> out;
  for (int t = 0; t < b.length; ++t) {
    Matrix r = Matrix::Zero(b.size, 1);
    for (int i = 0; i < b.size; ++i)
      if (const StepRecord* s = b.steps[t][i]) r(i, 0) = w(*s);
    out.push_back(std::move(r));
  }
  return out;
}

// Mean over valid steps of 0.5 * (y - Q(a_t | tau_t))^2 with
// y = r_t + gamma * (1 - terminal_t) * max_a Qhat(a | tau_{t+1}).
inline Tensor td_loss(const std::vector<nn::NetOutput>& online, const Batch& b, Role r,
                      const std::vector<Matrix>& rewards,
                      const std::vector<Matrix>& next_max_q, double gamma) {
  const int ri = index_of(r);
  double count = 0.0;
  for (const auto& v : b.valid) count += v.sum();
  if (count <= 0.0) throw UsageError("td_loss: empty batch");
  Tensor total;
  for (int t = 0; t < b.length; ++t) {
    Matrix y = rewards[t];
    if (t + 1 < b.length) {
      Matrix cont = (1.0 - b.terminal[t].array()).matrix();
      y += gamma * cont.cwiseProduct(next_max_q[t + 1]);
    }
    Tensor q = nn::gather_cols(online[t].q, b.actions[ri][t]);
    Tensor err = nn::mul_const(nn::sub(q, Tensor(y)), b.valid[t]);
    Tensor term = nn::sum(nn::square(err));
    total = total.defined() ? nn::add(total, term) : term;
  }
  return nn::scale(total, 0.5 / count);
}

inline Tensor iql_loss(const Batch& b, Role r, const nn::AgentNet& net,
                       const nn::AgentNet& target, double gamma, const RewardWeights& w) {
  auto online = unroll_batch(net, input_tensors(b, r));
  return td_loss(online, b, r, batch_rewards(b, w), target_max_q(target, b, r), gamma);
}

// Squared error against the stored fictitious targets.
inline Tensor obl_loss_from_outputs(const std::vector<nn::NetOutput>& online, const Batch& b,
                                    Role r) {
  const int ri = index_of(r);
  double count = 0.0;
  for (const auto& v : b.valid) count += v.sum();
  if (count <= 0.0) throw UsageError("obl_loss: empty batch");
  Tensor total;
  for (int t = 0; t < b.length; ++t) {
    Tensor q = nn::gather_cols(online[t].q, b.actions[ri][t]);
    Tensor err = nn::mul_const(nn::sub(q, Tensor(b.obl_target[ri][t])), b.valid[t]);
    Tensor term = nn::sum(nn::square(err));
    total = total.defined() ? nn::add(total, term) : term;
  }
  return nn::scale(total, 0.5 / count);
}

inline Tensor obl_loss(const Batch& b, Role r, const nn::AgentNet& net) {
  return obl_loss_from_outputs(unroll_batch(net, input_tensors(b, r)), b, r);
}

// ---------------------------------------------------------------- MI loss

// Per-row I(A; O) = H(O) - H(O | A) for a batch of action priors (n x 7), each
// row with its own conditional token table. Differentiable in the prior.
inline Tensor policy_mutual_information(
    const Tensor& prior, const std::vector<std::array<mi::TokenDist, kNumActions>>& cond) {
  const Index n = prior.rows();
  if (prior.cols() != kNumActions || static_cast<Index>(cond.size()) != n)
    throw UsageError("policy_mutual_information: shape mismatch");
  const Matrix& p = prior.value();
  Matrix out(n, 1);
  // Cached per row: log of the token marginal and -H(O | a) per action.
  std::vector<std::array<double, kNumTokenValues>> log_marg(n);
  std::vector<std::array<double, kNumActions>> neg_h(n);
  for (Index i = 0; i < n; ++i) {
    std::array<double, kNumTokenValues> marg{};
    double value = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      double c = 0.0;
      for (int o = 0; o < kNumTokenValues; ++o) {
        marg[o] += p(i, a) * cond[i][a][o];
        c += mi::xlogx(cond[i][a][o]);
      }
      neg_h[i][a] = c;
      value += p(i, a) * c;
    }
    for (int o = 0; o < kNumTokenValues; ++o) {
      value -= mi::xlogx(marg[o]);
      log_marg[i][o] = std::log(std::max(marg[o], 1e-300));
    }
    out(i, 0) = value;
  }
  return nn::detail::make_op(std::move(out), {prior},
                             [cond, log_marg, neg_h](nn::detail::Node& self) {
                               const Index rows = self.grad.rows();
                               Matrix g(rows, kNumActions);
                               for (Index i = 0; i < rows; ++i)
                                 for (int a = 0; a < kNumActions; ++a) {
                                   double d = neg_h[i][a];
                                   for (int o = 0; o < kNumTokenValues; ++o)
                                     if (cond[i][a][o] > 0.0)
                                       d -= (log_marg[i][o] + 1.0) * cond[i][a][o];
                                   g(i, a) = self.grad(i, 0) * d;
                                 }
                               self.parents[0]->accumulate(g);
                             });
}

// Batch mean of I(A^1, O^2; softmax(Q / T)) over sender steps inside S_comm.
// Undefined tensor when the batch never visits S_comm.
inline Tensor mi_objective(const std::vector<nn::NetOutput>& sender_outputs, const Batch& b,
                           double temperature) {
  Tensor total;
  double count = 0.0;
  for (int t = 0; t < b.length; ++t) {
    std::vector<std::array<mi::TokenDist, kNumActions>> cond(b.size);
    Matrix mask = Matrix::Zero(b.size, 1);
    for (int i = 0; i < b.size; ++i) {
      const StepRecord* s = b.steps[t][i];
      if (!s || !s->mi_terms.active) {
        for (auto& row : cond[i]) row = {0.0, 1.0, 0.0};
        continue;
      }
      cond[i] = s->mi_terms.cond;
      mask(i, 0) = 1.0;
    }
    if (mask.sum() == 0.0) continue;
    count += mask.sum();
    Tensor prior = nn::softmax_rows(nn::scale(sender_outputs[t].q, 1.0 / temperature));
    Tensor term = nn::sum(nn::mul_const(policy_mutual_information(prior, cond), mask));
    total = total.defined() ? nn::add(total, term) : term;
  }
  if (!total.defined()) return total;
  return nn::scale(total, 1.0 / count);
}

// L_OBL - kappa * I for the sender; plain OBL for the receiver.
inline Tensor ctdl_loss(const Batch& b, Role r, const nn::AgentNet& net, double kappa,
                        double temperature) {
  auto online = unroll_batch(net, input_tensors(b, r));
  Tensor loss = obl_loss_from_outputs(online, b, r);
  if (r != Role::kSender || kappa == 0.0) return loss;
  Tensor mi_term = mi_objective(online, b, temperature);
  if (!mi_term.defined()) return loss;
  return nn::sub(loss, nn::scale(mi_term, kappa));
}

// ---------------------------------------------------------------- DIAL

struct DialNets {
  const nn::AgentNet* sender = nullptr;
  const nn::AgentNet* sender_target = nullptr;
  const nn::AgentNet* receiver = nullptr;
  const nn::AgentNet* receiver_target = nullptr;
};

struct DialLosses {
  Tensor sender;
  Tensor receiver;
  Tensor total;
  int flagged_steps = 0;
};

// Receiver inputs where every token written by a delivery at step k is
// replaced, from k + 1 until the next delivery, by 2 * DRU(m_k) - 1 computed
// from the sender's live message output. Other entries are the stored inputs.
inline std::vector<Tensor> dial_receiver_inputs(const Batch& b,
                                                const std::vector<nn::NetOutput>& sender_out,
                                                double sigma,
                                                const std::vector<Matrix>& noise) {
  const int rr = index_of(Role::kReceiver);
  const Index B = b.size;
  const Index width = b.inputs[rr][0].cols();
  const Index token_col = width - 1;
  std::vector<std::optional<Tensor>> token_k(b.length);
  std::vector<Tensor> xs;
  std::vector<int> latest(B, -1);
  for (int t = 0; t < b.length; ++t) {
    const Matrix& stored = b.inputs[rr][t];
    Matrix replaced = Matrix::Zero(B, 1);
    std::vector<std::pair<int, Matrix>> selectors;
    for (Index i = 0; i < B; ++i) {
      if (latest[i] < 0 || b.valid[t](i, 0) == 0.0) continue;
      replaced(i, 0) = 1.0;
      auto it = std::find_if(selectors.begin(), selectors.end(),
                             [&](const auto& s) { return s.first == latest[i]; });
      if (it == selectors.end()) {
        selectors.emplace_back(latest[i], Matrix::Zero(B, 1));
        it = selectors.end() - 1;
      }
      it->second(i, 0) = 1.0;
    }
    if (selectors.empty()) {
      xs.emplace_back(stored);
    } else {
      Matrix kept_token = stored.col(token_col).cwiseProduct((1.0 - replaced.array()).matrix());
      Tensor token(kept_token);
      for (auto& [k, sel] : selectors) {
        if (!token_k[k]) {
          token_k[k] = token_from_dru(dru_tensor(sender_out[k].message, sigma, noise[k]));
        }
        token = nn::add(token, nn::mul_const(*token_k[k], sel));
      }
      xs.push_back(nn::concat_cols({Tensor(Matrix(stored.leftCols(token_col))), token}));
    }
    for (Index i = 0; i < B; ++i)
      if (b.valid[t](i, 0) > 0.0 && b.delivered[t](i, 0) > 0.0) latest[i] = t;
  }
  return xs;
}

inline std::vector<Matrix> draw_dru_noise(const Batch& b, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Matrix> noise;
  for (int t = 0; t < b.length; ++t) {
    Matrix m(b.size, 1);
    for (Index i = 0; i < b.size; ++i) m(i, 0) = z(rng);
    noise.push_back(std::move(m));
  }
  return noise;
}

// Both agents' TD losses over a DIAL batch; the receiver's loss reaches the
// sender's message head through the DRU link.
inline DialLosses dial_losses(const Batch& b, const DialNets& nets, double gamma, double sigma,
                              const std::vector<Matrix>& noise, const RewardWeights& w) {
  DialLosses out;
  for (const auto& d : b.delivered) out.flagged_steps += static_cast<int>(d.sum());
  if (out.flagged_steps == 0) throw UsageError("dial update needs at least one delivery");
  auto rewards = batch_rewards(b, w);
  auto sender_out = unroll_batch(*nets.sender, input_tensors(b, Role::kSender));
  auto receiver_in = dial_receiver_inputs(b, sender_out, sigma, noise);
  auto receiver_out = unroll_batch(*nets.receiver, receiver_in);
  out.sender = td_loss(sender_out, b, Role::kSender, rewards,
                       target_max_q(*nets.sender_target, b, Role::kSender), gamma);
  out.receiver = td_loss(receiver_out, b, Role::kReceiver, rewards,
                         target_max_q(*nets.receiver_target, b, Role::kReceiver), gamma);
  out.total = nn::add(out.sender, out.receiver);
  return out;
}

}  // namespace cheaptalk::learn
