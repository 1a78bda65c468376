#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cheaptalk/env/maze.hpp"
#include "cheaptalk/errors.hpp"

namespace cheaptalk::mi {

using ActionDist = std::array<double, kNumActions>;
using TokenDist = std::array<double, kNumTokenValues>;

inline ActionDist uniform_prior() {
  ActionDist p;
  p.fill(1.0 / kNumActions);
  return p;
}

// Exact p(a1), p(o2|a1), p(a1, o2) and p(o2) at one state. o2 is reduced to the
// receiver's token, the only part of its observation the sender can touch.
struct MiTable {
  std::string state_key;
  ActionDist prior{};
  std::array<TokenDist, kNumActions> cond{};
  std::array<TokenDist, kNumActions> joint{};
  TokenDist marginal_obs{};
};

struct MiValue {
  double nats = 0.0;
};

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

inline MiTable table_from_cond(std::string key, const ActionDist& prior,
                               const std::array<TokenDist, kNumActions>& cond) {
  double total = std::accumulate(prior.begin(), prior.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9)
    throw UsageError("MI prior must sum to 1");
  MiTable t;
  t.state_key = std::move(key);
  t.prior = prior;
  t.cond = cond;
  t.marginal_obs.fill(0.0);
  for (int a = 0; a < kNumActions; ++a) {
    for (int o = 0; o < kNumTokenValues; ++o) {
      t.joint[a][o] = cond[a][o] * prior[a];
      t.marginal_obs[o] += t.joint[a][o];
    }
  }
  return t;
}

// Conditional token table p(o2 | a1) with the receiver playing NOOP. Constant
// with respect to any policy, so it doubles as the MI-loss mask.
inline std::array<TokenDist, kNumActions> conditional_table(const Maze& maze,
                                                            const EnvState& s) {
  std::array<TokenDist, kNumActions> cond{};
  for (Action a : kAllActions) cond[index_of(a)] = maze.hint_outcome_distribution(s, a);
  return cond;
}

inline MiTable build_table(const Maze& maze, const EnvState& s,
                           const ActionDist& prior) {
  return table_from_cond(state_key(s), prior, conditional_table(maze, s));
}

inline bool rows_identical(const std::array<TokenDist, kNumActions>& cond) {
  for (int a = 1; a < kNumActions; ++a)
    if (cond[a] != cond[0]) return false;
  return true;
}

// H(A) + H(O) - H(A, O). Identical conditional rows mean independence, which
// is reported as an exact zero.
inline MiValue mutual_information(const MiTable& t) {
  if (rows_identical(t.cond)) return {0.0};
  double h_a = 0.0, h_o = 0.0, h_ao = 0.0;
  for (int a = 0; a < kNumActions; ++a) h_a -= xlogx(t.prior[a]);
  for (int o = 0; o < kNumTokenValues; ++o) h_o -= xlogx(t.marginal_obs[o]);
  for (int a = 0; a < kNumActions; ++a)
    for (int o = 0; o < kNumTokenValues; ++o) h_ao -= xlogx(t.joint[a][o]);
  return {std::max(0.0, h_a + h_o - h_ao)};
}

// E_{a,o}[log p(a|o) - log p(a)], the expectation form.
inline MiValue mutual_information_expectation(const MiTable& t) {
  double total = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    for (int o = 0; o < kNumTokenValues; ++o) {
      double pj = t.joint[a][o];
      if (pj <= 0.0) continue;
      double p_a_given_o = pj / t.marginal_obs[o];
      total += pj * (std::log(p_a_given_o) - std::log(t.prior[a]));
    }
  }
  return {std::max(0.0, total)};
}

// I(A_actor, O_observer) for an arbitrary ordered pair, computed on full
// observation vectors: the actor enumerates its actions under `prior`, the
// observer plays NOOP, and every stochastic branch is followed exactly.
inline double directed_mi(const Maze& maze, const EnvState& s, Role actor,
                          const ActionDist& prior) {
  if (s.done) return 0.0;
  Role observer = other(actor);
  std::map<std::vector<double>, int> outcome_ids;
  std::vector<std::vector<double>> cond(kNumActions);
  for (Action a : kAllActions) {
    JointAction ja = actor == Role::kSender ? JointAction{a, Action::kNoop}
                                            : JointAction{Action::kNoop, a};
    for (const auto& tr : maze.transitions(s, ja)) {
      auto obs = maze.observe(tr.next, observer).features;
      auto [it, inserted] =
          outcome_ids.try_emplace(std::move(obs), static_cast<int>(outcome_ids.size()));
      auto& row = cond[index_of(a)];
      if (row.size() <= static_cast<std::size_t>(it->second))
        row.resize(it->second + 1, 0.0);
      row[it->second] += tr.probability;
    }
  }
  const std::size_t n_out = outcome_ids.size();
  if (n_out <= 1) return 0.0;
  std::vector<double> marginal(n_out, 0.0);
  double h_a = 0.0, h_ao = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    h_a -= xlogx(prior[a]);
    cond[a].resize(n_out, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      double pj = cond[a][o] * prior[a];
      marginal[o] += pj;
      h_ao -= xlogx(pj);
    }
  }
  double h_o = 0.0;
  for (double p : marginal) h_o -= xlogx(p);
  return std::max(0.0, h_a + h_o - h_ao);
}

// MI(s): the sum of I(A_i, O_j) over ordered agent pairs with uniform priors.
// The sender->receiver term uses the token-reduced table; the receiver->sender
// term is evaluated on full observations (it is zero: the rooms are disjoint).
inline double pairwise_mi(const Maze& maze, const EnvState& s) {
  if (s.done) return 0.0;
  double sender_to_receiver =
      mutual_information(build_table(maze, s, uniform_prior())).nats;
  double receiver_to_sender =
      directed_mi(maze, s, Role::kReceiver, uniform_prior());
  return sender_to_receiver + receiver_to_sender;
}

// Sum_t gamma^t MI(s_t).
inline double discounted_pmi(const Maze& maze, const std::vector<EnvState>& trajectory,
                             double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw UsageError("discount must lie in [0, 1)");
  double total = 0.0, weight = 1.0;
  for (const auto& s : trajectory) {
    total += weight * pairwise_mi(maze, s);
    weight *= gamma;
  }
  return total;
}

// Mean MI over every receiver position, for each sender cell (token 0). Walls
// and exits are skipped; wall cells report 0.
inline std::vector<std::vector<double>> heatmap(const Maze& maze) {
  const auto& cfg = maze.config();
  std::vector<std::vector<double>> grid(
      cfg.sender_room.height, std::vector<double>(cfg.sender_room.width, 0.0));
  std::vector<Cell> receiver_cells;
  for (int i = 0; i < cfg.receiver_room.area(); ++i) {
    Cell c = cfg.receiver_room.cell(i);
    if (!cfg.receiver_walkable(c) || c == cfg.exit_up || c == cfg.exit_down)
      continue;
    receiver_cells.push_back(c);
  }
  for (int i = 0; i < cfg.sender_room.area(); ++i) {
    Cell sc = cfg.sender_room.cell(i);
    if (!cfg.sender_walkable(sc)) continue;
    double sum = 0.0;
    for (Cell rc : receiver_cells) {
      EnvState s = maze.initial_state(Goal::kUp, cfg.fixed_decoys());
      s.sender_pos = sc;
      s.receiver_pos = rc;
      sum += pairwise_mi(maze, s);
    }
    grid[sc.row][sc.col] = sum / static_cast<double>(receiver_cells.size());
  }
  return grid;
}

inline void write_heatmap_csv(const std::vector<std::vector<double>>& grid,
                              std::ostream& out) {
  out << "row,col,mi_nats\n";
  out.precision(17);
  for (std::size_t r = 0; r < grid.size(); ++r)
    for (std::size_t c = 0; c < grid[r].size(); ++c)
      out << r << "," << c << "," << grid[r][c] << "\n";
}

// Policy-independent inputs of the differentiable MI at one state. `active`
// is false wherever all rows of `cond` coincide (I = 0 for every prior).
struct MiLossTerms {
  bool active = false;
  std::array<TokenDist, kNumActions> cond{};
};

inline MiLossTerms mi_loss_terms(const Maze& maze, const EnvState& s) {
  MiLossTerms terms;
  if (s.done) return terms;
  terms.cond = conditional_table(maze, s);
  terms.active = !rows_identical(terms.cond);
  return terms;
}

// Plain-double MI of a policy given precomputed loss terms.
inline double mutual_information(const MiLossTerms& terms, const ActionDist& prior) {
  if (!terms.active) return 0.0;
  return mutual_information(table_from_cond("", prior, terms.cond)).nats;
}

}  // namespace cheaptalk::mi
