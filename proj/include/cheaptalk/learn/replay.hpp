#pragma once

#include <array>
#include <deque>
#include <random>
#include <vector>

#include "cheaptalk/belief/obl.hpp"
#include "cheaptalk/env/maze.hpp"
#include "cheaptalk/errors.hpp"
#include "cheaptalk/mi/mi_engine.hpp"

namespace cheaptalk::learn {

// One real transition s_t -> s_{t+1} as seen by both agents.
struct StepRecord {
  std::array<std::vector<double>, 2> obs;  // o_t, indexed by role
  std::array<int, 2> action{};             // selected action indices
  double task_reward = 0.0;                // environment reward, no shaping
  double mi = 0.0;                         // pairwise MI(s_t), uniform probe
  bool in_comm = false;                    // s_t in S_comm
  bool delivered = false;                  // a hint reached the receiver this step
  bool terminal = false;                   // s_{t+1} ended the episode
  double message = 0.0;                    // sender message head output at t
  mi::MiLossTerms mi_terms;                // sender-side MI tables at s_t
  std::array<belief::ObLTarget, 2> obl{};  // fictitious targets per role
  bool has_obl = false;
};

struct EpisodeRecord {
  std::vector<StepRecord> steps;
  Goal goal = Goal::kUp;

  int length() const { return static_cast<int>(steps.size()); }
  bool has_delivery() const {
    for (const auto& s : steps)
      if (s.delivered) return true;
    return false;
  }
};

// Whole-episode ring buffer bounded by a transition count; the oldest
// episodes are evicted first.
class EpisodeReplay {
 public:
  explicit EpisodeReplay(int capacity_transitions = 10000) : capacity_(capacity_transitions) {
    if (capacity_ < 1) throw ConfigError("replay capacity must be positive");
  }

  virtual ~EpisodeReplay() = default;

  virtual void add(EpisodeRecord ep) {
    if (ep.steps.empty()) throw UsageError("cannot store an empty episode");
    transitions_ += ep.length();
    episodes_.push_back(std::move(ep));
    while (transitions_ > capacity_ && episodes_.size() > 1) {
      transitions_ -= episodes_.front().length();
      episodes_.pop_front();
    }
  }

  // Uniform draw of up to n distinct episodes.
  std::vector<const EpisodeRecord*> sample(int n, Rng& rng) const {
    std::vector<const EpisodeRecord*> out;
    if (episodes_.empty()) return out;
    const int size = static_cast<int>(episodes_.size());
    if (n >= size) {
      for (const auto& e : episodes_) out.push_back(&e);
      return out;
    }
    std::vector<int> idx(size);
    for (int i = 0; i < size; ++i) idx[i] = i;
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, size - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.push_back(&episodes_[idx[i]]);
    }
    return out;
  }

  int episodes() const { return static_cast<int>(episodes_.size()); }
  int transitions() const { return transitions_; }
  int capacity() const { return capacity_; }
  const std::deque<EpisodeRecord>& contents() const { return episodes_; }

 private:
  int capacity_;
  int transitions_ = 0;
  std::deque<EpisodeRecord> episodes_;
};

using ObLReplay = EpisodeReplay;

// Only episodes with at least one delivered message; the per-step delivered
// flags mark where the cross-agent gradient link exists.
class DialReplay : public EpisodeReplay {
 public:
  using EpisodeReplay::EpisodeReplay;

  void add(EpisodeRecord ep) override {
    if (!ep.has_delivery()) throw UsageError("DialReplay only stores episodes with a delivery");
    for (const auto& s : ep.steps)
      if (s.delivered && !s.in_comm)
        throw InconsistencyError("delivery flagged outside the communicative state");
    EpisodeReplay::add(std::move(ep));
  }
};

}  // namespace cheaptalk::learn
