#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cheaptalk {

using Rng = std::mt19937_64;

struct Cell {
  int row = 0;
  int col = 0;

  friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

// A_env = {kUp .. kNoop}, A_comm = {kHintUp, kHintDown}.
enum class Action : int {
  kUp = 0,
  kDown = 1,
  kLeft = 2,
  kRight = 3,
  kNoop = 4,
  kHintUp = 5,
  kHintDown = 6,
};

inline constexpr int kNumActions = 7;
inline constexpr int kNumEnvActions = 5;

inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::kUp,   Action::kDown,   Action::kLeft,    Action::kRight,
    Action::kNoop, Action::kHintUp, Action::kHintDown};

constexpr int index_of(Action a) { return static_cast<int>(a); }
constexpr Action action_at(int i) { return static_cast<Action>(i); }
constexpr bool is_comm(Action a) {
  return a == Action::kHintUp || a == Action::kHintDown;
}

inline std::string_view action_name(Action a) {
  switch (a) {
    case Action::kUp: return "UP";
    case Action::kDown: return "DOWN";
    case Action::kLeft: return "LEFT";
    case Action::kRight: return "RIGHT";
    case Action::kNoop: return "NOOP";
    case Action::kHintUp: return "HINT_UP";
    case Action::kHintDown: return "HINT_DOWN";
  }
  return "?";
}

enum class Role : int { kSender = 0, kReceiver = 1 };
inline constexpr std::array<Role, 2> kRoles = {Role::kSender, Role::kReceiver};
constexpr int index_of(Role r) { return static_cast<int>(r); }
constexpr Role other(Role r) {
  return r == Role::kSender ? Role::kReceiver : Role::kSender;
}

enum class Goal : int { kUp = 0, kDown = 1 };

struct JointAction {
  Action sender = Action::kNoop;
  Action receiver = Action::kNoop;

  Action of(Role r) const { return r == Role::kSender ? sender : receiver; }
  friend constexpr bool operator==(const JointAction&,
                                   const JointAction&) = default;
};

// Token values written by delivered hints.
inline constexpr int kTokenHintUp = -1;
inline constexpr int kTokenHintDown = 1;
inline constexpr int kNumTokenValues = 3;
constexpr int token_index(int token) { return token + 1; }
constexpr int token_value(int index) { return index - 1; }

}  // namespace cheaptalk
