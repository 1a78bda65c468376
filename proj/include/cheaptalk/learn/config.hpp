#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cheaptalk/errors.hpp"

namespace cheaptalk::learn {

enum class Algorithm {
  kIQL,
  kIQL_IR,
  kOBL,
  kCTDL,
  kCTDUL,
  kCTDUL_no_MI,
  kCTDUL_no_DIAL,
  kCTDUL_IQL_discovery,
};

inline constexpr std::array<Algorithm, 8> kAllAlgorithms = {
    Algorithm::kIQL,         Algorithm::kIQL_IR,        Algorithm::kOBL,
    Algorithm::kCTDL,        Algorithm::kCTDUL,         Algorithm::kCTDUL_no_MI,
    Algorithm::kCTDUL_no_DIAL, Algorithm::kCTDUL_IQL_discovery};

inline std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kIQL: return "IQL";
    case Algorithm::kIQL_IR: return "IQL_IR";
    case Algorithm::kOBL: return "OBL";
    case Algorithm::kCTDL: return "CTDL";
    case Algorithm::kCTDUL: return "CTDUL";
    case Algorithm::kCTDUL_no_MI: return "CTDUL_no_MI";
    case Algorithm::kCTDUL_no_DIAL: return "CTDUL_no_DIAL";
    case Algorithm::kCTDUL_IQL_discovery: return "CTDUL_IQL_discovery";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : kAllAlgorithms)
    if (algorithm_name(a) == name) return a;
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

// What each algorithm does in its discovery stage and whether it has a
// utilization stage afterwards.
struct AlgorithmTraits {
  bool obl_discovery = false;  // OBL targets + Boltzmann exploration
  bool mi_reward = false;
  bool mi_loss = false;
  bool intermediate_reward = false;
  bool utilization_stage = false;
  bool dial = false;
};

inline AlgorithmTraits traits(Algorithm a) {
  switch (a) {
    case Algorithm::kIQL: return {};
    case Algorithm::kIQL_IR: return {.intermediate_reward = true};
    case Algorithm::kOBL: return {.obl_discovery = true};
    case Algorithm::kCTDL:
      return {.obl_discovery = true, .mi_reward = true, .mi_loss = true};
    case Algorithm::kCTDUL:
      return {.obl_discovery = true, .mi_reward = true, .mi_loss = true,
              .utilization_stage = true, .dial = true};
    case Algorithm::kCTDUL_no_MI:
      return {.obl_discovery = true, .utilization_stage = true, .dial = true};
    case Algorithm::kCTDUL_no_DIAL:
      return {.obl_discovery = true, .mi_reward = true, .mi_loss = true,
              .utilization_stage = true};
    case Algorithm::kCTDUL_IQL_discovery:
      return {.mi_reward = true, .mi_loss = true, .utilization_stage = true, .dial = true};
  }
  return {};
}

struct EpsilonSchedule {
  double start = 1.0;
  double decay_per_step = 1e-5;
  double min = 0.1;

  double at(long step) const {
    return std::max(min, start - decay_per_step * static_cast<double>(step));
  }
};

struct TrainerConfig {
  Algorithm algorithm = Algorithm::kCTDL;
  double beta = 2.0;   // MI reward weight
  double kappa = 1.0;  // MI loss weight
  double sigma = 2.0;  // DRU noise std
  double gamma = 0.99;
  int batch_size = 32;
  int buffer_capacity = 10000;  // transitions
  EpsilonSchedule epsilon;
  long initial_exploration_steps = 1000;
  double temperature = 0.1;  // Boltzmann exploration and pi_theta for the MI loss
  int target_update_C = 100;
  int num_discovery_episodes = 12000;
  int total_episodes = 12000;
  int eval_every = 20;
  int eval_episodes_per_goal = 1;
  double intermediate_reward = 1.0;
  double learning_rate = 1e-4;
  double grad_clip = 10.0;
  int hidden_size = 128;
  int train_every = 1;  // env steps between gradient steps
  int belief_max_attempts = 1000;
  unsigned long long seed = 0;

  void validate() const {
    if (beta < 0.0 || kappa < 0.0) throw ConfigError("beta and kappa must be non-negative");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (sigma < 0.0) throw ConfigError("sigma must be non-negative");
    if (batch_size < 1 || buffer_capacity < 1) throw ConfigError("bad batch/buffer size");
    if (epsilon.decay_per_step < 0.0 || epsilon.min > epsilon.start)
      throw ConfigError("epsilon schedule must be non-increasing");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (target_update_C < 1 || eval_every < 1 || train_every < 1 ||
        eval_episodes_per_goal < 1)
      throw ConfigError("intervals must be positive");
    if (total_episodes < 0 || num_discovery_episodes < 0)
      throw ConfigError("episode counts must be non-negative");
    if (hidden_size < 1 || learning_rate <= 0.0) throw ConfigError("bad network settings");
  }
};

inline nlohmann::json to_json(const TrainerConfig& c) {
  return {{"algorithm", algorithm_name(c.algorithm)},
          {"beta", c.beta},
          {"kappa", c.kappa},
          {"sigma", c.sigma},
          {"gamma", c.gamma},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"epsilon_start", c.epsilon.start},
          {"epsilon_decay", c.epsilon.decay_per_step},
          {"epsilon_min", c.epsilon.min},
          {"initial_exploration_steps", c.initial_exploration_steps},
          {"temperature", c.temperature},
          {"target_update_C", c.target_update_C},
          {"num_discovery_episodes", c.num_discovery_episodes},
          {"total_episodes", c.total_episodes},
          {"eval_every", c.eval_every},
          {"eval_episodes_per_goal", c.eval_episodes_per_goal},
          {"intermediate_reward", c.intermediate_reward},
          {"learning_rate", c.learning_rate},
          {"grad_clip", c.grad_clip},
          {"hidden_size", c.hidden_size},
          {"train_every", c.train_every},
          {"belief_max_attempts", c.belief_max_attempts},
          {"seed", c.seed}};
}

// Missing keys keep their defaults.
inline TrainerConfig trainer_config_from_json(const nlohmann::json& j) {
  TrainerConfig c;
  try {
    if (j.contains("algorithm")) c.algorithm = parse_algorithm(j["algorithm"].get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("beta", c.beta);
    get("kappa", c.kappa);
    get("sigma", c.sigma);
    get("gamma", c.gamma);
    get("batch_size", c.batch_size);
    get("buffer_capacity", c.buffer_capacity);
    get("epsilon_start", c.epsilon.start);
    get("epsilon_decay", c.epsilon.decay_per_step);
    get("epsilon_min", c.epsilon.min);
    get("initial_exploration_steps", c.initial_exploration_steps);
    get("temperature", c.temperature);
    get("target_update_C", c.target_update_C);
    get("num_discovery_episodes", c.num_discovery_episodes);
    get("total_episodes", c.total_episodes);
    get("eval_every", c.eval_every);
    get("eval_episodes_per_goal", c.eval_episodes_per_goal);
    get("intermediate_reward", c.intermediate_reward);
    get("learning_rate", c.learning_rate);
    get("grad_clip", c.grad_clip);
    get("hidden_size", c.hidden_size);
    get("train_every", c.train_every);
    get("belief_max_attempts", c.belief_max_attempts);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed trainer config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace cheaptalk::learn
