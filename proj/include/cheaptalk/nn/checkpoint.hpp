#pragma once

// Checkpoint format (JSON, one document per network):
//   {
//     "format": "cheaptalk-agentnet-v1",
//     "config": {"input_size": I, "hidden_size": H, "trunk_size": F, "num_actions": A},
//     "parameters": [{"name": "lstm.weight", "shape": [rows, cols],
//                     "values": [row-major doubles]}, ...]
//   }
// Doubles are written with round-trip precision, so save/load is lossless.

#include <fstream>
#include <string>

#include <json.hpp>

#include "cheaptalk/errors.hpp"
#include "cheaptalk/nn/agent_net.hpp"

namespace cheaptalk::nn {

inline constexpr const char* kCheckpointFormat = "cheaptalk-agentnet-v1";

inline nlohmann::json to_json(const AgentNet& net) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  const auto& c = net.config();
  j["config"] = {{"input_size", c.input_size},
                 {"hidden_size", c.hidden_size},
                 {"trunk_size", c.trunk_size},
                 {"num_actions", c.num_actions}};
  auto params = net.parameters();
  auto names = AgentNet::parameter_names();
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& v = params[i].value();
    std::vector<double> flat(v.data(), v.data() + v.size());
    list.push_back({{"name", names[i]}, {"shape", {v.rows(), v.cols()}}, {"values", flat}});
  }
  j["parameters"] = list;
  return j;
}

inline AgentNet agent_net_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw ConfigError("unknown checkpoint format");
    AgentNetConfig cfg;
    cfg.input_size = j.at("config").at("input_size").get<int>();
    cfg.hidden_size = j.at("config").at("hidden_size").get<int>();
    cfg.trunk_size = j.at("config").at("trunk_size").get<int>();
    cfg.num_actions = j.at("config").at("num_actions").get<int>();
    AgentNet net(cfg);
    auto params = net.parameters();
    auto names = AgentNet::parameter_names();
    const auto& list = j.at("parameters");
    if (list.size() != params.size()) throw ConfigError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& entry = list.at(i);
      if (entry.at("name").get<std::string>() != names[i])
        throw ConfigError("checkpoint parameter order mismatch at " + names[i]);
      auto shape = entry.at("shape").get<std::vector<Index>>();
      if (shape.size() != 2 || shape[0] != params[i].rows() || shape[1] != params[i].cols())
        throw ConfigError("checkpoint shape mismatch for " + names[i]);
      auto values = entry.at("values").get<std::vector<double>>();
      if (static_cast<Index>(values.size()) != params[i].value().size())
        throw ConfigError("checkpoint value count mismatch for " + names[i]);
      std::copy(values.begin(), values.end(), params[i].mutable_value().data());
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const AgentNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << to_json(net).dump();
}

inline AgentNet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse checkpoint '" + path + "': " + e.what());
  }
  return agent_net_from_json(j);
}

}  // namespace cheaptalk::nn
