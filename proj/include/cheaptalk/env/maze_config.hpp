#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cheaptalk/env/types.hpp"
#include "cheaptalk/errors.hpp"

namespace cheaptalk {

struct RoomShape {
  int height = 1;
  int width = 3;

  bool contains(Cell c) const {
    return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
  }
  int area() const { return height * width; }
  int index(Cell c) const { return c.row * width + c.col; }
  Cell cell(int index) const { return {index / width, index % width}; }
  friend constexpr bool operator==(const RoomShape&, const RoomShape&) = default;
};

// A booth in the sender room. Decoys look identical in observations but never
// deliver and never charge.
struct BoothSpec {
  Cell position;
  double cost = 0.0;
  double noise_factor = 0.0;
  bool functional = true;
  std::string label;

  friend bool operator==(const BoothSpec&, const BoothSpec&) = default;
};

struct MazeConfig {
  std::string name = "custom";
  RoomShape sender_room{8, 3};
  RoomShape receiver_room{4, 3};
  Cell sender_start{4, 1};
  Cell receiver_start{2, 1};
  // Functional booths plus the fixed decoys (functional == false).
  std::vector<BoothSpec> booths;
  Cell receiver_booth{1, 1};
  int n_decoys = 0;
  bool reinit_decoys = false;
  Cell exit_up{0, 1};
  Cell exit_down{3, 1};
  double correct_reward = 1.0;
  double wrong_reward = -0.5;
  int episode_limit = 20;
  bool use_intermediate_reward = false;
  double intermediate_reward = 1.0;
  std::vector<Cell> sender_walls;
  std::vector<Cell> receiver_walls;

  std::vector<BoothSpec> functional_booths() const {
    std::vector<BoothSpec> out;
    for (const auto& b : booths)
      if (b.functional) out.push_back(b);
    return out;
  }
  std::vector<Cell> fixed_decoys() const {
    std::vector<Cell> out;
    for (const auto& b : booths)
      if (!b.functional) out.push_back(b.position);
    return out;
  }
  bool sender_walkable(Cell c) const {
    return sender_room.contains(c) &&
           std::find(sender_walls.begin(), sender_walls.end(), c) ==
               sender_walls.end();
  }
  bool receiver_walkable(Cell c) const {
    return receiver_room.contains(c) &&
           std::find(receiver_walls.begin(), receiver_walls.end(), c) ==
               receiver_walls.end();
  }

  friend bool operator==(const MazeConfig&, const MazeConfig&) = default;
};

inline std::string to_string(Cell c) {
  std::ostringstream os;
  os << "(" << c.row << ", " << c.col << ")";
  return os.str();
}

// Throws ConfigError describing the first violated invariant.
inline void validate(const MazeConfig& cfg) {
  auto fail = [&](const std::string& msg) {
    throw ConfigError("maze '" + cfg.name + "': " + msg);
  };
  if (cfg.sender_room.height < 1 || cfg.sender_room.width < 1)
    fail("sender room must be at least 1x1");
  if (cfg.receiver_room.height < 1 || cfg.receiver_room.width < 1)
    fail("receiver room must be at least 1x1");
  if (cfg.episode_limit < 1) fail("episode_limit must be >= 1");

  if (!cfg.sender_walkable(cfg.sender_start))
    fail("sender start " + to_string(cfg.sender_start) + " is not walkable");
  std::set<Cell> sender_cells{cfg.sender_start};
  int decoys = 0;
  for (const auto& b : cfg.booths) {
    if (!cfg.sender_walkable(b.position))
      fail("booth " + to_string(b.position) + " is not walkable");
    if (!sender_cells.insert(b.position).second)
      fail("booth " + to_string(b.position) + " overlaps another cell");
    if (!(b.noise_factor >= 0.0 && b.noise_factor < 1.0))
      fail("booth noise_factor must lie in [0, 1)");
    if (!(b.cost >= 0.0)) fail("booth cost must be >= 0");
    if (!b.functional) {
      ++decoys;
      if (b.cost != 0.0 || b.noise_factor != 0.0)
        fail("decoy booths carry no cost or noise");
    }
  }
  if (cfg.n_decoys < 0) fail("n_decoys must be >= 0");
  if (!cfg.reinit_decoys && decoys != cfg.n_decoys)
    fail("n_decoys does not match the number of fixed decoy booths");
  if (cfg.reinit_decoys) {
    int free_cells = 0;
    for (int i = 0; i < cfg.sender_room.area(); ++i) {
      Cell c = cfg.sender_room.cell(i);
      if (!cfg.sender_walkable(c) || c == cfg.sender_start) continue;
      bool functional_booth = false;
      for (const auto& b : cfg.booths)
        if (b.functional && b.position == c) functional_booth = true;
      if (!functional_booth) ++free_cells;
    }
    if (cfg.n_decoys > free_cells) fail("not enough free cells for decoys");
  }

  for (Cell c : {cfg.receiver_start, cfg.receiver_booth, cfg.exit_up,
                 cfg.exit_down}) {
    if (!cfg.receiver_walkable(c))
      fail("receiver-room cell " + to_string(c) + " is not walkable");
  }
  if (cfg.exit_up == cfg.exit_down) fail("exits must be two distinct cells");
  for (Cell e : {cfg.exit_up, cfg.exit_down}) {
    if (e == cfg.receiver_start || e == cfg.receiver_booth)
      fail("exit " + to_string(e) + " overlaps the receiver start or booth");
  }
}

// --- JSON ------------------------------------------------------------------

inline nlohmann::json cell_to_json(Cell c) { return {c.row, c.col}; }

inline Cell cell_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2)
    throw ConfigError("cell must be a [row, col] pair, got " + j.dump());
  return {j.at(0).get<int>(), j.at(1).get<int>()};
}

inline nlohmann::json to_json(const MazeConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["lengths"] = {cfg.sender_room.height, cfg.receiver_room.height};
  j["widths"] = {cfg.sender_room.width, cfg.receiver_room.width};
  j["starting_points"] = {cell_to_json(cfg.sender_start),
                          cell_to_json(cfg.receiver_start)};
  j["correct_reward"] = cfg.correct_reward;
  j["wrong_reward"] = cfg.wrong_reward;
  j["episode_limit"] = cfg.episode_limit;
  nlohmann::json types = nlohmann::json::array();
  nlohmann::json locations = nlohmann::json::array();
  nlohmann::json decoys = nlohmann::json::array();
  for (const auto& b : cfg.booths) {
    if (!b.functional) {
      decoys.push_back(cell_to_json(b.position));
      continue;
    }
    nlohmann::json t = {{"cost", b.cost}, {"noise", b.noise_factor}};
    if (!b.label.empty()) t["label"] = b.label;
    types.push_back(t);
    locations.push_back(cell_to_json(b.position));
  }
  j["booth_types"] = types;
  j["booth_locations"] = locations;
  j["num_decoy_booths"] = cfg.n_decoys;
  j["decoy_locations"] = decoys;
  j["booth_reinitialization"] = cfg.reinit_decoys;
  j["receiver_booth"] = cell_to_json(cfg.receiver_booth);
  j["exits"] = {{"up", cell_to_json(cfg.exit_up)},
                {"down", cell_to_json(cfg.exit_down)}};
  j["use_intermediate_reward"] = cfg.use_intermediate_reward;
  j["intermediate_reward"] = cfg.intermediate_reward;
  if (!cfg.sender_walls.empty() || !cfg.receiver_walls.empty()) {
    nlohmann::json s = nlohmann::json::array(), r = nlohmann::json::array();
    for (Cell c : cfg.sender_walls) s.push_back(cell_to_json(c));
    for (Cell c : cfg.receiver_walls) r.push_back(cell_to_json(c));
    j["walls"] = {{"sender", s}, {"receiver", r}};
  }
  return j;
}

// Parses and validates. Missing optional keys keep MazeConfig defaults.
inline MazeConfig maze_config_from_json(const nlohmann::json& j) {
  MazeConfig cfg;
  try {
    cfg.name = j.value("name", std::string("custom"));
    const auto& lengths = j.at("lengths");
    if (!lengths.is_array() || lengths.size() != 2)
      throw ConfigError("lengths must be [sender, receiver]");
    cfg.sender_room.height = lengths.at(0).get<int>();
    cfg.receiver_room.height = lengths.at(1).get<int>();
    if (j.contains("widths")) {
      cfg.sender_room.width = j["widths"].at(0).get<int>();
      cfg.receiver_room.width = j["widths"].at(1).get<int>();
    }
    const auto& starts = j.at("starting_points");
    cfg.sender_start = cell_from_json(starts.at(0));
    cfg.receiver_start = cell_from_json(starts.at(1));
    cfg.correct_reward = j.value("correct_reward", cfg.correct_reward);
    cfg.wrong_reward = j.value("wrong_reward", cfg.wrong_reward);
    cfg.episode_limit = j.value("episode_limit", cfg.episode_limit);

    const auto& types = j.at("booth_types");
    const auto& locations = j.at("booth_locations");
    if (types.size() != locations.size())
      throw ConfigError("booth_types and booth_locations differ in length");
    cfg.booths.clear();
    for (std::size_t i = 0; i < types.size(); ++i) {
      BoothSpec b;
      b.position = cell_from_json(locations.at(i));
      b.cost = types.at(i).value("cost", 0.0);
      b.noise_factor = types.at(i).value("noise", 0.0);
      b.label = types.at(i).value("label", std::string());
      b.functional = true;
      cfg.booths.push_back(b);
    }
    cfg.n_decoys = j.value("num_decoy_booths", 0);
    cfg.reinit_decoys = j.value("booth_reinitialization", false);
    if (j.contains("decoy_locations")) {
      for (const auto& d : j["decoy_locations"]) {
        BoothSpec b;
        b.position = cell_from_json(d);
        b.functional = false;
        b.label = "decoy";
        cfg.booths.push_back(b);
      }
    }
    cfg.receiver_booth = cell_from_json(j.at("receiver_booth"));
    cfg.exit_up = cell_from_json(j.at("exits").at("up"));
    cfg.exit_down = cell_from_json(j.at("exits").at("down"));
    cfg.use_intermediate_reward = j.value("use_intermediate_reward", false);
    cfg.intermediate_reward =
        j.value("intermediate_reward", cfg.intermediate_reward);
    if (j.contains("walls")) {
      for (const auto& c : j["walls"].value("sender", nlohmann::json::array()))
        cfg.sender_walls.push_back(cell_from_json(c));
      for (const auto& c :
           j["walls"].value("receiver", nlohmann::json::array()))
        cfg.receiver_walls.push_back(cell_from_json(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed maze config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

inline MazeConfig load_maze_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open maze config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
  return maze_config_from_json(j);
}

// --- presets ---------------------------------------------------------------

// Single Phone Booth Maze: 8x3 sender room, 4x3 receiver room, one noiseless
// free booth and two fixed decoys.
inline MazeConfig spbmaze() {
  MazeConfig cfg;
  cfg.name = "spbmaze";
  cfg.sender_room = {8, 3};
  cfg.receiver_room = {4, 3};
  cfg.sender_start = {4, 1};
  cfg.receiver_start = {2, 1};
  cfg.booths = {
      {{0, 1}, 0.0, 0.0, true, "functional"},
      {{0, 0}, 0.0, 0.0, false, "decoy"},
      {{7, 2}, 0.0, 0.0, false, "decoy"},
  };
  cfg.n_decoys = 2;
  cfg.receiver_booth = {1, 1};
  cfg.exit_up = {0, 1};
  cfg.exit_down = {3, 1};
  validate(cfg);
  return cfg;
}

// Multiple Phone Booth Maze: costly, perfect and noisy booths in a 5x3 sender
// room; the noisy booth is the one closest to the sender start.
inline MazeConfig mpbmaze(double noise) {
  MazeConfig cfg;
  std::ostringstream name;
  name << "mpbmaze_noise_" << noise;
  cfg.name = name.str();
  cfg.sender_room = {5, 3};
  cfg.receiver_room = {3, 3};
  cfg.sender_start = {3, 1};
  cfg.receiver_start = {1, 1};
  cfg.booths = {
      {{0, 2}, 0.4, 0.0, true, "costly"},
      {{0, 0}, 0.0, 0.0, true, "perfect"},
      {{2, 1}, 0.0, noise, true, "noisy"},
  };
  cfg.n_decoys = 0;
  cfg.receiver_booth = {1, 1};
  cfg.exit_up = {0, 1};
  cfg.exit_down = {2, 1};
  validate(cfg);
  return cfg;
}

}  // namespace cheaptalk
