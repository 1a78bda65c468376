// Command-line front end: train | eval | heatmap | reproduce | presets.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cheaptalk/cheaptalk.hpp"

namespace fs = std::filesystem;
using namespace cheaptalk;

namespace {

struct CommonFlags {
  std::optional<int> episodes, eval_every, discovery_episodes, train_every;
  std::optional<double> beta, kappa, sigma;
  std::optional<std::string> out;

  void add(CLI::App* app) {
    app->add_option("--episodes", episodes, "Total training episodes");
    app->add_option("--eval-every", eval_every, "Episodes between greedy evaluations");
    app->add_option("--discovery-episodes", discovery_episodes,
                    "Episode at which two-stage algorithms switch to utilization");
    app->add_option("--train-every", train_every, "Environment steps per gradient step");
    app->add_option("--beta", beta, "MI reward weight");
    app->add_option("--kappa", kappa, "MI loss weight");
    app->add_option("--sigma", sigma, "DRU noise std");
    app->add_option("--out", out, "Output directory (default: $CHEAPTALK_OUT or runs/)");
  }
};

int cmd_train(const std::string& preset, const std::string& algo, unsigned long long seed,
              const std::optional<std::string>& config_path, const CommonFlags& f,
              bool checkpoints) {
  harness::JobSpec job;
  job.maze = harness::resolve_preset(preset);
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw ConfigError("cannot open trainer config '" + *config_path + "'");
    job.trainer = learn::trainer_config_from_json(nlohmann::json::parse(in));
  }
  job.trainer.algorithm = learn::parse_algorithm(algo);
  job.trainer.seed = seed;
  if (f.episodes) job.trainer.total_episodes = *f.episodes;
  if (f.eval_every) job.trainer.eval_every = *f.eval_every;
  if (f.discovery_episodes) job.trainer.num_discovery_episodes = *f.discovery_episodes;
  if (f.train_every) job.trainer.train_every = *f.train_every;
  if (f.beta) job.trainer.beta = *f.beta;
  if (f.kappa) job.trainer.kappa = *f.kappa;
  if (f.sigma) job.trainer.sigma = *f.sigma;
  job.trainer.validate();
  job.write_checkpoints = checkpoints;
  job.out_dir = f.out ? fs::path(*f.out)
                      : harness::output_root() / job.maze.name / algo /
                            ("seed_" + std::to_string(seed));
  auto res = harness::run_job(job);
  const auto& last = res.rows.back();
  std::cout << "wrote " << (job.out_dir / "metrics.csv").string() << "\n"
            << "final episode " << last.episode << ": test_reward " << last.test_reward
            << ", steps_to_first_booth " << last.steps_to_first_booth << "\n";
  return 0;
}

int cmd_eval(const std::string& preset, const std::string& checkpoint_dir, int episodes,
             bool dial, double temperature, unsigned long long seed) {
  Maze maze(harness::resolve_preset(preset));
  fs::path dir(checkpoint_dir);
  auto sender = nn::load_checkpoint((dir / "sender.json").string());
  auto receiver = nn::load_checkpoint((dir / "receiver.json").string());
  for (Role r : kRoles) {
    const auto& net = r == Role::kSender ? sender : receiver;
    if (net.config().input_size != maze.observation_size(r))
      throw ConfigError("checkpoint does not match the layout's observation size");
  }
  learn::EvalOptions opt;
  opt.episodes_per_goal = episodes;
  opt.dial_messages = dial;
  opt.temperature = temperature;
  Rng rng(seed);
  auto res = learn::evaluate_greedy(maze, sender, receiver, opt, rng);
  nlohmann::json j;
  j["test_reward"] = res.test_reward;
  j["steps_to_first_booth"] = res.steps_to_first_booth;
  for (std::size_t i = 0; i < res.booth_labels.size(); ++i)
    j["booth_visits"][res.booth_labels[i]] = res.booth_visits[i];
  j["policy_at_booth"]["up"] = res.policy_at_booth[0];
  j["policy_at_booth"]["down"] = res.policy_at_booth[1];
  j["nu_hat"] = res.nu_hat;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_heatmap(const std::string& preset, const std::optional<std::string>& out) {
  Maze maze(harness::resolve_preset(preset));
  auto grid = mi::heatmap(maze);
  if (out) {
    std::ofstream f(*out);
    if (!f) throw ConfigError("cannot write '" + *out + "'");
    mi::write_heatmap_csv(grid, f);
  } else {
    mi::write_heatmap_csv(grid, std::cout);
  }
  return 0;
}

int cmd_reproduce(const std::string& name, std::optional<int> seeds, int jobs, bool checkpoints,
                  const CommonFlags& f) {
  harness::SuiteOptions opt;
  opt.seeds = seeds;
  opt.episodes = f.episodes;
  opt.discovery_episodes = f.discovery_episodes;
  opt.eval_every = f.eval_every;
  opt.train_every = f.train_every;
  opt.beta = f.beta;
  opt.kappa = f.kappa;
  opt.sigma = f.sigma;
  opt.jobs = jobs;
  opt.write_checkpoints = checkpoints;
  opt.out_root = harness::output_root(f.out);
  auto spec = harness::suite(name);
  auto res = harness::run_suite(spec, opt, [](const harness::JobResult& j) {
    const auto& last = j.rows.back();
    std::cout << j.spec.maze.name << " " << learn::algorithm_name(j.spec.trainer.algorithm)
              << " seed " << j.spec.trainer.seed << ": test_reward " << last.test_reward
              << ", steps_to_first_booth " << last.steps_to_first_booth << std::endl;
  });
  std::cout << "wrote " << (opt.out_root / name / "aggregate.csv").string() << "\n";
  return 0;
}

int cmd_presets(const std::string& dir) {
  fs::create_directories(dir);
  std::vector<MazeConfig> all{spbmaze(), mpbmaze(0.1), mpbmaze(0.3), mpbmaze(0.5)};
  for (const auto& m : all) {
    fs::path p = fs::path(dir) / (m.name + ".json");
    std::ofstream out(p);
    out << to_json(m).dump(2) << "\n";
    std::cout << "wrote " << p.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phone Booth Maze communication-learning lab"};
  app.require_subcommand(1);

  std::string preset = "spbmaze", algo = "CTDL", checkpoint, suite_name, preset_dir = "configs";
  unsigned long long seed = 0;
  std::optional<std::string> config_path, heatmap_out;
  std::optional<int> seeds;
  int jobs = 1, eval_episodes = 1;
  bool no_checkpoints = false, dial = false;
  double temperature = 0.1;
  CommonFlags train_flags, suite_flags;

  auto* train = app.add_subcommand("train", "Train one (layout, algorithm, seed) job");
  train->add_option("--preset", preset, "Built-in layout name or JSON path")->required();
  train->add_option("--algo", algo, "IQL|IQL_IR|OBL|CTDL|CTDUL|CTDUL_no_MI|CTDUL_no_DIAL|"
                                    "CTDUL_IQL_discovery");
  train->add_option("--seed", seed);
  train->add_option("--config", config_path, "Trainer config JSON (flags override it)");
  train->add_flag("--no-checkpoints", no_checkpoints);
  train_flags.add(train);

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of saved checkpoints");
  eval->add_option("--preset", preset)->required();
  eval->add_option("--checkpoint", checkpoint, "Directory with sender.json and receiver.json")
      ->required();
  eval->add_option("--episodes", eval_episodes, "Episodes per goal");
  eval->add_flag("--dial", dial, "Execute hints from the message head");
  eval->add_option("--temperature", temperature, "Temperature for policy_at_booth");
  eval->add_option("--seed", seed);

  auto* heat = app.add_subcommand("heatmap", "MI heatmap over sender cells as CSV");
  heat->add_option("--preset", preset)->required();
  heat->add_option("--out", heatmap_out, "CSV path (default: stdout)");

  auto* repro = app.add_subcommand("reproduce", "Run a preset experiment suite");
  repro->add_option("suite", suite_name, "fig2|fig3|fig4|fig4r|fig5")->required();
  repro->add_option("--seeds", seeds);
  repro->add_option("--jobs", jobs, "Worker threads");
  repro->add_flag("--no-checkpoints", no_checkpoints);
  suite_flags.add(repro);

  auto* presets = app.add_subcommand("presets", "Write the built-in layouts as JSON");
  presets->add_option("--dir", preset_dir);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(preset, algo, seed, config_path, train_flags, !no_checkpoints);
    if (*eval) return cmd_eval(preset, checkpoint, eval_episodes, dial, temperature, seed);
    if (*heat) return cmd_heatmap(preset, heatmap_out);
    if (*repro) return cmd_reproduce(suite_name, seeds, jobs, !no_checkpoints, suite_flags);
    if (*presets) return cmd_presets(preset_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
