#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cheaptalk/env/maze_config.hpp"
#include "cheaptalk/harness/metrics.hpp"
#include "cheaptalk/learn/config.hpp"
#include "cheaptalk/learn/trainer.hpp"

namespace cheaptalk::harness {

namespace fs = std::filesystem;

// Output root: $CHEAPTALK_OUT when set, else "runs".
inline fs::path output_root(const std::optional<std::string>& flag = std::nullopt) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("CHEAPTALK_OUT"); env && *env) return env;
  return "runs";
}

// Built-in preset names, or a path to a JSON layout.
inline MazeConfig resolve_preset(const std::string& name_or_path) {
  if (name_or_path == "spbmaze") return spbmaze();
  for (double noise : {0.1, 0.3, 0.5}) {
    MazeConfig m = mpbmaze(noise);
    if (name_or_path == m.name) return m;
  }
  if (!fs::exists(name_or_path))
    throw ConfigError("preset '" + name_or_path + "' is neither a built-in name nor a file");
  return load_maze_config(name_or_path);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct JobSpec {
  MazeConfig maze;
  learn::TrainerConfig trainer;
  fs::path out_dir;
  bool write_checkpoints = true;
};

inline nlohmann::json job_json(const JobSpec& job) {
  return {{"maze", to_json(job.maze)}, {"trainer", learn::to_json(job.trainer)}};
}

inline std::string config_hash(const JobSpec& job) { return hex64(fnv1a(job_json(job).dump())); }

struct JobResult {
  JobSpec spec;
  std::vector<MetricRow> rows;
  learn::TrainerStats stats;
  std::string hash;
};

// Trains one (layout, algorithm, seed) job; writes config.json, metrics.csv
// and checkpoints/ under out_dir.
inline JobResult run_job(const JobSpec& job) {
  fs::create_directories(job.out_dir);
  JobResult res;
  res.spec = job;
  res.hash = config_hash(job);
  {
    std::ofstream cfg(job.out_dir / "config.json");
    nlohmann::json j = job_json(job);
    j["config_hash"] = res.hash;
    cfg << j.dump(2) << "\n";
  }
  auto maze = std::make_shared<const Maze>(job.maze);
  learn::Trainer trainer(maze, job.trainer);
  std::ofstream csv(job.out_dir / "metrics.csv");
  if (!csv) throw ConfigError("cannot write " + (job.out_dir / "metrics.csv").string());
  csv << csv_header(learn::booth_labels(*maze)) << "\n";
  std::optional<fs::path> ckpt;
  if (job.write_checkpoints) ckpt = job.out_dir / "checkpoints";
  trainer.run(
      [&](const learn::EvalPoint& p) {
        res.rows.push_back(make_row(p, job.trainer));
        csv << csv_line(res.rows.back()) << "\n";
        csv.flush();
      },
      ckpt);
  res.stats = trainer.stats();
  return res;
}

// ------------------------------------------------------------------ suites

struct SuiteEntry {
  std::string preset;
  std::vector<learn::Algorithm> algorithms;
  int total_episodes = 12000;
  int discovery_episodes = 12000;
};

struct SuiteSpec {
  std::string name;
  std::vector<SuiteEntry> entries;
  int seeds = 4;
  int eval_every = 20;
  double smoothing = 0.99;
};

inline SuiteSpec suite(const std::string& name) {
  using A = learn::Algorithm;
  SuiteSpec s;
  s.name = name;
  if (name == "fig2") {
    s.entries = {{"spbmaze", {A::kCTDL, A::kIQL, A::kOBL}, 12000, 12000}};
  } else if (name == "fig3") {
    s.entries = {{"spbmaze", {A::kCTDL, A::kIQL_IR}, 12000, 12000}};
  } else if (name == "fig4") {
    s.entries = {{"spbmaze", {A::kCTDUL, A::kIQL, A::kOBL, A::kIQL_IR}, 80000, 12000}};
  } else if (name == "fig4r") {
    s.entries = {{"spbmaze",
                  {A::kCTDUL, A::kCTDUL_no_MI, A::kCTDUL_no_DIAL, A::kCTDUL_IQL_discovery},
                  80000, 12000}};
  } else if (name == "fig5") {
    for (const char* p : {"mpbmaze_noise_0.1", "mpbmaze_noise_0.3", "mpbmaze_noise_0.5"})
      s.entries.push_back({p, {A::kCTDL, A::kIQL_IR}, 12000, 12000});
  } else {
    throw ConfigError("unknown suite '" + name + "' (fig2|fig3|fig4|fig4r|fig5)");
  }
  return s;
}

// Overrides applied to every job of a suite.
struct SuiteOptions {
  std::optional<int> seeds;
  std::optional<int> episodes;            // total episodes per job
  std::optional<int> discovery_episodes;  // stage switch for two-stage algorithms
  std::optional<int> eval_every;
  std::optional<int> train_every;
  std::optional<double> beta, kappa, sigma;
  int jobs = 1;  // worker threads
  bool write_checkpoints = true;
  fs::path out_root = "runs";
};

struct SuiteResult {
  SuiteSpec spec;
  std::vector<JobResult> jobs;

  std::vector<const JobResult*> select(const std::string& preset, learn::Algorithm a) const {
    std::vector<const JobResult*> out;
    for (const auto& j : jobs)
      if (j.spec.maze.name == resolve_preset(preset).name && j.spec.trainer.algorithm == a)
        out.push_back(&j);
    return out;
  }
};

inline std::vector<JobSpec> plan_suite(const SuiteSpec& s, const SuiteOptions& opt) {
  std::vector<JobSpec> jobs;
  const int seeds = opt.seeds.value_or(s.seeds);
  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  for (const auto& e : s.entries) {
    MazeConfig maze = resolve_preset(e.preset);
    for (learn::Algorithm a : e.algorithms) {
      for (int seed = 0; seed < seeds; ++seed) {
        JobSpec j;
        j.maze = maze;
        j.trainer.algorithm = a;
        j.trainer.seed = static_cast<unsigned long long>(seed);
        j.trainer.total_episodes = opt.episodes.value_or(e.total_episodes);
        j.trainer.num_discovery_episodes = opt.discovery_episodes.value_or(
            std::min(e.discovery_episodes, j.trainer.total_episodes));
        j.trainer.eval_every = opt.eval_every.value_or(s.eval_every);
        if (opt.train_every) j.trainer.train_every = *opt.train_every;
        if (opt.beta) j.trainer.beta = *opt.beta;
        if (opt.kappa) j.trainer.kappa = *opt.kappa;
        if (opt.sigma) j.trainer.sigma = *opt.sigma;
        j.trainer.validate();
        j.write_checkpoints = opt.write_checkpoints;
        j.out_dir = opt.out_root / s.name / maze.name /
                    std::string(learn::algorithm_name(a)) / ("seed_" + std::to_string(seed));
        jobs.push_back(std::move(j));
      }
    }
  }
  return jobs;
}

// Mean +- SE across seeds at every eval episode, plus the EMA-smoothed
// test reward.
inline void write_aggregate(const SuiteResult& r, std::ostream& out) {
  std::vector<std::string> labels;
  bool header_done = false;
  std::map<std::pair<std::string, std::string>, std::vector<const JobResult*>> groups;
  for (const auto& j : r.jobs)
    groups[{j.spec.maze.name, std::string(learn::algorithm_name(j.spec.trainer.algorithm))}]
        .push_back(&j);
  for (const auto& [key, jobs] : groups) {
    if (jobs.empty() || jobs[0]->rows.empty()) continue;
    auto cols = numeric_columns(jobs[0]->rows[0].booth_labels);
    if (!header_done) {
      out << "preset,algorithm,episode,n_seeds";
      for (const auto& c : cols) out << "," << c << "_mean," << c << "_se";
      out << ",smoothed_test_reward_mean,smoothed_test_reward_se\n";
      header_done = true;
    } else if (cols.size() != numeric_columns(labels).size()) {
      // Layouts with different booth sets get their own header block.
      out << "preset,algorithm,episode,n_seeds";
      for (const auto& c : cols) out << "," << c << "_mean," << c << "_se";
      out << ",smoothed_test_reward_mean,smoothed_test_reward_se\n";
    }
    labels = jobs[0]->rows[0].booth_labels;
    std::vector<std::vector<double>> smoothed;
    for (const auto* j : jobs) {
      std::vector<double> rewards;
      for (const auto& row : j->rows) rewards.push_back(row.test_reward);
      smoothed.push_back(ema(rewards, r.spec.smoothing));
    }
    std::size_t n_points = jobs[0]->rows.size();
    for (const auto* j : jobs) n_points = std::min(n_points, j->rows.size());
    for (std::size_t k = 0; k < n_points; ++k) {
      out << key.first << "," << key.second << "," << jobs[0]->rows[k].episode << ","
          << jobs.size();
      for (std::size_t c = 0; c < cols.size(); ++c) {
        std::vector<double> xs;
        for (const auto* j : jobs) xs.push_back(numeric_values(j->rows[k])[c]);
        auto m = mean_se(xs);
        out << "," << fmt(m.mean) << "," << fmt(m.se);
      }
      std::vector<double> xs;
      for (const auto& s : smoothed) xs.push_back(s[k]);
      auto m = mean_se(xs);
      out << "," << fmt(m.mean) << "," << fmt(m.se) << "\n";
    }
  }
}

inline nlohmann::json manifest(const SuiteResult& r) {
  nlohmann::json jobs = nlohmann::json::array();
  for (const auto& j : r.jobs)
    jobs.push_back({{"preset", j.spec.maze.name},
                    {"algorithm", learn::algorithm_name(j.spec.trainer.algorithm)},
                    {"seed", j.spec.trainer.seed},
                    {"config_hash", j.hash},
                    {"out_dir", j.spec.out_dir.string()},
                    {"env_steps", j.stats.env_steps},
                    {"train_steps", j.stats.train_steps},
                    {"sampler_fallbacks", j.stats.sampler_fallbacks}});
  return {{"suite", r.spec.name}, {"smoothing", r.spec.smoothing}, {"jobs", jobs}};
}

// Runs every job (optionally on worker threads), then writes aggregate.csv
// and manifest.json under <out_root>/<suite>.
inline SuiteResult run_suite(const SuiteSpec& s, const SuiteOptions& opt,
                             const std::function<void(const JobResult&)>& on_job = {}) {
  auto plan = plan_suite(s, opt);
  SuiteResult res;
  res.spec = s;
  res.jobs.resize(plan.size());
  std::atomic<std::size_t> next{0};
  std::mutex report;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) {
      try {
        res.jobs[i] = run_job(plan[i]);
        if (on_job) {
          std::lock_guard lock(report);
          on_job(res.jobs[i]);
        }
      } catch (...) {
        std::lock_guard lock(report);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, opt.jobs);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  fs::path dir = opt.out_root / s.name;
  fs::create_directories(dir);
  std::ofstream agg(dir / "aggregate.csv");
  write_aggregate(res, agg);
  std::ofstream man(dir / "manifest.json");
  man << manifest(res).dump(2) << "\n";
  return res;
}

// Mean of a metric over the last `fraction` of a job's eval points.
inline double tail_mean(const JobResult& j, std::size_t column, double fraction) {
  if (j.rows.empty()) throw UsageError("job has no metric rows");
  std::size_t n = j.rows.size();
  std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(n * fraction)));
  double sum = 0.0;
  for (std::size_t i = n - k; i < n; ++i) sum += numeric_values(j.rows[i])[column];
  return sum / static_cast<double>(k);
}

inline double final_smoothed_reward(const JobResult& j, double factor) {
  std::vector<double> rewards;
  for (const auto& row : j.rows) rewards.push_back(row.test_reward);
  if (rewards.empty()) throw UsageError("job has no metric rows");
  return ema(rewards, factor).back();
}

}  // namespace cheaptalk::harness
