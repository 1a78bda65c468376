#pragma once

// Metric rows and their CSV form.
//
// Per-job CSV columns, in order:
//   episode, seed, algorithm, stage, test_reward, steps_to_first_booth,
//   visits_<label> for every functional booth then visits_decoy,
//   policy_up_<ACTION> x7, policy_down_<ACTION> x7, nu_hat,
//   epsilon, env_steps, train_steps, sampler_fallbacks
// Numbers are printed with %.17g so reruns are byte-identical.

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cheaptalk/errors.hpp"
#include "cheaptalk/learn/trainer.hpp"

namespace cheaptalk::harness {

struct MetricRow {
  int episode = 0;
  unsigned long long seed = 0;
  std::string algorithm;
  std::string stage;
  double test_reward = 0.0;
  double steps_to_first_booth = 0.0;
  std::vector<std::string> booth_labels;
  std::vector<double> booth_visits;
  std::array<mi::ActionDist, 2> policy_at_booth{};
  double nu_hat = 0.0;
  double epsilon = 0.0;
  long env_steps = 0;
  long train_steps = 0;
  long sampler_fallbacks = 0;
};

inline MetricRow make_row(const learn::EvalPoint& p, const learn::TrainerConfig& cfg) {
  MetricRow r;
  r.episode = p.episode;
  r.seed = cfg.seed;
  r.algorithm = std::string(learn::algorithm_name(cfg.algorithm));
  r.stage = std::string(learn::stage_name(p.stage));
  r.test_reward = p.result.test_reward;
  r.steps_to_first_booth = p.result.steps_to_first_booth;
  r.booth_labels = p.result.booth_labels;
  r.booth_visits = p.result.booth_visits;
  r.policy_at_booth = p.result.policy_at_booth;
  r.nu_hat = p.result.nu_hat;
  r.epsilon = p.epsilon;
  r.env_steps = p.stats.env_steps;
  r.train_steps = p.stats.train_steps;
  r.sampler_fallbacks = p.stats.sampler_fallbacks;
  return r;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> numeric_columns(const std::vector<std::string>& booth_labels) {
  std::vector<std::string> cols{"test_reward", "steps_to_first_booth"};
  for (const auto& l : booth_labels) cols.push_back("visits_" + l);
  for (const char* g : {"up", "down"})
    for (Action a : kAllActions)
      cols.push_back(std::string("policy_") + g + "_" + std::string(action_name(a)));
  cols.push_back("nu_hat");
  return cols;
}

inline std::vector<double> numeric_values(const MetricRow& r) {
  std::vector<double> v{r.test_reward, r.steps_to_first_booth};
  v.insert(v.end(), r.booth_visits.begin(), r.booth_visits.end());
  for (const auto& dist : r.policy_at_booth) v.insert(v.end(), dist.begin(), dist.end());
  v.push_back(r.nu_hat);
  return v;
}

inline std::string csv_header(const std::vector<std::string>& booth_labels) {
  std::string h = "episode,seed,algorithm,stage";
  for (const auto& c : numeric_columns(booth_labels)) h += "," + c;
  h += ",epsilon,env_steps,train_steps,sampler_fallbacks";
  return h;
}

inline std::string csv_line(const MetricRow& r) {
  std::ostringstream os;
  os << r.episode << "," << r.seed << "," << r.algorithm << "," << r.stage;
  for (double v : numeric_values(r)) os << "," << fmt(v);
  os << "," << fmt(r.epsilon) << "," << r.env_steps << "," << r.train_steps << ","
     << r.sampler_fallbacks;
  return os.str();
}

// Minimal CSV reader for files written by this module.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ConfigError("missing CSV column '" + name + "'");
  }
  double number(std::size_t row, const std::string& name) const {
    return std::stod(rows.at(row).at(column(name)));
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  return out;
}

inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) return t;
  t.header = split_csv_line(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  return t;
}

// Exponential moving average with the first value as the seed.
inline std::vector<double> ema(const std::vector<double>& xs, double factor) {
  if (factor < 0.0 || factor >= 1.0) throw UsageError("smoothing factor must be in [0, 1)");
  std::vector<double> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    out.push_back(i == 0 ? xs[0] : factor * out.back() + (1.0 - factor) * xs[i]);
  return out;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  int n = 0;
};

// Mean and standard error (sample standard deviation / sqrt(n)).
inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe m;
  m.n = static_cast<int>(xs.size());
  if (m.n == 0) return m;
  for (double x : xs) m.mean += x;
  m.mean /= m.n;
  if (m.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.se = std::sqrt(ss / (m.n - 1)) / std::sqrt(static_cast<double>(m.n));
  }
  return m;
}

}  // namespace cheaptalk::harness
