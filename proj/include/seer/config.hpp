#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seer/envs.hpp"
#include "seer/mdp.hpp"

namespace seer {

// Everything one training run needs. Key names in config files match the
// field names below (env fields are flattened: env, row, width, ...).
struct RunConfig {
  std::string mode = "online";  // online | offline | serve
  EnvSpec env;

  int query_frequency = 2000;   // K: environment steps between feedback sessions
  int labels_per_session = 10;  // M
  int feedback_budget = 100;
  int segment_length = 50;
  int segment_stride = 25;
  int candidate_multiplier = 10;  // candidate pool = multiplier * M random pairs
  int query_pool_episodes = 200;  // most recent episodes segments are drawn from
  double tie_epsilon = 0.0;

  double lambda = 0.05;
  double eta = 6.0;
  double beta = 6.0;
  double gamma = 0.99;
  double temperature = 1.0;

  double reward_lr = 1e-2;
  int reward_epochs = 50;
  bool reward_bootstrap = true;  // each member trains on its own resample of the labels
  int reward_batch_size = 16;

  double learner_lr = 0.5;
  int learner_batch_size = 32;

  std::uint64_t seed = 1;
  int pretrain_steps = 1000;
  int total_steps = 10000;
  int capacity = 1000000;

  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.2;
  double pretrain_epsilon = 0.2;

  int sweep_extra_vertices = 8;
  int sweep_passes = 1;

  int intrinsic_k = 5;
  int intrinsic_window = 1024;
  double intrinsic_max_bonus = 2.0;

  int metrics_every = 1000;
  int eval_episodes = 10;
  int mc_states = 64;
  int mc_episodes = 4;
  int mc_horizon = 300;
  int holdout_pairs = 50;

  int offline_episodes = 50;
  int offline_iterations = 5000;
  int offline_reward_epochs = 200;
  std::string offline_transitions;  // JSONL path; generated from a random policy when empty
  std::string offline_preferences;  // JSONL path; scripted labels when empty

  bool block_on_labels = false;

  void validate() const {
    if (mode != "online" && mode != "offline" && mode != "serve") throw ConfigError("mode", "unknown mode '" + mode + "'");
    auto positive = [](const char* key, long v) {
      if (v <= 0) throw ConfigError(key, "must be positive");
    };
    positive("query_frequency", query_frequency);
    positive("labels_per_session", labels_per_session);
    if (feedback_budget < 0) throw ConfigError("feedback_budget", "must be non-negative");
    positive("segment_length", segment_length);
    positive("segment_stride", segment_stride);
    positive("candidate_multiplier", candidate_multiplier);
    positive("capacity", capacity);
    positive("learner_batch_size", learner_batch_size);
    positive("reward_batch_size", reward_batch_size);
    positive("eval_episodes", eval_episodes);
    positive("metrics_every", metrics_every);
    if (total_steps < 0) throw ConfigError("total_steps", "must be non-negative");
    if (pretrain_steps < 0) throw ConfigError("pretrain_steps", "must be non-negative");
    if (!(lambda >= 0.0 && lambda < 0.5)) throw ConfigError("lambda", "must lie in [0, 0.5)");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma", "must lie in (0, 1)");
    if (!(beta > 0.0)) throw ConfigError("beta", "must be positive");
    if (eta < 0.0) throw ConfigError("eta", "must be non-negative");
    if (!(temperature > 0.0)) throw ConfigError("temperature", "must be positive");
    if (intrinsic_k < 1) throw ConfigError("intrinsic_k", "must be positive");
    if (intrinsic_window < 1) throw ConfigError("intrinsic_window", "must be positive");
  }
};

// Verification run settings for the verify-theorem subcommand.
struct VerifyConfig {
  std::uint64_t seed = 1;
  int instances = 200;
  int max_states = 10;
  int max_actions = 4;
  double gamma = 0.9;
  double tol = 1e-10;
  double gap_tolerance = 1e-8;
  int contraction_trials = 1000;
  std::vector<double> contraction_gammas{0.5, 0.9, 0.99};
  long sampled_steps = 50000;
  int sampled_seeds = 5;
  double sampled_threshold = 0.05;
};

namespace detail {

struct ConfigLine {
  std::string key;
  std::string value;
  int line = 0;
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// `key = value` lines; '#' starts a comment unless it is part of a `row`
// value, where it denotes a wall.
inline std::vector<ConfigLine> parse_lines(std::istream& in) {
  std::vector<ConfigLine> out;
  std::string raw;
  int n = 0;
  while (std::getline(in, raw)) {
    ++n;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n), "expected 'key = value'");
    ConfigLine cl{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n};
    if (cl.key != "row") {
      const auto hash = cl.value.find('#');
      if (hash != std::string::npos) cl.value = trim(cl.value.substr(0, hash));
    }
    if (cl.key.empty()) throw ConfigError("line " + std::to_string(n), "empty key");
    out.push_back(std::move(cl));
  }
  return out;
}

template <typename T>
T parse_number(const ConfigLine& cl) {
  T v{};
  const char* first = cl.value.data();
  const char* last = first + cl.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cl.value.empty())
    throw ConfigError(cl.key, "cannot parse '" + cl.value + "' as a number");
  return v;
}

inline bool parse_bool(const ConfigLine& cl) {
  if (cl.value == "true" || cl.value == "1") return true;
  if (cl.value == "false" || cl.value == "0") return false;
  throw ConfigError(cl.key, "expected true or false, got '" + cl.value + "'");
}

template <typename Cfg>
using Setters = std::map<std::string, std::function<void(Cfg&, const ConfigLine&)>>;

template <typename Cfg, typename T>
void bind_key(Setters<Cfg>& s, const std::string& key, T Cfg::*field) {
  s[key] = [field](Cfg& c, const ConfigLine& cl) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.*field = cl.value;
    } else if constexpr (std::is_same_v<T, bool>) {
      c.*field = parse_bool(cl);
    } else {
      c.*field = parse_number<T>(cl);
    }
  };
}

template <typename T>
void bind_env(Setters<RunConfig>& s, const std::string& key, T EnvSpec::*field) {
  s[key] = [field](RunConfig& c, const ConfigLine& cl) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.env.*field = cl.value;
    } else {
      c.env.*field = parse_number<T>(cl);
    }
  };
}

inline const Setters<RunConfig>& run_setters() {
  static const Setters<RunConfig> setters = [] {
    Setters<RunConfig> s;
    bind_key(s, "mode", &RunConfig::mode);
    bind_env(s, "env", &EnvSpec::kind);
    s["row"] = [](RunConfig& c, const ConfigLine& cl) { c.env.rows.push_back(cl.value); };
    bind_env(s, "width", &EnvSpec::width);
    bind_env(s, "height", &EnvSpec::height);
    bind_env(s, "chain_length", &EnvSpec::chain_length);
    bind_env(s, "slip", &EnvSpec::slip);
    bind_env(s, "step_cost", &EnvSpec::step_cost);
    bind_env(s, "back_cost", &EnvSpec::back_cost);
    bind_env(s, "max_steps", &EnvSpec::max_steps);
    bind_key(s, "query_frequency", &RunConfig::query_frequency);
    bind_key(s, "labels_per_session", &RunConfig::labels_per_session);
    bind_key(s, "feedback_budget", &RunConfig::feedback_budget);
    bind_key(s, "segment_length", &RunConfig::segment_length);
    bind_key(s, "segment_stride", &RunConfig::segment_stride);
    bind_key(s, "candidate_multiplier", &RunConfig::candidate_multiplier);
    bind_key(s, "query_pool_episodes", &RunConfig::query_pool_episodes);
    bind_key(s, "tie_epsilon", &RunConfig::tie_epsilon);
    bind_key(s, "lambda", &RunConfig::lambda);
    bind_key(s, "eta", &RunConfig::eta);
    bind_key(s, "beta", &RunConfig::beta);
    bind_key(s, "gamma", &RunConfig::gamma);
    bind_key(s, "temperature", &RunConfig::temperature);
    bind_key(s, "reward_lr", &RunConfig::reward_lr);
    bind_key(s, "reward_epochs", &RunConfig::reward_epochs);
    bind_key(s, "reward_bootstrap", &RunConfig::reward_bootstrap);
    bind_key(s, "reward_batch_size", &RunConfig::reward_batch_size);
    bind_key(s, "learner_lr", &RunConfig::learner_lr);
    bind_key(s, "learner_batch_size", &RunConfig::learner_batch_size);
    bind_key(s, "seed", &RunConfig::seed);
    bind_key(s, "pretrain_steps", &RunConfig::pretrain_steps);
    bind_key(s, "total_steps", &RunConfig::total_steps);
    bind_key(s, "capacity", &RunConfig::capacity);
    bind_key(s, "epsilon_start", &RunConfig::epsilon_start);
    bind_key(s, "epsilon_end", &RunConfig::epsilon_end);
    bind_key(s, "epsilon_decay_fraction", &RunConfig::epsilon_decay_fraction);
    bind_key(s, "pretrain_epsilon", &RunConfig::pretrain_epsilon);
    bind_key(s, "sweep_extra_vertices", &RunConfig::sweep_extra_vertices);
    bind_key(s, "sweep_passes", &RunConfig::sweep_passes);
    bind_key(s, "intrinsic_k", &RunConfig::intrinsic_k);
    bind_key(s, "intrinsic_window", &RunConfig::intrinsic_window);
    bind_key(s, "intrinsic_max_bonus", &RunConfig::intrinsic_max_bonus);
    bind_key(s, "metrics_every", &RunConfig::metrics_every);
    bind_key(s, "eval_episodes", &RunConfig::eval_episodes);
    bind_key(s, "mc_states", &RunConfig::mc_states);
    bind_key(s, "mc_episodes", &RunConfig::mc_episodes);
    bind_key(s, "mc_horizon", &RunConfig::mc_horizon);
    bind_key(s, "holdout_pairs", &RunConfig::holdout_pairs);
    bind_key(s, "offline_episodes", &RunConfig::offline_episodes);
    bind_key(s, "offline_iterations", &RunConfig::offline_iterations);
    bind_key(s, "offline_reward_epochs", &RunConfig::offline_reward_epochs);
    bind_key(s, "offline_transitions", &RunConfig::offline_transitions);
    bind_key(s, "offline_preferences", &RunConfig::offline_preferences);
    bind_key(s, "block_on_labels", &RunConfig::block_on_labels);
    return s;
  }();
  return setters;
}

inline const Setters<VerifyConfig>& verify_setters() {
  static const Setters<VerifyConfig> setters = [] {
    Setters<VerifyConfig> s;
    bind_key(s, "seed", &VerifyConfig::seed);
    bind_key(s, "instances", &VerifyConfig::instances);
    bind_key(s, "max_states", &VerifyConfig::max_states);
    bind_key(s, "max_actions", &VerifyConfig::max_actions);
    bind_key(s, "gamma", &VerifyConfig::gamma);
    bind_key(s, "tol", &VerifyConfig::tol);
    bind_key(s, "gap_tolerance", &VerifyConfig::gap_tolerance);
    bind_key(s, "contraction_trials", &VerifyConfig::contraction_trials);
    s["contraction_gammas"] = [](VerifyConfig& c, const ConfigLine& cl) {
      c.contraction_gammas.clear();
      std::stringstream ss(cl.value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        ConfigLine part{cl.key, trim(item), cl.line};
        c.contraction_gammas.push_back(parse_number<double>(part));
      }
      if (c.contraction_gammas.empty()) throw ConfigError(cl.key, "empty list");
    };
    bind_key(s, "sampled_steps", &VerifyConfig::sampled_steps);
    bind_key(s, "sampled_seeds", &VerifyConfig::sampled_seeds);
    bind_key(s, "sampled_threshold", &VerifyConfig::sampled_threshold);
    return s;
  }();
  return setters;
}

template <typename Cfg>
Cfg apply_lines(const std::vector<ConfigLine>& lines, const Setters<Cfg>& setters) {
  Cfg cfg;
  for (const auto& cl : lines) {
    auto it = setters.find(cl.key);
    if (it == setters.end()) throw ConfigError(cl.key, "unknown key (line " + std::to_string(cl.line) + ")");
    it->second(cfg, cl);
  }
  return cfg;
}

inline std::vector<ConfigLine> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  return parse_lines(in);
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg = detail::apply_lines(detail::parse_lines(in), detail::run_setters());
  cfg.validate();
  return cfg;
}
inline RunConfig parse_run_config(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}
inline RunConfig load_run_config(const std::string& path) {
  RunConfig cfg = detail::apply_lines(detail::read_config_file(path), detail::run_setters());
  cfg.validate();
  return cfg;
}

inline VerifyConfig parse_verify_config(const std::string& text) {
  std::istringstream in(text);
  return detail::apply_lines(detail::parse_lines(in), detail::verify_setters());
}
inline VerifyConfig load_verify_config(const std::string& path) {
  return detail::apply_lines(detail::read_config_file(path), detail::verify_setters());
}

inline Task make_task(const RunConfig& cfg) { return make_task(cfg.env, cfg.gamma); }

}  // namespace seer
