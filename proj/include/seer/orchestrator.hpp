#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "seer/config.hpp"
#include "seer/envs.hpp"
#include "seer/learner.hpp"
#include "seer/mdp.hpp"
#include "seer/oracle.hpp"
#include "seer/q_table.hpp"
#include "seer/replay_graph.hpp"
#include "seer/reward_model.hpp"
#include "seer/teacher.hpp"

namespace seer {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "step,return_mean,return_std,success_rate,pref_acc,mean_q,mc_value,q_bias,feedback_used,td_loss,reg_loss,"
    "reward_loss";

struct MetricsRow {
  std::int64_t step = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  double success_rate = 0.0;
  double pref_acc = 0.0;
  double mean_q = 0.0;
  double mc_value = 0.0;
  double q_bias = 0.0;
  int feedback_used = 0;
  double td_loss = 0.0;
  double reg_loss = 0.0;
  double reward_loss = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string to_csv(const MetricsRow& r) {
  std::string out = std::to_string(r.step);
  for (double v : {r.return_mean, r.return_std, r.success_rate, r.pref_acc, r.mean_q, r.mc_value, r.q_bias}) {
    out += ',';
    out += format_double(v);
  }
  out += ',' + std::to_string(r.feedback_used);
  for (double v : {r.td_loss, r.reg_loss, r.reward_loss}) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation (true reward; never called from the learning path)
// ---------------------------------------------------------------------------

struct EvalResult {
  double return_mean = 0.0;
  double return_std = 0.0;
  double success_rate = 0.0;
  int episodes = 0;
};

inline EvalResult evaluate(const Mdp& mdp, const std::vector<ActionId>& policy, int episodes, std::uint64_t seed,
                           int max_steps) {
  if (episodes < 1) throw ContractError("evaluate: episodes must be >= 1");
  if (static_cast<int>(policy.size()) != mdp.num_states()) throw ContractError("evaluate: policy has wrong size");
  PrivilegedRewardScope privileged;
  const Policy pi = [&policy](StateId s, Rng&) { return policy[s]; };
  EvalResult out;
  out.episodes = episodes;
  std::vector<double> returns;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    const Trajectory traj = rollout(mdp, pi, seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(e + 1), max_steps);
    returns.push_back(traj.true_return);
    successes += traj.success ? 1 : 0;
  }
  out.return_mean = std::accumulate(returns.begin(), returns.end(), 0.0) / episodes;
  double var = 0.0;
  for (double r : returns) var += (r - out.return_mean) * (r - out.return_mean);
  out.return_std = std::sqrt(var / episodes);
  out.success_rate = static_cast<double>(successes) / episodes;
  return out;
}

// Uniform-random behavior rollouts, episode ids starting at `first_episode`.
inline std::vector<Trajectory> random_rollouts(const Task& task, int episodes, std::uint64_t seed, int first_episode = 0) {
  const int num_actions = task.mdp.num_actions();
  const Policy uniform = [num_actions](StateId, Rng& rng) {
    return std::uniform_int_distribution<ActionId>(0, num_actions - 1)(rng);
  };
  std::vector<Trajectory> out;
  for (int e = 0; e < episodes; ++e)
    out.push_back(rollout(task.mdp, uniform, seed * 1000003ULL + static_cast<std::uint64_t>(e), task.max_steps,
                          first_episode + e));
  return out;
}

using SegmentPair = std::pair<Segment, Segment>;

// Scripted, smoothed preferences over uniformly drawn distinct segment pairs.
inline std::vector<PreferenceRecord> scripted_preferences(const Mdp& mdp, std::span<const Segment> pool, int count,
                                                          double lambda, double tie_epsilon, Rng& rng,
                                                          std::int64_t timestamp = 0) {
  if (pool.size() < 2) throw ContractError("scripted_preferences: need at least two segments");
  ScriptedTeacher teacher{tie_epsilon};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<PreferenceRecord> out;
  for (int i = 0; i < count; ++i) {
    const std::size_t x = pick(rng);
    std::size_t y = pick(rng);
    while (y == x) y = pick(rng);
    PreferenceRecord rec;
    rec.segment_a = pool[x];
    rec.segment_b = pool[y];
    rec.raw_label = teacher.label(mdp, rec.segment_a, rec.segment_b);
    rec.label = smooth_label(rec.raw_label, lambda);
    rec.source = LabelSource::scripted;
    rec.timestamp = timestamp;
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unsupervised exploration
// ---------------------------------------------------------------------------

// Particle-style novelty bonus: log(1 + distance to the k-th nearest of the
// last `window` observed feature vectors).
class IntrinsicReward {
 public:
  IntrinsicReward(int k, int window, double max_bonus) : k_(k), window_(window), max_bonus_(max_bonus) {
    if (k < 1 || window < 1) throw ConfigError("intrinsic_k", "k and window must be positive");
  }

  double bonus(std::span<const double> f) const {
    if (recent_.empty()) return max_bonus_;
    std::vector<double> dist;
    dist.reserve(recent_.size());
    for (const auto& g : recent_) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) d2 += (f[i] - g[i]) * (f[i] - g[i]);
      dist.push_back(std::sqrt(d2));
    }
    const std::size_t k = std::min<std::size_t>(k_, dist.size());
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    return std::log1p(dist[k - 1]);
  }

  void observe(std::vector<double> f) {
    recent_.push_back(std::move(f));
    if (static_cast<int>(recent_.size()) > window_) recent_.pop_front();
  }

  // Bonus against the window before `f` joins it.
  double reward_and_observe(std::vector<double> f) {
    const double b = bonus(f);
    observe(std::move(f));
    return b;
  }

 private:
  int k_;
  int window_;
  double max_bonus_;
  std::deque<std::vector<double>> recent_;
};

struct PretrainResult {
  std::vector<Trajectory> trajectories;  // unlabeled
  QTable exploration_q;
  std::size_t distinct_states = 0;
};

// Q-learning against the intrinsic reward for `cfg.pretrain_steps` steps.
inline PretrainResult pretrain_unsupervised(const RunConfig& cfg, const Task& task, Rng& rng, int first_episode = 0) {
  const Mdp& mdp = task.mdp;
  PretrainResult out{{}, QTable(mdp.num_states(), mdp.num_actions())};
  QTable& q = out.exploration_q;
  // optimistic start: untried actions look at least as good as any bonus stream
  std::fill(q.values().begin(), q.values().end(), cfg.intrinsic_max_bonus / (1.0 - cfg.gamma));
  IntrinsicReward intrinsic(cfg.intrinsic_k, cfg.intrinsic_window, cfg.intrinsic_max_bonus);
  std::set<StateId> seen;
  int remaining = cfg.pretrain_steps;
  int episode = first_episode;
  while (remaining > 0) {
    Trajectory traj;
    traj.episode_id = episode++;
    StateId s = mdp.sample_initial(rng);
    seen.insert(s);
    intrinsic.observe(task.features(s));
    for (int t = 0; t < task.max_steps && remaining > 0 && !mdp.terminal(s); ++t, --remaining) {
      const ActionId a = epsilon_greedy_action(q, s, cfg.pretrain_epsilon, rng);
      const StateId next = mdp.sample_next(s, a, rng);
      const bool done = mdp.terminal(next);
      const double r = intrinsic.reward_and_observe(task.features(next));
      // novelty is not episodic: the bootstrap continues through terminal
      // states so the explorer has no reason to avoid them
      const StateId from = done ? mdp.sample_initial(rng) : next;
      const double future = *std::max_element(q.row(from).begin(), q.row(from).end());
      q(s, a) += 0.5 * (r + cfg.gamma * future - q(s, a));
      traj.steps.push_back({s, a, next, done, kUnlabeled});
      traj.success = traj.success || mdp.goal(next);
      seen.insert(next);
      s = next;
    }
    if (!traj.steps.empty()) out.trajectories.push_back(std::move(traj));
    else if (mdp.terminal(s)) break;
  }
  out.distinct_states = seen.size();
  return out;
}

// ---------------------------------------------------------------------------
// Query selection
// ---------------------------------------------------------------------------

// Most recent episodes; the segment pool for feedback sessions.
class TrajectoryStore {
 public:
  explicit TrajectoryStore(std::size_t max_episodes = 200) : max_episodes_(std::max<std::size_t>(1, max_episodes)) {}

  void add(Trajectory t) {
    if (t.steps.empty()) return;
    episodes_.push_back(std::move(t));
    if (episodes_.size() > max_episodes_) episodes_.pop_front();
  }
  const std::deque<Trajectory>& episodes() const { return episodes_; }

  // Padded segments are kept only for episodes that reached a terminal
  // state; a tail cut by the time limit is not a shorter behavior.
  std::vector<Segment> segments(int length, int stride) const {
    std::vector<Segment> out;
    for (const auto& t : episodes_)
      for (auto& s : extract_segments(t, length, stride))
        if (!s.truncated || (!t.steps.empty() && t.steps.back().done)) out.push_back(std::move(s));
    return out;
  }

 private:
  std::size_t max_episodes_;
  std::deque<Trajectory> episodes_;
};

// Draws `candidates` distinct random pairs from the pool (all pairs when the
// pool is small), ranks them by ensemble disagreement and keeps the top m.
// Ties keep the seeded draw order.
inline std::vector<SegmentPair> select_queries(std::span<const Segment> pool, const RewardEnsemble& ens, int m,
                                               int candidates, Rng& rng) {
  if (pool.size() < 2) throw ContractError("select_queries: need at least two segments");
  if (m < 1) return {};
  const std::size_t n = pool.size();
  const std::size_t all_pairs = n * (n - 1) / 2;
  std::vector<std::pair<std::size_t, std::size_t>> picked;
  if (all_pairs <= static_cast<std::size_t>(candidates)) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) picked.emplace_back(i, j);
    std::shuffle(picked.begin(), picked.end(), rng);
  } else {
    std::set<std::pair<std::size_t, std::size_t>> used;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (picked.size() < static_cast<std::size_t>(candidates)) {
      std::size_t i = pick(rng), j = pick(rng);
      if (i == j) continue;
      if (used.insert({std::min(i, j), std::max(i, j)}).second) picked.emplace_back(i, j);
    }
  }
  if (picked.size() < static_cast<std::size_t>(m))
    std::cerr << "warning: only " << picked.size() << " candidate pairs for " << m << " requested queries\n";
  std::vector<double> score;
  score.reserve(picked.size());
  for (const auto& [i, j] : picked) score.push_back(disagreement(ens, pool[i], pool[j]));
  std::vector<std::size_t> rank(picked.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t x, std::size_t y) { return score[x] > score[y]; });
  std::vector<SegmentPair> out;
  for (std::size_t r = 0; r < std::min<std::size_t>(m, rank.size()); ++r) {
    const auto& [i, j] = picked[rank[r]];
    out.emplace_back(pool[i], pool[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Label channels
// ---------------------------------------------------------------------------

class LabelChannel {
 public:
  virtual ~LabelChannel() = default;
  // Hands new pairs to the labeler and returns every record ready now.
  virtual std::vector<PreferenceRecord> exchange(std::vector<SegmentPair> pairs, std::int64_t step) = 0;
  // Queries handed out whose records have not been returned yet.
  virtual std::size_t outstanding() const = 0;
};

class ScriptedChannel : public LabelChannel {
 public:
  ScriptedChannel(const Mdp& mdp, double lambda, double tie_epsilon)
      : mdp_(mdp), lambda_(lambda), teacher_{tie_epsilon} {}

  std::vector<PreferenceRecord> exchange(std::vector<SegmentPair> pairs, std::int64_t step) override {
    std::vector<PreferenceRecord> out;
    for (auto& [a, b] : pairs) {
      PreferenceRecord rec;
      rec.raw_label = teacher_.label(mdp_, a, b);
      rec.label = smooth_label(rec.raw_label, lambda_);
      rec.segment_a = std::move(a);
      rec.segment_b = std::move(b);
      rec.source = LabelSource::scripted;
      rec.timestamp = step;
      out.push_back(std::move(rec));
    }
    return out;
  }
  std::size_t outstanding() const override { return 0; }

 private:
  const Mdp& mdp_;
  double lambda_;
  ScriptedTeacher teacher_;
};

// Queries go to a HumanQueryBook. Non-blocking by default: the loop takes
// whatever answers have arrived and keeps training.
class HumanChannel : public LabelChannel {
 public:
  HumanChannel(HumanQueryBook& book, bool block, const std::atomic<bool>* stop = nullptr)
      : book_(book), block_(block), stop_(stop) {}

  std::vector<PreferenceRecord> exchange(std::vector<SegmentPair> pairs, std::int64_t step) override {
    for (auto& [a, b] : pairs) book_.enqueue(std::move(a), std::move(b), step);
    if (block_)
      while (book_.pending() > 0 && !(stop_ && stop_->load())) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    return book_.drain();
  }
  std::size_t outstanding() const override { return book_.pending() + book_.ready(); }

 private:
  HumanQueryBook& book_;
  bool block_;
  const std::atomic<bool>* stop_;
};

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct RunHooks {
  LabelChannel* channel = nullptr;  // scripted teacher when null
  std::function<void(const MetricsRow&)> on_metrics;
  std::function<void(std::int64_t step, int feedback_used)> on_progress;
  const std::atomic<bool>* stop = nullptr;
  bool oracle_reward = false;  // label edges with the true reward, skip feedback entirely
};

struct RunResult {
  QTable q;
  RewardEnsemble ensemble;
  ReplayGraph graph;
  std::vector<MetricsRow> metrics;
  std::vector<PreferenceRecord> preferences;
  std::vector<ActionId> policy;
  EvalResult final_eval;
  int feedback_used = 0;
  int sessions = 0;
  std::int64_t steps = 0;
};

namespace detail {

inline LearnerParams learner_params(const RunConfig& cfg) {
  return {cfg.eta, cfg.gamma, cfg.learner_lr, cfg.learner_batch_size, cfg.temperature};
}

inline RewardTrainingOptions reward_options(const RunConfig& cfg, int epochs) {
  return {epochs, cfg.reward_batch_size, cfg.reward_lr, cfg.reward_bootstrap};
}

// Up to `count` non-terminal graph vertices, evenly spaced in insertion order.
inline std::vector<StateId> metric_states(const Mdp& mdp, const ReplayGraph& graph, int count) {
  std::vector<StateId> pool;
  for (StateId s : graph.vertex_order())
    if (!mdp.terminal(s)) pool.push_back(s);
  if (count <= 0 || pool.empty()) return {};
  if (static_cast<int>(pool.size()) <= count) return pool;
  std::vector<StateId> out;
  for (int i = 0; i < count; ++i) out.push_back(pool[static_cast<std::size_t>(i) * pool.size() / count]);
  return out;
}

// Spot-checks that stored edge rewards equal the current reward model.
inline void audit_relabel(const ReplayGraph& graph, const RewardEnsemble& ens, Rng& rng, int samples) {
  if (graph.empty()) return;
  for (int i = 0; i < samples; ++i) {
    const GraphSample t = graph.sample(rng);
    if (t.reward != ens.reward(t.state, t.action)) throw ContractError("relabel audit: stale edge reward");
  }
}

}  // namespace detail

// One metrics row from the current learner state. Reads the true reward, so
// it runs under a privileged scope.
inline MetricsRow measure(const RunConfig& cfg, const Task& task, const QTable& q, const RewardEnsemble& ens,
                          const ReplayGraph& graph, std::span<const PreferenceRecord> holdout, std::int64_t step) {
  PrivilegedRewardScope privileged;
  MetricsRow row;
  row.step = step;
  const auto policy = greedy_policy(q);
  const EvalResult ev = evaluate(task.mdp, policy, cfg.eval_episodes, cfg.seed ^ 0x6576616cULL, task.max_steps);
  row.return_mean = ev.return_mean;
  row.return_std = ev.return_std;
  row.success_rate = ev.success_rate;
  row.pref_acc = holdout.empty() ? 0.0 : preference_accuracy(ens, holdout);
  const auto states = detail::metric_states(task.mdp, graph, cfg.mc_states);
  if (!states.empty() && cfg.mc_episodes > 0) {
    double q_sum = 0.0, mc_sum = 0.0;
    const auto mc = mc_true_value(task.mdp, policy, states, cfg.mc_episodes, cfg.seed ^ 0x6d63ULL, cfg.mc_horizon);
    for (std::size_t i = 0; i < states.size(); ++i) {
      q_sum += *std::max_element(q.row(states[i]).begin(), q.row(states[i]).end());
      mc_sum += mc[i].mean;
    }
    row.mean_q = q_sum / states.size();
    row.mc_value = mc_sum / states.size();
    row.q_bias = row.mean_q - row.mc_value;
  }
  return row;
}

// Scripted holdout preferences for the pref_acc metric. Drawn from their own
// random rollouts; never used for training.
inline std::vector<PreferenceRecord> holdout_preferences(const RunConfig& cfg, const Task& task) {
  if (cfg.holdout_pairs <= 0) return {};
  const auto trajs = random_rollouts(task, std::max(10, cfg.holdout_pairs / 2), cfg.seed ^ 0x686f6c64ULL);
  std::vector<Segment> pool;
  for (const auto& t : trajs)
    if (!t.steps.empty())
      for (auto& s : extract_segments(t, cfg.segment_length, cfg.segment_stride)) pool.push_back(std::move(s));
  if (pool.size() < 2) return {};
  Rng rng = make_rng(cfg.seed, 0x686f6c64ULL);
  return scripted_preferences(task.mdp, pool, cfg.holdout_pairs, cfg.lambda, cfg.tie_epsilon, rng);
}

// Online preference-based training: explore, then act / query / relabel /
// sweep / learn every step.
inline RunResult run_online(const RunConfig& cfg, const Task& task, RunHooks hooks = {}) {
  cfg.validate();
  const Mdp& mdp = task.mdp;
  const int S = mdp.num_states();
  const int A = mdp.num_actions();

  Rng env_rng = make_rng(cfg.seed, 1);
  Rng act_rng = make_rng(cfg.seed, 2);
  Rng learn_rng = make_rng(cfg.seed, 3);
  Rng reward_rng = make_rng(cfg.seed, 4);
  Rng query_rng = make_rng(cfg.seed, 5);
  Rng sweep_rng = make_rng(cfg.seed, 6);
  Rng pretrain_rng = make_rng(cfg.seed, 7);
  Rng audit_rng = make_rng(cfg.seed, 8);

  const auto holdout = holdout_preferences(cfg, task);
  ScriptedChannel scripted(mdp, cfg.lambda, cfg.tie_epsilon);
  LabelChannel& channel = hooks.channel ? *hooks.channel : scripted;

  RunResult res{QTable(S, A), RewardEnsemble(S, A), ReplayGraph(static_cast<std::size_t>(cfg.capacity))};
  const LearnerParams lp = detail::learner_params(cfg);
  const RewardTrainingOptions ro = detail::reward_options(cfg, cfg.reward_epochs);
  double last_reward_loss = 0.0;

  auto label = [&](StateId s, ActionId a) {
    if (!hooks.oracle_reward) return res.ensemble.reward(s, a);
    PrivilegedRewardScope privileged;
    return mdp.true_reward(s, a);
  };

  TrainingScope training;
  TrajectoryStore store(static_cast<std::size_t>(cfg.query_pool_episodes));

  auto pre = pretrain_unsupervised(cfg, task, pretrain_rng);
  for (auto& traj : pre.trajectories) {
    for (auto tr : traj.steps) {
      tr.labeled_reward = label(tr.state, tr.action);
      res.graph.insert(tr, traj.episode_id);
    }
    store.add(std::move(traj));
  }
  int episode_id = static_cast<int>(pre.trajectories.size());
  if (!res.graph.empty()) res.graph.sweep_all(1, cfg.gamma);

  StateId s = mdp.sample_initial(env_rng);
  Trajectory current;
  current.episode_id = episode_id;
  double td_acc = 0.0, reg_acc = 0.0;
  int loss_count = 0;

  for (std::int64_t t = 1; t <= cfg.total_steps; ++t) {
    if (hooks.stop && hooks.stop->load()) break;
    const double eps = epsilon_schedule(t - 1, cfg.total_steps, cfg.epsilon_start, cfg.epsilon_end,
                                        cfg.epsilon_decay_fraction);
    const ActionId a = epsilon_greedy_action(res.q, s, eps, act_rng);
    const StateId next = mdp.sample_next(s, a, env_rng);
    Transition tr{s, a, next, mdp.terminal(next), kUnlabeled};
    current.steps.push_back(tr);
    current.success = current.success || mdp.goal(next);

    if (!hooks.oracle_reward && t % cfg.query_frequency == 0) {
      const long room = static_cast<long>(cfg.feedback_budget) - res.feedback_used -
                        static_cast<long>(channel.outstanding());
      const int session = static_cast<int>(std::clamp<long>(room, 0, cfg.labels_per_session));
      std::vector<SegmentPair> pairs;
      if (session > 0) {
        const auto pool = store.segments(cfg.segment_length, cfg.segment_stride);
        if (pool.size() >= 2)
          pairs = select_queries(pool, res.ensemble, session, cfg.candidate_multiplier * session, query_rng);
      }
      auto records = channel.exchange(std::move(pairs), t);
      if (!records.empty()) {
        res.feedback_used += static_cast<int>(records.size());
        ++res.sessions;
        for (auto& r : records) res.preferences.push_back(std::move(r));
        last_reward_loss = update_ensemble(res.ensemble, res.preferences, ro, reward_rng).mean_final_loss();
        res.graph.relabel_all(res.ensemble);
        detail::audit_relabel(res.graph, res.ensemble, audit_rng, 32);
      }
    }

    tr.labeled_reward = label(s, a);
    res.graph.insert(tr, episode_id);
    const auto order = res.graph.sweep_order(cfg.sweep_extra_vertices, sweep_rng);
    res.graph.sweep(order, cfg.sweep_passes, cfg.gamma);
    const LossParts loss = learner_step(res.q, res.graph, lp, learn_rng);
    td_acc += loss.td;
    reg_acc += loss.reg;
    ++loss_count;

    if (tr.done || static_cast<int>(current.steps.size()) >= task.max_steps) {
      store.add(std::move(current));
      current = Trajectory{};
      current.episode_id = ++episode_id;
      s = mdp.sample_initial(env_rng);
    } else {
      s = next;
    }

    if (t % cfg.metrics_every == 0 || t == cfg.total_steps) {
      MetricsRow row = measure(cfg, task, res.q, res.ensemble, res.graph, holdout, t);
      row.feedback_used = res.feedback_used;
      row.td_loss = loss_count ? td_acc / loss_count : 0.0;
      row.reg_loss = loss_count ? reg_acc / loss_count : 0.0;
      row.reward_loss = last_reward_loss;
      td_acc = reg_acc = 0.0;
      loss_count = 0;
      res.metrics.push_back(row);
      if (hooks.on_metrics) hooks.on_metrics(row);
    }
    if (hooks.on_progress) hooks.on_progress(t, res.feedback_used);
    res.steps = t;
  }

  res.policy = greedy_policy(res.q);
  res.final_eval = evaluate(mdp, res.policy, cfg.eval_episodes, cfg.seed ^ 0x66696e61ULL, task.max_steps);
  return res;
}

// Offline preference-based training on a fixed dataset.
inline RunResult run_offline(const RunConfig& cfg, const Task& task, std::span<const Trajectory> data,
                             std::span<const PreferenceRecord> prefs) {
  cfg.validate();
  if (prefs.empty()) throw ContractError("run_offline: preference dataset is empty");
  std::size_t total = 0;
  for (const auto& t : data) total += t.steps.size();
  if (total == 0) throw ContractError("run_offline: transition dataset is empty");

  const Mdp& mdp = task.mdp;
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  auto in_range = [&](const Segment& seg) {
    for (const auto& st : seg.steps)
      if (st.state < 0 || st.state >= S || st.action < 0 || st.action >= A) return false;
    return true;
  };
  std::vector<PreferenceRecord> usable;
  for (const auto& r : prefs)
    if (in_range(r.segment_a) && in_range(r.segment_b)) usable.push_back(r);
  if (usable.size() != prefs.size())
    std::cerr << "warning: dropped " << prefs.size() - usable.size()
              << " preference records with state/action ids outside the environment\n";
  if (usable.empty()) throw ContractError("run_offline: no usable preference records");

  Rng learn_rng = make_rng(cfg.seed, 3);
  Rng reward_rng = make_rng(cfg.seed, 4);
  Rng sweep_rng = make_rng(cfg.seed, 6);

  RunResult res{QTable(S, A), RewardEnsemble(S, A),
                ReplayGraph(std::max<std::size_t>(static_cast<std::size_t>(cfg.capacity), total))};
  const auto holdout = holdout_preferences(cfg, task);
  const LearnerParams lp = detail::learner_params(cfg);
  double reward_loss = 0.0;
  {
    TrainingScope training;
    res.preferences = usable;
    reward_loss = update_ensemble(res.ensemble, usable, detail::reward_options(cfg, cfg.offline_reward_epochs), reward_rng)
                      .mean_final_loss();
    res.feedback_used = static_cast<int>(usable.size());
    std::vector<const Trajectory*> episodes;
    for (const auto& traj : data) {
      if (traj.steps.empty()) continue;
      episodes.push_back(&traj);
      for (auto tr : traj.steps) {
        tr.labeled_reward = res.ensemble.reward(tr.state, tr.action);
        res.graph.insert(tr, traj.episode_id);
      }
    }

    double td_acc = 0.0, reg_acc = 0.0;
    int loss_count = 0;
    std::vector<StateId> order;
    for (std::int64_t it = 1; it <= cfg.offline_iterations; ++it) {
      // sweep one stored episode backwards, then one learner update
      const Trajectory& ep = *episodes[std::uniform_int_distribution<std::size_t>(0, episodes.size() - 1)(sweep_rng)];
      order.clear();
      for (auto r = ep.steps.rbegin(); r != ep.steps.rend(); ++r) order.push_back(r->state);
      res.graph.sweep(order, cfg.sweep_passes, cfg.gamma);
      const LossParts loss = learner_step(res.q, res.graph, lp, learn_rng);
      td_acc += loss.td;
      reg_acc += loss.reg;
      ++loss_count;
      if (it % cfg.metrics_every == 0 || it == cfg.offline_iterations) {
        MetricsRow row = measure(cfg, task, res.q, res.ensemble, res.graph, holdout, it);
        row.feedback_used = res.feedback_used;
        row.td_loss = td_acc / loss_count;
        row.reg_loss = reg_acc / loss_count;
        row.reward_loss = reward_loss;
        td_acc = reg_acc = 0.0;
        loss_count = 0;
        res.metrics.push_back(row);
      }
      res.steps = it;
    }
  }
  res.policy = greedy_policy(res.q);
  res.final_eval = evaluate(mdp, res.policy, cfg.eval_episodes, cfg.seed ^ 0x66696e61ULL, task.max_steps);
  return res;
}

// Offline inputs when no files are given: uniform-random behavior episodes and
// scripted preferences (feedback_budget of them) over their segments.
struct OfflineData {
  std::vector<Trajectory> transitions;
  std::vector<PreferenceRecord> preferences;
};

inline OfflineData generate_offline_data(const RunConfig& cfg, const Task& task) {
  OfflineData d;
  d.transitions = random_rollouts(task, cfg.offline_episodes, cfg.seed ^ 0x6f66666cULL);
  std::vector<Segment> pool;
  for (const auto& t : d.transitions)
    if (!t.steps.empty())
      for (auto& s : extract_segments(t, cfg.segment_length, cfg.segment_stride)) pool.push_back(std::move(s));
  if (pool.size() >= 2 && cfg.feedback_budget > 0) {
    Rng rng = make_rng(cfg.seed, 0x70726566ULL);
    d.preferences = scripted_preferences(task.mdp, pool, cfg.feedback_budget, cfg.lambda, cfg.tie_epsilon, rng);
  }
  return d;
}

// Mean undiscounted true return of the uniform-random behavior policy.
inline double behavior_return(const Task& task, int episodes, std::uint64_t seed) {
  double total = 0.0;
  for (const auto& t : random_rollouts(task, episodes, seed)) total += t.true_return;
  return total / episodes;
}

}  // namespace seer
