#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seer {

using StateId = int;
using ActionId = int;
using Rng = std::mt19937_64;

// Violated precondition or internal invariant. Not meant to be recovered from.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad user-provided configuration value.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Derive an independent generator stream from a base seed and a salt.
inline Rng make_rng(std::uint64_t seed, std::uint64_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return Rng(seq);
}

// ---------------------------------------------------------------------------
// True-reward access guard.
//
// The learning path of a preference-based agent must never observe the
// environment reward. Code on that path runs inside a TrainingScope; only the
// teacher and evaluation helpers open a PrivilegedRewardScope. Any read of
// Mdp::true_reward inside a training scope without a privileged scope is
// counted and raises ContractError.
// ---------------------------------------------------------------------------
namespace detail {
struct RewardAccessState {
  int training_depth = 0;
  int privileged_depth = 0;
  std::size_t violations = 0;
};
inline RewardAccessState& reward_access_state() {
  thread_local RewardAccessState state;
  return state;
}
}  // namespace detail

class TrainingScope {
 public:
  TrainingScope() { ++detail::reward_access_state().training_depth; }
  ~TrainingScope() { --detail::reward_access_state().training_depth; }
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;
};

class PrivilegedRewardScope {
 public:
  PrivilegedRewardScope() { ++detail::reward_access_state().privileged_depth; }
  ~PrivilegedRewardScope() { --detail::reward_access_state().privileged_depth; }
  PrivilegedRewardScope(const PrivilegedRewardScope&) = delete;
  PrivilegedRewardScope& operator=(const PrivilegedRewardScope&) = delete;
};

inline std::size_t reward_guard_violations() { return detail::reward_access_state().violations; }
inline void reset_reward_guard_violations() { detail::reward_access_state().violations = 0; }

struct Outcome {
  StateId next;
  double prob;
};

// Enumerable MDP with explicit sparse dynamics. Rewards are a function of
// (s, a) and live in [-1, 1].
class Mdp {
 public:
  Mdp() = default;
  Mdp(int num_states, int num_actions, double gamma)
      : num_states_(num_states),
        num_actions_(num_actions),
        gamma_(gamma),
        dynamics_(static_cast<std::size_t>(num_states) * num_actions),
        rewards_(static_cast<std::size_t>(num_states) * num_actions, 0.0),
        terminal_(num_states, false),
        goal_(num_states, false),
        initial_(num_states, 0.0) {
    if (num_states <= 0 || num_actions <= 0) throw ContractError("Mdp: sizes must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("Mdp: gamma must lie in [0, 1)");
    if (num_states > 0) initial_[0] = 1.0;
  }

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  double gamma() const { return gamma_; }
  void set_gamma(double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("Mdp: gamma must lie in [0, 1)");
    gamma_ = gamma;
  }

  void set_transition(StateId s, ActionId a, std::vector<Outcome> outcomes) {
    check(s, a);
    dynamics_[index(s, a)] = std::move(outcomes);
  }
  void set_reward(StateId s, ActionId a, double r) {
    check(s, a);
    rewards_[index(s, a)] = r;
  }
  // Terminal states are absorbing with zero reward under every action.
  void set_terminal(StateId s) {
    check(s, 0);
    terminal_[s] = true;
    for (ActionId a = 0; a < num_actions_; ++a) {
      dynamics_[index(s, a)] = {{s, 1.0}};
      rewards_[index(s, a)] = 0.0;
    }
  }
  // Goal states define episode success; they may or may not be terminal.
  void set_goal(StateId s, bool goal = true) {
    check(s, 0);
    goal_[s] = goal;
  }
  bool goal(StateId s) const {
    check(s, 0);
    return goal_[s];
  }
  void set_initial_distribution(std::vector<double> dist) {
    if (static_cast<int>(dist.size()) != num_states_)
      throw ContractError("Mdp: initial distribution has wrong size");
    initial_ = std::move(dist);
  }

  std::span<const Outcome> transitions(StateId s, ActionId a) const {
    check(s, a);
    return dynamics_[index(s, a)];
  }
  bool terminal(StateId s) const {
    check(s, 0);
    return terminal_[s];
  }
  const std::vector<double>& initial_distribution() const { return initial_; }

  double true_reward(StateId s, ActionId a) const {
    auto& guard = detail::reward_access_state();
    if (guard.training_depth > 0 && guard.privileged_depth == 0) {
      ++guard.violations;
      throw ContractError("true reward read on the training path");
    }
    check(s, a);
    return rewards_[index(s, a)];
  }

  StateId sample_initial(Rng& rng) const { return sample_from(initial_, rng); }

  StateId sample_next(StateId s, ActionId a, Rng& rng) const {
    auto outs = transitions(s, a);
    if (outs.size() == 1) return outs.front().next;
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (const auto& o : outs) {
      acc += o.prob;
      if (u < acc) return o.next;
    }
    return outs.back().next;
  }

  // Throws ContractError describing the first broken invariant.
  void validate() const {
    for (StateId s = 0; s < num_states_; ++s) {
      for (ActionId a = 0; a < num_actions_; ++a) {
        const auto& outs = dynamics_[index(s, a)];
        if (outs.empty()) throw ContractError("Mdp: missing transition row");
        double total = 0.0;
        for (const auto& o : outs) {
          if (o.next < 0 || o.next >= num_states_ || o.prob < 0.0)
            throw ContractError("Mdp: malformed outcome");
          total += o.prob;
        }
        if (std::abs(total - 1.0) > 1e-12) throw ContractError("Mdp: transition row does not sum to 1");
        double r = rewards_[index(s, a)];
        if (!(r >= -1.0 && r <= 1.0)) throw ContractError("Mdp: reward outside [-1, 1]");
        if (terminal_[s] && (r != 0.0 || outs.size() != 1 || outs[0].next != s))
          throw ContractError("Mdp: terminal state is not absorbing with zero reward");
      }
    }
    double total = 0.0;
    for (double p : initial_) total += p;
    if (std::abs(total - 1.0) > 1e-12) throw ContractError("Mdp: initial distribution does not sum to 1");
  }

 private:
  std::size_t index(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * num_actions_ + a;
  }
  void check(StateId s, ActionId a) const {
    if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_)
      throw ContractError("Mdp: state/action id out of range");
  }
  static StateId sample_from(const std::vector<double>& dist, Rng& rng) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    StateId last = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] <= 0.0) continue;
      acc += dist[i];
      last = static_cast<StateId>(i);
      if (u < acc) return last;
    }
    return last;
  }

  int num_states_ = 0;
  int num_actions_ = 0;
  double gamma_ = 0.9;
  std::vector<std::vector<Outcome>> dynamics_;
  std::vector<double> rewards_;
  std::vector<bool> terminal_;
  std::vector<bool> goal_;
  std::vector<double> initial_;
};

inline constexpr double kUnlabeled = std::numeric_limits<double>::quiet_NaN();

struct Transition {
  StateId state = 0;
  ActionId action = 0;
  StateId next_state = 0;
  bool done = false;
  double labeled_reward = kUnlabeled;

  bool labeled() const { return !std::isnan(labeled_reward); }
  bool operator==(const Transition& o) const {
    return state == o.state && action == o.action && next_state == o.next_state && done == o.done &&
           (labeled_reward == o.labeled_reward || (!labeled() && !o.labeled()));
  }
};

struct Trajectory {
  int episode_id = 0;
  std::vector<Transition> steps;
  double true_return = 0.0;
  bool success = false;  // visited a goal state
};

using Policy = std::function<ActionId(StateId, Rng&)>;

// Rolls out `policy` from a sampled initial state until a terminal state or
// `max_steps`. The return is computed from the true reward, so it is an
// evaluation quantity; the learning path must not consume it.
inline Trajectory rollout(const Mdp& mdp, const Policy& policy, std::uint64_t rng_seed, int max_steps,
                          int episode_id = 0) {
  PrivilegedRewardScope privileged;
  Rng rng = make_rng(rng_seed, 0x726f6c6cULL);
  Trajectory traj;
  traj.episode_id = episode_id;
  StateId s = mdp.sample_initial(rng);
  traj.success = mdp.goal(s);
  for (int t = 0; t < max_steps && !mdp.terminal(s); ++t) {
    ActionId a = policy(s, rng);
    StateId next = mdp.sample_next(s, a, rng);
    traj.true_return += mdp.true_reward(s, a);
    traj.steps.push_back({s, a, next, mdp.terminal(next), kUnlabeled});
    traj.success = traj.success || mdp.goal(next);
    s = next;
  }
  return traj;
}

struct Step {
  StateId state = 0;
  ActionId action = 0;
  bool operator==(const Step&) const = default;
};

// Fixed-length window of (state, action) pairs. When the source trajectory
// ends before the window is full, the remainder repeats the final state with
// action 0 and the segment is flagged truncated; only the first
// `valid_length` steps carry reward.
struct Segment {
  std::vector<Step> steps;
  int episode_id = 0;
  int start_index = 0;
  int valid_length = 0;
  bool truncated = false;

  bool operator==(const Segment&) const = default;
};

inline std::vector<Segment> extract_segments(const Trajectory& traj, int length, int stride) {
  if (length < 1 || stride < 1) throw ContractError("extract_segments: length and stride must be >= 1");
  std::vector<Segment> out;
  const int n = static_cast<int>(traj.steps.size());
  for (int start = 0; start < n; start += stride) {
    Segment seg;
    seg.episode_id = traj.episode_id;
    seg.start_index = start;
    seg.steps.reserve(length);
    for (int i = start; i < std::min(n, start + length); ++i)
      seg.steps.push_back({traj.steps[i].state, traj.steps[i].action});
    seg.valid_length = static_cast<int>(seg.steps.size());
    if (seg.valid_length < length) {
      seg.truncated = true;
      StateId last = traj.steps.back().next_state;
      while (static_cast<int>(seg.steps.size()) < length) seg.steps.push_back({last, 0});
    }
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace seer
