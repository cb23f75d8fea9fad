#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "seer/mdp.hpp"
#include "seer/reward_model.hpp"

namespace seer {

// splitmix64 finalizer; stable across runs and platforms.
struct StateHash {
  std::size_t operator()(StateId s) const noexcept {
    std::uint64_t z = static_cast<std::uint64_t>(static_cast<std::int64_t>(s)) + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return static_cast<std::size_t>(z ^ (z >> 31));
  }
};

struct EdgeRecord {
  double reward = 0.0;
  std::int64_t count = 0;
  bool done = false;
  bool operator==(const EdgeRecord&) const = default;
};

// One executed action at a vertex: its conservative value and the counted
// successor edges.
struct ActionRecord {
  double q_hat = 0.0;
  std::int64_t total = 0;
  std::map<StateId, EdgeRecord> edges;
  bool operator==(const ActionRecord&) const = default;
};

struct VertexRecord {
  StateId state = 0;
  std::map<ActionId, ActionRecord> actions;  // keys form the support set
  bool operator==(const VertexRecord&) const = default;
};

struct LogEntry {
  int episode = 0;
  StateId state = 0;
  ActionId action = 0;
  StateId next_state = 0;
  bool operator==(const LogEntry&) const = default;
};

struct GraphSample {
  StateId state = 0;
  ActionId action = 0;
  StateId next_state = 0;
  double reward = 0.0;
  bool done = false;
};

struct ActionProb {
  ActionId action = 0;
  double prob = 0.0;
};

// Replay memory organised as a directed graph over states. Holds at most
// `capacity` transitions; eviction drops whole episodes, oldest first.
class ReplayGraph {
 public:
  using ReadHook = std::function<void(StateId, ActionId)>;

  explicit ReplayGraph(std::size_t capacity = 1'000'000) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("capacity", "must be positive");
  }

  std::size_t size() const { return log_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return log_.empty(); }
  const std::deque<LogEntry>& log() const { return log_; }
  const std::vector<StateId>& vertex_order() const { return order_; }

  const VertexRecord* find(StateId s) const {
    auto it = vertices_.find(s);
    return it == vertices_.end() ? nullptr : &it->second;
  }

  std::vector<ActionId> support(StateId s) const {
    std::vector<ActionId> out;
    if (const auto* v = find(s))
      for (const auto& [a, rec] : v->actions) out.push_back(a);
    return out;
  }
  bool in_support(StateId s, ActionId a) const {
    const auto* v = find(s);
    return v && v->actions.count(a) > 0;
  }

  void insert(const Transition& t, int episode_id) {
    if (!t.labeled()) throw ContractError("ReplayGraph::insert: transition carries no labeled reward");
    touch(t.next_state);
    auto& rec = touch(t.state).actions[t.action];
    auto [it, fresh] = rec.edges.try_emplace(t.next_state);
    EdgeRecord& edge = it->second;
    if (fresh) edge.count = 0;
    ++edge.count;
    ++rec.total;
    edge.reward = t.labeled_reward;
    edge.done = t.done;
    log_.push_back({episode_id, t.state, t.action, t.next_state});
    while (log_.size() > capacity_) {
      const int oldest = log_.front().episode;
      if (oldest == episode_id) {
        evict_front();
      } else {
        while (!log_.empty() && log_.front().episode == oldest) evict_front();
      }
    }
  }

  // Successor distribution p(s'|s,a) = N(s,a,s') / sum N(s,a,.).
  std::vector<Outcome> empirical_dynamics(StateId s, ActionId a) const {
    const auto& rec = action_record(s, a);
    std::vector<Outcome> out;
    for (const auto& [next, e] : rec.edges)
      out.push_back({next, static_cast<double>(e.count) / static_cast<double>(rec.total)});
    return out;
  }

  double q_hat(StateId s, ActionId a) const { return action_record(s, a).q_hat; }
  void set_q_hat(StateId s, ActionId a, double v) {
    auto it = vertices_.find(s);
    if (it == vertices_.end() || !it->second.actions.count(a))
      throw ContractError("ReplayGraph: action outside the support of the state");
    it->second.actions.at(a).q_hat = v;
  }

  // Max of q_hat over the support of s; 0 for vertices with no executed
  // actions (dangling successors).
  double max_q_hat(StateId s) const {
    const auto* v = find(s);
    if (!v || v->actions.empty()) return 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [a, rec] : v->actions) {
      if (read_hook_) read_hook_(s, a);
      best = std::max(best, rec.q_hat);
    }
    return best;
  }

  // In-support value-iteration backup of q_hat(s, a).
  double backup(StateId s, ActionId a, double gamma) const {
    const auto& rec = action_record(s, a);
    double value = 0.0;
    for (const auto& [next, e] : rec.edges) {
      const double p = static_cast<double>(e.count) / static_cast<double>(rec.total);
      value += p * (e.reward + (e.done ? 0.0 : gamma * max_q_hat(next)));
    }
    return value;
  }

  // Gauss-Seidel sweeps over `order`. Returns the largest absolute change
  // seen in the final pass.
  double sweep(std::span<const StateId> order, int passes, double gamma) {
    double change = 0.0;
    for (int p = 0; p < passes; ++p) {
      change = 0.0;
      for (StateId s : order) {
        auto it = vertices_.find(s);
        if (it == vertices_.end()) continue;
        for (auto& [a, rec] : it->second.actions) {
          const double updated = backup(s, a, gamma);
          change = std::max(change, std::abs(updated - rec.q_hat));
          rec.q_hat = updated;
        }
      }
    }
    return change;
  }

  double sweep_all(int passes, double gamma) { return sweep(order_, passes, gamma); }

  // States of the most recent episode, latest visit first, each once.
  std::vector<StateId> recent_episode_order() const {
    std::vector<StateId> out;
    if (log_.empty()) return out;
    std::unordered_set<StateId, StateHash> seen;
    const int episode = log_.back().episode;
    for (auto it = log_.rbegin(); it != log_.rend() && it->episode == episode; ++it)
      if (seen.insert(it->state).second) out.push_back(it->state);
    return out;
  }

  // Recent episode in reverse order followed by `extra` uniformly drawn vertices.
  std::vector<StateId> sweep_order(int extra, Rng& rng) const {
    auto out = recent_episode_order();
    if (!order_.empty())
      for (int i = 0; i < extra; ++i)
        out.push_back(order_[std::uniform_int_distribution<std::size_t>(0, order_.size() - 1)(rng)]);
    return out;
  }

  // Rewrites every edge reward. Returns the number of edges whose stored
  // value changed.
  std::size_t relabel_all(const std::function<double(StateId, ActionId)>& reward) {
    std::size_t changed = 0;
    for (StateId s : order_) {
      for (auto& [a, rec] : vertices_.at(s).actions) {
        const double r = reward(s, a);
        for (auto& [next, e] : rec.edges) {
          if (e.reward != r) ++changed;
          e.reward = r;
        }
      }
    }
    return changed;
  }
  std::size_t relabel_all(const RewardEnsemble& ens) {
    return relabel_all([&ens](StateId s, ActionId a) { return ens.reward(s, a); });
  }

  // Softmax of q_hat(s, .) over the support of s.
  std::vector<ActionProb> boltzmann_policy(StateId s, double temperature = 1.0) const {
    const auto* v = find(s);
    if (!v || v->actions.empty()) throw ContractError("boltzmann_policy: state has no support");
    if (!(temperature > 0.0)) throw ConfigError("temperature", "must be positive");
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& [a, rec] : v->actions) top = std::max(top, rec.q_hat);
    std::vector<ActionProb> out;
    double z = 0.0;
    for (const auto& [a, rec] : v->actions) {
      const double w = std::exp((rec.q_hat - top) / temperature);
      out.push_back({a, w});
      z += w;
    }
    for (auto& ap : out) ap.prob /= z;
    return out;
  }

  // Uniform over stored transitions, i.e. edges weighted by their counts.
  GraphSample sample(Rng& rng) const {
    if (log_.empty()) throw ContractError("ReplayGraph::sample: graph is empty");
    const auto& e = log_[std::uniform_int_distribution<std::size_t>(0, log_.size() - 1)(rng)];
    const auto& edge = action_record(e.state, e.action).edges.at(e.next_state);
    return {e.state, e.action, e.next_state, edge.reward, edge.done};
  }

  void set_read_hook(ReadHook hook) { read_hook_ = std::move(hook); }

  // Rebuilds a graph from serialized parts (vertices in insertion order).
  static ReplayGraph restore(std::size_t capacity, std::vector<VertexRecord> vertices, std::deque<LogEntry> log) {
    ReplayGraph g(capacity);
    for (auto& v : vertices) {
      g.order_.push_back(v.state);
      g.vertices_.emplace(v.state, std::move(v));
    }
    g.log_ = std::move(log);
    return g;
  }

  bool operator==(const ReplayGraph& o) const {
    return capacity_ == o.capacity_ && order_ == o.order_ && log_ == o.log_ && vertices_ == o.vertices_;
  }

 private:
  VertexRecord& touch(StateId s) {
    auto [it, fresh] = vertices_.try_emplace(s);
    if (fresh) {
      it->second.state = s;
      order_.push_back(s);
    }
    return it->second;
  }

  const ActionRecord& action_record(StateId s, ActionId a) const {
    const auto* v = find(s);
    if (!v) throw ContractError("ReplayGraph: state not in graph");
    auto it = v->actions.find(a);
    if (it == v->actions.end()) throw ContractError("ReplayGraph: action outside the support of the state");
    return it->second;
  }

  void evict_front() {
    const LogEntry e = log_.front();
    log_.pop_front();
    auto& actions = vertices_.at(e.state).actions;
    auto& rec = actions.at(e.action);
    auto& edge = rec.edges.at(e.next_state);
    if (--edge.count == 0) rec.edges.erase(e.next_state);
    if (--rec.total == 0) actions.erase(e.action);
  }

  std::size_t capacity_;
  std::unordered_map<StateId, VertexRecord, StateHash> vertices_;
  std::vector<StateId> order_;
  std::deque<LogEntry> log_;
  ReadHook read_hook_;
};

}  // namespace seer
