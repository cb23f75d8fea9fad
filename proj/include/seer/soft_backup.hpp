#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "seer/q_table.hpp"
#include "seer/replay_graph.hpp"

namespace seer {

// Log-mean-exp backup: beta * log(sum_i w_i * exp(v_i / beta)).
//
// Interpolates between the weighted mean (beta -> inf) and the max over
// positively weighted values (beta -> 0). Evaluated with a max shift so large
// values / small beta do not overflow.
inline double t_beta(std::span<const double> values, std::span<const double> weights, double beta) {
  if (!(beta > 0.0)) throw ConfigError("beta", "must be positive");
  if (values.empty() || values.size() != weights.size())
    throw ContractError("t_beta: values and weights must be non-empty and aligned");
  double top = -std::numeric_limits<double>::infinity();
  double wsum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] < 0.0) throw ContractError("t_beta: negative weight");
    wsum += weights[i];
    if (weights[i] > 0.0) top = std::max(top, values[i]);
  }
  if (!(wsum > 0.0)) throw ContractError("t_beta: weights sum to zero");
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (weights[i] > 0.0) acc += (weights[i] / wsum) * std::exp((values[i] - top) / beta);
  return top + beta * std::log(acc);
}

enum class SupportWeighting { frequency, uniform };

// Weights of the support actions at s: visitation frequency or uniform.
inline std::vector<ActionProb> support_weights(const ReplayGraph& graph, StateId s, SupportWeighting weighting) {
  std::vector<ActionProb> out;
  const auto* v = graph.find(s);
  if (!v) return out;
  double total = 0.0;
  for (const auto& [a, rec] : v->actions) {
    const double w = weighting == SupportWeighting::frequency ? static_cast<double>(rec.total) : 1.0;
    out.push_back({a, w});
    total += w;
  }
  for (auto& ap : out) ap.prob /= total;
  return out;
}

// Soft backup of q at s over its support.
inline double soft_state_value(const QTable& q, const ReplayGraph& graph, StateId s, double beta,
                               SupportWeighting weighting = SupportWeighting::frequency) {
  const auto weights = support_weights(graph, s, weighting);
  if (weights.empty()) throw ContractError("soft_state_value: state has no support");
  std::vector<double> vals, ws;
  for (const auto& ap : weights) {
    vals.push_back(q(s, ap.action));
    ws.push_back(ap.prob);
  }
  return t_beta(vals, ws, beta);
}

// Residual q(s,a) - r - gamma * T_beta q(s') of one transition. Empty when the
// successor is non-terminal but has no support (nothing to bootstrap from).
inline std::optional<double> soft_residual(const QTable& q, const GraphSample& t, const ReplayGraph& graph,
                                           double beta, double gamma,
                                           SupportWeighting weighting = SupportWeighting::frequency) {
  double future = 0.0;
  if (!t.done) {
    if (graph.support(t.next_state).empty()) return std::nullopt;
    future = soft_state_value(q, graph, t.next_state, beta, weighting);
  }
  return q(t.state, t.action) - t.reward - gamma * future;
}

// Normalized exponential of q(s, .) restricted to `support`.
inline std::vector<ActionProb> soft_policy_target(const QTable& q, StateId s, std::span<const ActionId> support,
                                                  double temperature = 1.0) {
  if (support.empty()) throw ContractError("soft_policy_target: empty support");
  double top = -std::numeric_limits<double>::infinity();
  for (ActionId a : support) top = std::max(top, q(s, a));
  std::vector<ActionProb> out;
  double z = 0.0;
  for (ActionId a : support) {
    const double w = std::exp((q(s, a) - top) / temperature);
    out.push_back({a, w});
    z += w;
  }
  for (auto& ap : out) ap.prob /= z;
  return out;
}

struct SoftFitStats {
  double loss = 0.0;          // mean squared residual, count-weighted, before the last step
  std::size_t skipped = 0;    // transitions without a bootstrap target (per iteration)
};

// Semi-gradient descent on the mean squared soft residual over all graph
// transitions. Each supported (s,a) moves by lr times its count-weighted mean
// residual; the bootstrap target is held fixed within an iteration.
inline SoftFitStats fit_soft_q(QTable& q, const ReplayGraph& graph, double beta, double gamma, double lr,
                               int iterations, SupportWeighting weighting = SupportWeighting::frequency) {
  SoftFitStats stats;
  struct Pending {
    StateId s;
    ActionId a;
    double step;
  };
  std::vector<Pending> updates;
  for (int it = 0; it < iterations; ++it) {
    updates.clear();
    double loss = 0.0;
    double weight = 0.0;
    stats.skipped = 0;
    for (StateId s : graph.vertex_order()) {
      const auto* v = graph.find(s);
      for (const auto& [a, rec] : v->actions) {
        double mean_res = 0.0;
        double used = 0.0;
        for (const auto& [next, e] : rec.edges) {
          auto res = soft_residual(q, {s, a, next, e.reward, e.done}, graph, beta, gamma, weighting);
          if (!res) {
            stats.skipped += static_cast<std::size_t>(e.count);
            continue;
          }
          const double n = static_cast<double>(e.count);
          mean_res += n * *res;
          loss += n * *res * *res;
          used += n;
        }
        weight += used;
        if (used > 0.0) updates.push_back({s, a, lr * mean_res / used});
      }
    }
    stats.loss = weight > 0.0 ? loss / weight : 0.0;
    for (const auto& u : updates) q(u.s, u.a) -= u.step;
  }
  return stats;
}

}  // namespace seer
