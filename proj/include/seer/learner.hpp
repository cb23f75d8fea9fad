#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "seer/q_table.hpp"
#include "seer/replay_graph.hpp"

namespace seer {

// KL(p || q) over a shared support. q must be strictly positive wherever p is.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("kl_divergence: distributions have different supports");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (!(q[i] > 0.0)) throw ContractError("kl_divergence: q is zero where p is positive");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

struct LearnerParams {
  double eta = 6.0;          // regularizer weight
  double gamma = 0.99;
  double lr = 0.5;
  int batch_size = 32;
  double temperature = 1.0;  // softmax temperature of both policies
};

struct LossParts {
  double td = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

// Softmax over the support of s of q(s, .) / temperature, in support order.
inline std::vector<double> support_softmax(const QTable& q, StateId s, std::span<const ActionId> support,
                                           double temperature) {
  double top = -std::numeric_limits<double>::infinity();
  for (ActionId a : support) top = std::max(top, q(s, a));
  std::vector<double> p;
  double z = 0.0;
  for (ActionId a : support) {
    p.push_back(std::exp((q(s, a) - top) / temperature));
    z += p.back();
  }
  for (double& v : p) v /= z;
  return p;
}

// Regularized TD loss over a batch of graph transitions.
//
// td  = mean (q(s,a) - y)^2 with y = r + gamma * max_a' target(s', a') over
//       every action (0 past a terminal successor);
// reg = mean KL(pi(s) || pi_hat(s)), both softmaxes restricted to the
//       support of s, pi from q and pi_hat from the graph's q_hat.
// The target table is treated as a constant. When `grad` is non-null it
// receives d(total)/d(q).
inline LossParts discrete_loss(const QTable& q, const QTable& target, std::span<const GraphSample> batch,
                               const ReplayGraph& graph, const LearnerParams& params, QTable* grad = nullptr) {
  if (batch.empty()) throw ContractError("discrete_loss: empty batch");
  if (grad) *grad = QTable(q.num_states(), q.num_actions());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossParts out;
  for (const auto& t : batch) {
    double future = 0.0;
    if (!t.done) {
      auto row = target.row(t.next_state);
      future = *std::max_element(row.begin(), row.end());
    }
    const double y = t.reward + params.gamma * future;
    const double err = q(t.state, t.action) - y;
    out.td += err * err * inv_n;
    if (grad) (*grad)(t.state, t.action) += 2.0 * err * inv_n;

    if (params.eta == 0.0) continue;
    const auto support = graph.support(t.state);
    if (support.empty()) continue;
    const auto pi = support_softmax(q, t.state, support, params.temperature);
    const auto pi_hat_ap = graph.boltzmann_policy(t.state, params.temperature);
    std::vector<double> pi_hat;
    for (const auto& ap : pi_hat_ap) pi_hat.push_back(ap.prob);
    const double kl = kl_divergence(pi, pi_hat);
    out.reg += kl * inv_n;
    if (!grad) continue;
    // d KL(softmax(z) || p_hat) / d z_j = pi_j (log pi_j - log p_hat_j - KL)
    for (std::size_t j = 0; j < support.size(); ++j) {
      const double g = pi[j] * (std::log(pi[j]) - std::log(pi_hat[j]) - kl) / params.temperature;
      (*grad)(t.state, support[j]) += params.eta * g * inv_n;
    }
  }
  out.total = out.td + params.eta * out.reg;
  return out;
}

// One gradient step on discrete_loss over a batch sampled from the graph.
inline LossParts learner_step(QTable& q, const ReplayGraph& graph, const LearnerParams& params, Rng& rng) {
  if (graph.empty()) throw ContractError("learner_step: graph is empty");
  std::vector<GraphSample> batch;
  batch.reserve(params.batch_size);
  for (int i = 0; i < params.batch_size; ++i) batch.push_back(graph.sample(rng));
  QTable grad;
  const LossParts loss = discrete_loss(q, q, batch, graph, params, &grad);
  if (params.lr != 0.0)
    for (std::size_t i = 0; i < q.values().size(); ++i) q.values()[i] -= params.lr * grad.values()[i];
  return loss;
}

inline ActionId greedy_action(const QTable& q, StateId s) {
  auto row = q.row(s);
  return static_cast<ActionId>(std::max_element(row.begin(), row.end()) - row.begin());
}

// Argmax per state, lowest action id on ties.
inline std::vector<ActionId> greedy_policy(const QTable& q) {
  std::vector<ActionId> pi(q.num_states());
  for (StateId s = 0; s < q.num_states(); ++s) pi[s] = greedy_action(q, s);
  return pi;
}

// Argmax over the support of s (lowest id on ties); -1 when s has no support.
inline ActionId greedy_support_action(const QTable& q, const ReplayGraph& graph, StateId s) {
  ActionId best = -1;
  for (ActionId a : graph.support(s))
    if (best < 0 || q(s, a) > q(s, best)) best = a;
  return best;
}

inline ActionId epsilon_greedy_action(const QTable& q, StateId s, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon", "must lie in [0, 1]");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < epsilon) return std::uniform_int_distribution<ActionId>(0, q.num_actions() - 1)(rng);
  return greedy_action(q, s);
}

// Linear decay from `start` to `end` over the first `fraction` of `total` steps.
inline double epsilon_schedule(long step, long total, double start = 1.0, double end = 0.05, double fraction = 0.2) {
  const double horizon = std::max(1.0, fraction * static_cast<double>(total));
  const double t = std::min(1.0, static_cast<double>(step) / horizon);
  return start + (end - start) * t;
}

}  // namespace seer
