#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "seer/mdp.hpp"
#include "seer/q_table.hpp"

namespace seer {

// Actions the behavior policy executes with positive probability, per state.
struct SupportSet {
  std::vector<std::vector<bool>> allowed;

  static SupportSet full(const Mdp& mdp) {
    return {std::vector<std::vector<bool>>(mdp.num_states(), std::vector<bool>(mdp.num_actions(), true))};
  }
  bool supported(StateId s, ActionId a) const { return allowed[s][a]; }
  std::vector<ActionId> actions(StateId s) const {
    std::vector<ActionId> out;
    for (ActionId a = 0; a < static_cast<ActionId>(allowed[s].size()); ++a)
      if (allowed[s][a]) out.push_back(a);
    return out;
  }
  void validate(const Mdp& mdp) const {
    if (static_cast<int>(allowed.size()) != mdp.num_states()) throw ContractError("SupportSet: wrong state count");
    for (StateId s = 0; s < mdp.num_states(); ++s)
      if (!mdp.terminal(s) && actions(s).empty())
        throw ContractError("SupportSet: non-terminal state without a supported action");
  }
};

enum class BackupOperator { bellman, conservative };

namespace detail {

inline double successor_value(const Mdp& mdp, const QTable& q, StateId next, const SupportSet* support) {
  if (mdp.terminal(next)) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (ActionId a = 0; a < mdp.num_actions(); ++a)
    if (!support || support->supported(next, a)) best = std::max(best, q(next, a));
  return best;
}

}  // namespace detail

// One application of B (support == nullptr) or of the in-support operator.
inline QTable apply_operator(const Mdp& mdp, const QTable& q, const SupportSet* support) {
  PrivilegedRewardScope privileged;
  QTable out(mdp.num_states(), mdp.num_actions());
  std::vector<double> succ(mdp.num_states());
  for (StateId s = 0; s < mdp.num_states(); ++s) succ[s] = detail::successor_value(mdp, q, s, support);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (mdp.terminal(s)) continue;
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      double v = 0.0;
      const double r = mdp.true_reward(s, a);
      for (const auto& o : mdp.transitions(s, a)) v += o.prob * (r + mdp.gamma() * succ[o.next]);
      out(s, a) = v;
    }
  }
  return out;
}

namespace detail {

inline QTable iterate_to_fixed_point(const Mdp& mdp, const SupportSet* support, double tol) {
  if (!(tol > 0.0)) throw ContractError("value iteration: tol must be positive");
  const double gamma = mdp.gamma();
  const double stop = gamma == 0.0 ? tol : tol * (1.0 - gamma) / gamma;
  QTable q(mdp.num_states(), mdp.num_actions());
  for (int it = 0; it < 1'000'000; ++it) {
    QTable next = apply_operator(mdp, q, support);
    const double change = sup_norm_diff(next, q);
    q = std::move(next);
    if (change < stop) return q;
  }
  throw ContractError("value iteration did not converge");
}

}  // namespace detail

// Q* by full Bellman value iteration; ||Q - Q*||_inf < tol on return.
inline QTable bellman_optimal_q(const Mdp& mdp, double tol) {
  return detail::iterate_to_fixed_point(mdp, nullptr, tol);
}

// Fixed point of the operator whose successor max ranges only over
// supported actions. Defined on every (s, a).
inline QTable conservative_optimal_q(const Mdp& mdp, const SupportSet& support, double tol) {
  support.validate(mdp);
  return detail::iterate_to_fixed_point(mdp, &support, tol);
}

struct LowerBoundReport {
  double max_gap_supported = 0.0;  // max over supported (s,a) of Qhat* - Q*
  double max_gap_all = 0.0;        // same over every (s,a)
  double max_abs_gap_all = 0.0;
};

inline LowerBoundReport check_lower_bound(const Mdp& mdp, const SupportSet& support, double tol) {
  const QTable q_star = bellman_optimal_q(mdp, tol);
  const QTable q_hat = conservative_optimal_q(mdp, support, tol);
  LowerBoundReport rep;
  rep.max_gap_supported = -std::numeric_limits<double>::infinity();
  rep.max_gap_all = -std::numeric_limits<double>::infinity();
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      const double gap = q_hat(s, a) - q_star(s, a);
      rep.max_gap_all = std::max(rep.max_gap_all, gap);
      rep.max_abs_gap_all = std::max(rep.max_abs_gap_all, std::abs(gap));
      if (support.supported(s, a)) rep.max_gap_supported = std::max(rep.max_gap_supported, gap);
    }
  }
  return rep;
}

// Largest observed ||Op Q1 - Op Q2|| / ||Q1 - Q2|| over random table pairs
// with entries uniform in [-scale, scale].
inline double contraction_ratio(BackupOperator op, const Mdp& mdp, const SupportSet& support, int trials, Rng& rng,
                                double scale = 10.0) {
  if (trials < 1) throw ContractError("contraction_ratio: trials must be >= 1");
  std::uniform_real_distribution<double> u(-scale, scale);
  const SupportSet* sup = op == BackupOperator::conservative ? &support : nullptr;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    QTable q1(mdp.num_states(), mdp.num_actions()), q2(mdp.num_states(), mdp.num_actions());
    for (auto& v : q1.values()) v = u(rng);
    for (auto& v : q2.values()) v = u(rng);
    const double denom = sup_norm_diff(q1, q2);
    if (denom == 0.0) continue;
    worst = std::max(worst, sup_norm_diff(apply_operator(mdp, q1, sup), apply_operator(mdp, q2, sup)) / denom);
  }
  return worst;
}

// Random MDP: Dirichlet(1) next-state rows, rewards uniform in [-1, 1].
inline Mdp random_mdp(int num_states, int num_actions, double gamma, Rng& rng) {
  Mdp mdp(num_states, num_actions, gamma);
  std::gamma_distribution<double> g(1.0, 1.0);
  std::uniform_real_distribution<double> r(-1.0, 1.0);
  for (StateId s = 0; s < num_states; ++s) {
    for (ActionId a = 0; a < num_actions; ++a) {
      std::vector<double> w(num_states);
      double total = 0.0;
      for (auto& x : w) total += (x = g(rng));
      std::vector<Outcome> outs;
      double acc = 0.0;
      for (StateId n = 0; n < num_states; ++n) {
        // last entry absorbs rounding so the row sums to one
        const double p = n + 1 == num_states ? 1.0 - acc : w[n] / total;
        acc += p;
        outs.push_back({n, std::max(0.0, p)});
      }
      mdp.set_transition(s, a, std::move(outs));
      mdp.set_reward(s, a, r(rng));
    }
  }
  std::vector<double> init(num_states, 0.0);
  init[0] = 1.0;
  mdp.set_initial_distribution(std::move(init));
  return mdp;
}

// Each (s, a) supported with probability p; every non-terminal state keeps at
// least one supported action.
inline SupportSet random_support(const Mdp& mdp, Rng& rng, double p = 0.5) {
  SupportSet sup{std::vector<std::vector<bool>>(mdp.num_states(), std::vector<bool>(mdp.num_actions(), false))};
  std::bernoulli_distribution keep(p);
  std::uniform_int_distribution<ActionId> any(0, mdp.num_actions() - 1);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    bool some = false;
    for (ActionId a = 0; a < mdp.num_actions(); ++a) some |= (sup.allowed[s][a] = keep(rng));
    if (!some) sup.allowed[s][any(rng)] = true;
  }
  return sup;
}

enum class StepSize { inverse_visits, constant_one };

struct SampledConvergence {
  QTable q;
  double distance = 0.0;  // sup over supported pairs of |Q_t - Qhat*|
};

// Asynchronous sampled in-support Q-learning under a behavior policy that is
// uniform over each state's supported actions. Episodes restart from the
// initial distribution at terminal states or after `episode_limit` steps.
inline SampledConvergence sampled_conservative_convergence(const Mdp& mdp, const SupportSet& support,
                                                           const QTable& q_hat_star, long steps,
                                                           std::uint64_t seed,
                                                           StepSize step_size = StepSize::inverse_visits,
                                                           int episode_limit = 100) {
  PrivilegedRewardScope privileged;
  support.validate(mdp);
  Rng rng = make_rng(seed, 0x73616d70ULL);
  SampledConvergence out{QTable(mdp.num_states(), mdp.num_actions())};
  QTable& q = out.q;
  std::vector<long> visits(static_cast<std::size_t>(mdp.num_states()) * mdp.num_actions(), 0);
  StateId s = mdp.sample_initial(rng);
  int t_in_episode = 0;
  for (long t = 0; t < steps; ++t) {
    if (mdp.terminal(s) || t_in_episode >= episode_limit) {
      s = mdp.sample_initial(rng);
      t_in_episode = 0;
      if (mdp.terminal(s)) break;
    }
    const auto acts = support.actions(s);
    const ActionId a = acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)];
    const StateId next = mdp.sample_next(s, a, rng);
    const double alpha = step_size == StepSize::constant_one
                             ? 1.0
                             : 1.0 / static_cast<double>(++visits[static_cast<std::size_t>(s) * mdp.num_actions() + a]);
    const double target = mdp.true_reward(s, a) + mdp.gamma() * detail::successor_value(mdp, q, next, &support);
    q(s, a) += alpha * (target - q(s, a));
    s = next;
    ++t_in_episode;
  }
  for (StateId st = 0; st < mdp.num_states(); ++st) {
    if (mdp.terminal(st)) continue;
    for (ActionId a : support.actions(st)) out.distance = std::max(out.distance, std::abs(q(st, a) - q_hat_star(st, a)));
  }
  return out;
}

struct ValueEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo discounted true return of a deterministic policy from each
// listed start state, truncated after `horizon` steps.
inline std::vector<ValueEstimate> mc_true_value(const Mdp& mdp, const std::vector<ActionId>& policy,
                                                const std::vector<StateId>& states, int episodes,
                                                std::uint64_t seed, int horizon = 500) {
  if (episodes < 1) throw ContractError("mc_true_value: episodes must be >= 1");
  PrivilegedRewardScope privileged;
  Rng rng = make_rng(seed, 0x6d63ULL);
  std::vector<ValueEstimate> out;
  for (StateId start : states) {
    double sum = 0.0, sum_sq = 0.0;
    for (int e = 0; e < episodes; ++e) {
      StateId s = start;
      double ret = 0.0, discount = 1.0;
      for (int t = 0; t < horizon && !mdp.terminal(s); ++t) {
        const ActionId a = policy[s];
        ret += discount * mdp.true_reward(s, a);
        discount *= mdp.gamma();
        s = mdp.sample_next(s, a, rng);
      }
      sum += ret;
      sum_sq += ret * ret;
    }
    ValueEstimate v;
    v.mean = sum / episodes;
    if (episodes > 1) {
      const double var = std::max(0.0, (sum_sq - episodes * v.mean * v.mean) / (episodes - 1));
      v.std_error = std::sqrt(var / episodes);
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace seer
