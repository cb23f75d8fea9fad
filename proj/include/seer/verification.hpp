#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "seer/config.hpp"
#include "seer/envs.hpp"
#include "seer/oracle.hpp"
#include "seer/replay_graph.hpp"

namespace seer {

// MDP whose transition rows are integer visit counts normalised, so a replay
// graph can hold exactly the same empirical dynamics.
struct CountedMdp {
  Mdp mdp;
  std::vector<std::vector<std::vector<int>>> counts;  // [s][a][s']
};

inline CountedMdp random_counted_mdp(int num_states, int num_actions, double gamma, Rng& rng, int max_count = 4) {
  CountedMdp out{Mdp(num_states, num_actions, gamma), {}};
  std::uniform_int_distribution<int> count(0, max_count);
  std::uniform_int_distribution<StateId> any(0, num_states - 1);
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  out.counts.assign(num_states, std::vector<std::vector<int>>(num_actions, std::vector<int>(num_states, 0)));
  for (StateId s = 0; s < num_states; ++s) {
    for (ActionId a = 0; a < num_actions; ++a) {
      auto& row = out.counts[s][a];
      int total = 0;
      for (auto& c : row) total += (c = count(rng));
      if (total == 0) total = row[any(rng)] = 1;
      std::vector<Outcome> outs;
      for (StateId n = 0; n < num_states; ++n)
        if (row[n] > 0) outs.push_back({n, static_cast<double>(row[n]) / total});
      out.mdp.set_transition(s, a, std::move(outs));
      out.mdp.set_reward(s, a, reward(rng));
    }
  }
  return out;
}

// Inserts every supported (s, a, s') exactly counts[s][a][s'] times, labeled
// with the true reward.
inline ReplayGraph graph_from_counts(const CountedMdp& cm, const SupportSet& support) {
  PrivilegedRewardScope privileged;
  const Mdp& mdp = cm.mdp;
  ReplayGraph g;
  int episode = 0;
  for (StateId s = 0; s < mdp.num_states(); ++s)
    for (ActionId a : support.actions(s))
      for (StateId n = 0; n < mdp.num_states(); ++n)
        for (int k = 0; k < cm.counts[s][a][n]; ++k)
          g.insert({s, a, n, mdp.terminal(n), mdp.true_reward(s, a)}, episode++);
  return g;
}

struct ContractionReport {
  double gamma = 0.0;
  double bellman_ratio = 0.0;
  double conservative_ratio = 0.0;
};

struct TheoremReport {
  int instances = 0;
  int lower_bound_violations = 0;
  double max_gap_supported = -std::numeric_limits<double>::infinity();
  double max_gap_all = -std::numeric_limits<double>::infinity();
  int full_support_violations = 0;
  double max_full_support_abs_gap = 0.0;
  std::vector<ContractionReport> contraction;
  int contraction_violations = 0;
  double oracle_equivalence_error = 0.0;
  std::vector<double> sampled_distances;
  int sampled_failures = 0;
  double gap_tolerance = 0.0;
  double sampled_threshold = 0.0;

  bool passed() const {
    return lower_bound_violations == 0 && full_support_violations == 0 && contraction_violations == 0 &&
           oracle_equivalence_error <= 1e-6 && sampled_failures == 0;
  }

  nlohmann::json to_json() const {
    nlohmann::json c = nlohmann::json::array();
    for (const auto& r : contraction)
      c.push_back({{"gamma", r.gamma}, {"bellman_ratio", r.bellman_ratio}, {"conservative_ratio", r.conservative_ratio}});
    return {{"passed", passed()},
            {"instances", instances},
            {"gap_tolerance", gap_tolerance},
            {"lower_bound_violations", lower_bound_violations},
            {"max_gap_supported", max_gap_supported},
            {"max_gap_all", max_gap_all},
            {"full_support_violations", full_support_violations},
            {"max_full_support_abs_gap", max_full_support_abs_gap},
            {"contraction", c},
            {"contraction_violations", contraction_violations},
            {"oracle_equivalence_error", oracle_equivalence_error},
            {"sampled_threshold", sampled_threshold},
            {"sampled_distances", sampled_distances},
            {"sampled_failures", sampled_failures}};
  }
};

// Two-state chain used by the convergence checks: advance pays 1 on reaching
// the terminal state, back costs 0.1.
inline Mdp two_chain(double gamma = 0.9) { return make_chain(2, gamma, 0.1); }

inline TheoremReport run_theorem_suite(const VerifyConfig& cfg) {
  TheoremReport rep;
  rep.gap_tolerance = cfg.gap_tolerance;
  rep.sampled_threshold = cfg.sampled_threshold;
  Rng rng = make_rng(cfg.seed, 0x7468ULL);
  std::uniform_int_distribution<int> states(2, std::max(2, cfg.max_states));
  std::uniform_int_distribution<int> actions(1, std::max(1, cfg.max_actions));

  // lower bound on random supports, equality under full support
  for (int i = 0; i < cfg.instances; ++i) {
    const Mdp mdp = random_mdp(states(rng), actions(rng), cfg.gamma, rng);
    const SupportSet sup = random_support(mdp, rng);
    const auto lb = check_lower_bound(mdp, sup, cfg.tol);
    rep.max_gap_supported = std::max(rep.max_gap_supported, lb.max_gap_supported);
    rep.max_gap_all = std::max(rep.max_gap_all, lb.max_gap_all);
    if (lb.max_gap_supported > cfg.gap_tolerance || lb.max_gap_all > cfg.gap_tolerance) ++rep.lower_bound_violations;
    const auto full = check_lower_bound(mdp, SupportSet::full(mdp), cfg.tol);
    rep.max_full_support_abs_gap = std::max(rep.max_full_support_abs_gap, full.max_abs_gap_all);
    if (full.max_abs_gap_all > cfg.gap_tolerance) ++rep.full_support_violations;
    ++rep.instances;
  }

  // contraction, spread over ten random instances per discount
  for (double gamma : cfg.contraction_gammas) {
    ContractionReport c{gamma};
    const int per = std::max(1, cfg.contraction_trials / 10);
    for (int k = 0; k < 10; ++k) {
      const Mdp mdp = random_mdp(states(rng), actions(rng), gamma, rng);
      const SupportSet sup = random_support(mdp, rng);
      c.bellman_ratio = std::max(c.bellman_ratio, contraction_ratio(BackupOperator::bellman, mdp, sup, per, rng));
      c.conservative_ratio =
          std::max(c.conservative_ratio, contraction_ratio(BackupOperator::conservative, mdp, sup, per, rng));
    }
    if (c.bellman_ratio > gamma + 1e-9 || c.conservative_ratio > gamma + 1e-9) ++rep.contraction_violations;
    rep.contraction.push_back(c);
  }

  // graph sweeps on exact empirical dynamics against the oracle fixed point
  for (int k = 0; k < 10; ++k) {
    const CountedMdp cm = random_counted_mdp(states(rng), actions(rng), cfg.gamma, rng);
    const SupportSet sup = random_support(cm.mdp, rng);
    ReplayGraph g = graph_from_counts(cm, sup);
    for (int it = 0; it < 100000 && g.sweep_all(1, cfg.gamma) > 1e-13; ++it) {
    }
    const QTable star = conservative_optimal_q(cm.mdp, sup, cfg.tol);
    for (StateId s = 0; s < cm.mdp.num_states(); ++s)
      for (ActionId a : sup.actions(s))
        rep.oracle_equivalence_error = std::max(rep.oracle_equivalence_error, std::abs(g.q_hat(s, a) - star(s, a)));
  }

  // sampled asynchronous updates with 1/visits step sizes
  const Mdp chain = two_chain();
  const SupportSet full = SupportSet::full(chain);
  const QTable chain_star = conservative_optimal_q(chain, full, cfg.tol);
  for (int k = 0; k < cfg.sampled_seeds; ++k) {
    const auto res = sampled_conservative_convergence(chain, full, chain_star, cfg.sampled_steps,
                                                      cfg.seed * 7919ULL + static_cast<std::uint64_t>(k));
    rep.sampled_distances.push_back(res.distance);
    if (!(res.distance < cfg.sampled_threshold)) ++rep.sampled_failures;
  }
  return rep;
}

}  // namespace seer
