// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "seer/seer.hpp"

using namespace seer;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome out;
  try {
    out = check();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  if (!out.ok) ++failures;
  std::printf("%s %s: %s [%.1fs]\n", out.ok ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

VerifyConfig theorem_config() { return load_verify_config(SEER_FIXTURE_DIR "/thm.cfg"); }

// ---------------------------------------------------------------------------
// Conservative backup theory
// ---------------------------------------------------------------------------

Outcome lower_bound_suite() {
  const VerifyConfig cfg = theorem_config();
  const auto t0 = Clock::now();
  Rng rng = make_rng(cfg.seed, 0x7468ULL);
  int violations = 0, full_violations = 0;
  double worst = -1e300, worst_full = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int S = std::uniform_int_distribution<int>(2, 10)(rng);
    const int A = std::uniform_int_distribution<int>(1, 4)(rng);
    const Mdp m = random_mdp(S, A, cfg.gamma, rng);
    const auto lb = check_lower_bound(m, random_support(m, rng), cfg.tol);
    worst = std::max({worst, lb.max_gap_supported, lb.max_gap_all});
    if (lb.max_gap_all > 1e-8 || lb.max_gap_supported > 1e-8) ++violations;
    const auto full = check_lower_bound(m, SupportSet::full(m), cfg.tol);
    worst_full = std::max(worst_full, full.max_abs_gap_all);
    if (full.max_abs_gap_all > 1e-8) ++full_violations;
  }
  const double t = seconds_since(t0);
  return {violations == 0 && full_violations == 0 && t < 60.0,
          fmt("200 instances, max(Qhat*-Q*)=%.3g, full-support sup gap=%.3g, violations %d/%d, %.2fs < 60s", worst,
              worst_full, violations, full_violations, t)};
}

Outcome contraction_suite() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(theorem_config().seed, 0x6c31ULL);
  bool ok = true;
  std::string detail;
  for (double gamma : {0.5, 0.9, 0.99}) {
    double b = 0.0, c = 0.0;
    // 1000 pairs per discount, spread over ten instances
    for (int k = 0; k < 10; ++k) {
      const Mdp m = random_mdp(std::uniform_int_distribution<int>(2, 10)(rng),
                               std::uniform_int_distribution<int>(1, 4)(rng), gamma, rng);
      const SupportSet sup = random_support(m, rng);
      b = std::max(b, contraction_ratio(BackupOperator::bellman, m, sup, 100, rng));
      c = std::max(c, contraction_ratio(BackupOperator::conservative, m, sup, 100, rng));
    }
    ok = ok && b <= gamma + 1e-9 && c <= gamma + 1e-9;
    detail += fmt("gamma %.2f: B %.6f Bhat %.6f; ", gamma, b, c);
  }
  const double t = seconds_since(t0);
  return {ok && t < 30.0, detail + fmt("%.2fs < 30s", t)};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(theorem_config().seed, 0x6f65ULL);
  double err = 0.0;
  for (int k = 0; k < 20; ++k) {
    const CountedMdp cm = random_counted_mdp(std::uniform_int_distribution<int>(2, 10)(rng),
                                             std::uniform_int_distribution<int>(1, 4)(rng), 0.9, rng);
    const SupportSet sup = random_support(cm.mdp, rng);
    ReplayGraph g = graph_from_counts(cm, sup);
    for (int it = 0; it < 100000 && g.sweep_all(1, 0.9) > 1e-13; ++it) {
    }
    const QTable star = conservative_optimal_q(cm.mdp, sup, 1e-12);
    for (StateId s = 0; s < cm.mdp.num_states(); ++s)
      for (ActionId a : sup.actions(s)) err = std::max(err, std::abs(g.q_hat(s, a) - star(s, a)));
  }
  const double t = seconds_since(t0);
  return {err <= 1e-6 && t < 10.0, fmt("20 counted fixtures, sup-norm error %.3g <= 1e-6, %.2fs < 10s", err, t)};
}

Outcome sampled_convergence() {
  const Mdp chain = two_chain();
  const SupportSet full = SupportSet::full(chain);
  const QTable star = conservative_optimal_q(chain, full, 1e-12);
  int ok = 0;
  std::string detail = "distances";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double d = sampled_conservative_convergence(chain, full, star, 50000, seed).distance;
    ok += d < 0.05;
    detail += fmt(" %.4f", d);
  }
  return {ok == 5, detail + fmt(" (< 0.05 on %d/5)", ok)};
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

Segment random_segment(Rng& rng, int S, int A, int length) {
  std::uniform_int_distribution<StateId> st(0, S - 1);
  std::uniform_int_distribution<ActionId> ac(0, A - 1);
  Segment seg;
  for (int i = 0; i < length; ++i) seg.steps.push_back({st(rng), ac(rng)});
  seg.valid_length = std::uniform_int_distribution<int>(1, length)(rng);
  seg.truncated = seg.valid_length < length;
  return seg;
}

PreferenceRecord record(Segment a, Segment b, Label raw, double lambda) {
  PreferenceRecord r;
  r.segment_a = std::move(a);
  r.segment_b = std::move(b);
  r.raw_label = raw;
  r.label = smooth_label(raw, lambda);
  return r;
}

double rel_error(double fd, double an) { return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}); }

Outcome gradient_checks() {
  double worst_reward = 0.0, worst_discrete = 0.0;
  Rng rng = make_rng(2024);
  for (int config = 0; config < 100; ++config) {
    const int S = std::uniform_int_distribution<int>(2, 6)(rng);
    const int A = std::uniform_int_distribution<int>(1, 4)(rng);
    RewardEnsemble ens(S, A);
    std::normal_distribution<double> n(0.0, 0.8);
    for (int m = 0; m < ens.num_members(); ++m)
      for (auto& v : ens.parameters(m)) v = n(rng);
    std::vector<PreferenceRecord> batch;
    const Label raws[3] = {{1, 0}, {0, 1}, {0.5, 0.5}};
    const int count = std::uniform_int_distribution<int>(1, 5)(rng);
    for (int i = 0; i < count; ++i)
      batch.push_back(record(random_segment(rng, S, A, 5), random_segment(rng, S, A, 5),
                             raws[std::uniform_int_distribution<int>(0, 2)(rng)], 0.05));
    const int m = config % 3;
    std::vector<double> grad;
    reward_loss(ens, m, batch, &grad);
    auto& theta = ens.parameters(m);
    const double h = 1e-4;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double keep = theta[i];
      auto at = [&](double x) {
        theta[i] = x;
        return reward_loss(ens, m, batch);
      };
      const double fd = (8.0 * (at(keep + h) - at(keep - h)) - (at(keep + 2 * h) - at(keep - 2 * h))) / (12.0 * h);
      theta[i] = keep;
      worst_reward = std::max(worst_reward, rel_error(fd, grad[i]));
    }
  }

  Rng drng = make_rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> eta(0.0, 10.0), temp(0.3, 2.0);
  for (int config = 0; config < 100; ++config) {
    ReplayGraph g;
    std::uniform_int_distribution<int> st(0, 5), ac(0, 2);
    for (int i = 0; i < 30; ++i) g.insert({st(drng), ac(drng), st(drng), i % 7 == 6, n(drng)}, i / 10);
    for (StateId s : g.vertex_order())
      for (ActionId a : g.support(s)) g.set_q_hat(s, a, n(drng));
    QTable q(6, 3);
    for (auto& v : q.values()) v = n(drng);
    const QTable target = q;
    LearnerParams p;
    p.gamma = 0.9;
    p.eta = eta(drng);
    p.temperature = temp(drng);
    std::vector<GraphSample> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(g.sample(drng));
    QTable grad;
    discrete_loss(q, target, batch, g, p, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < q.values().size(); ++i) {
      QTable plus = q, minus = q;
      plus.values()[i] += h;
      minus.values()[i] -= h;
      const double fd =
          (discrete_loss(plus, target, batch, g, p).total - discrete_loss(minus, target, batch, g, p).total) / (2 * h);
      worst_discrete = std::max(worst_discrete, rel_error(fd, grad.values()[i]));
    }
  }
  return {worst_reward < 1e-5 && worst_discrete < 1e-5,
          fmt("100 configs each, worst relative error: preference loss %.3g, learner loss %.3g (< 1e-5)", worst_reward,
              worst_discrete)};
}

// ---------------------------------------------------------------------------
// Soft backup
// ---------------------------------------------------------------------------

Outcome t_beta_properties() {
  Rng rng = make_rng(11);
  std::uniform_real_distribution<double> val(-20.0, 20.0), wt(0.01, 1.0), lb(-3.0, 3.0);
  int sandwich = 0, monotone = 0;
  for (int i = 0; i < 10000; ++i) {
    const int k = std::uniform_int_distribution<int>(1, 6)(rng);
    std::vector<double> v(k), w(k);
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      v[j] = val(rng);
      total += (w[j] = wt(rng));
    }
    double mean = 0.0;
    for (int j = 0; j < k; ++j) mean += w[j] / total * v[j];
    const double beta = std::pow(10.0, lb(rng));
    const double r = t_beta(v, w, beta);
    if (r < mean - 1e-9 || r > *std::max_element(v.begin(), v.end()) + 1e-9) ++sandwich;
    if (t_beta(v, w, beta * 2.0) > r + 1e-9) ++monotone;
  }
  const std::vector<double> v{0.0, 1.0}, w{0.5, 0.5};
  const double at10 = t_beta(v, w, 10.0), at001 = t_beta(v, w, 0.01);
  const bool end10 = std::abs(at10 - 0.5) <= 1e-2;
  const bool end001 = std::abs(at001 - 1.0) <= 1e-2;

  // soft fit on a uniformly explored 4-chain against its swept fixed point
  const double gamma = 0.9;
  const Mdp m = make_chain(4, gamma, 0.1);
  ReplayGraph g;
  {
    PrivilegedRewardScope privileged;
    for (int e = 0; e < 50; ++e) {
      const auto t = rollout(m, [](StateId, Rng& r) { return std::uniform_int_distribution<ActionId>(0, 1)(r); },
                             3000 + e, 30);
      for (const auto& tr : t.steps)
        g.insert({tr.state, tr.action, tr.next_state, tr.done, m.true_reward(tr.state, tr.action)}, e);
    }
  }
  g.sweep_all(2000, gamma);
  QTable q(5, 2);
  fit_soft_q(q, g, 1e-3, gamma, 0.5, 4000);
  double fit = 0.0;
  for (StateId s : g.vertex_order())
    for (ActionId a : g.support(s)) fit = std::max(fit, std::abs(q(s, a) - g.q_hat(s, a)));

  return {sandwich == 0 && monotone == 0 && end10 && end001 && fit <= 1e-2,
          fmt("sandwich violations %d/10000, monotonicity violations %d, beta=10 gives %.4f (|-0.5|=%.4f, need 1e-2), "
              "beta=0.01 gives %.6f, soft fit at beta=1e-3 off by %.2e",
              sandwich, monotone, at10, std::abs(at10 - 0.5), at001, fit)};
}

// ---------------------------------------------------------------------------
// Label smoothing
// ---------------------------------------------------------------------------

Outcome label_smoothing() {
  // one record, two ten-step segments: hard labels drive the gap to infinity
  Segment a, b;
  a.steps.assign(10, Step{0, 0});
  b.steps.assign(10, Step{1, 0});
  a.valid_length = b.valid_length = 10;
  const std::vector<PreferenceRecord> hard{record(a, b, {1, 0}, 0.0)}, soft{record(a, b, {1, 0}, 0.05)};
  RewardEnsemble eh(2, 1), es(2, 1);
  Rng r1 = make_rng(1), r2 = make_rng(1);
  update_ensemble(eh, hard, {5000, 1, 0.05}, r1);
  update_ensemble(es, soft, {5000, 1, 0.05}, r2);
  auto magnitude = [](const RewardEnsemble& e) {
    double total = 0.0;
    for (int m = 0; m < e.num_members(); ++m)
      for (double v : e.parameters(m)) total += std::abs(v);
    return total;
  };
  const double mh = magnitude(eh), ms = magnitude(es);
  const bool overfit = mh >= 2.0 * ms;

  // 5x5 grid reward recovery from scripted preferences over random rollouts
  EnvSpec spec;
  spec.kind = "grid";
  const Task task = make_task(spec, 0.95);
  const int L = 20;
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<Segment> pool;
    for (const auto& t : random_rollouts(task, 200, seed))
      for (auto& s : extract_segments(t, L, L))
        if (!s.truncated || t.steps.back().done) pool.push_back(std::move(s));
    Rng rng = make_rng(seed, 11);
    const auto train_raw = scripted_preferences(task.mdp, pool, 100, 0.0, 0.0, rng);
    const auto holdout = scripted_preferences(task.mdp, pool, 50, 0.0, 0.0, rng);
    double acc[2];
    int k = 0;
    for (double lambda : {0.05, 0.0}) {
      auto train = train_raw;
      for (auto& r : train) r.label = smooth_label(r.raw_label, lambda);
      RewardEnsemble ens(task.mdp.num_states(), task.mdp.num_actions());
      Rng reward_rng = make_rng(seed, 12);
      {
        TrainingScope training;
        update_ensemble(ens, train, RewardTrainingOptions{}, reward_rng);
      }
      acc[k++] = preference_accuracy(ens, holdout);
    }
    const bool ok = acc[0] >= acc[1] && acc[0] >= 0.85;
    wins += ok;
    detail += fmt(" s%lu %.2f/%.2f", static_cast<unsigned long>(seed), acc[0], acc[1]);
  }
  return {overfit && wins >= 4,
          fmt("one-record magnitude lambda=0 %.2f vs lambda=0.05 %.2f (ratio %.2f >= 2); holdout accuracy "
              "lambda=0.05/0:%s; %d/5 seeds",
              mh, ms, mh / ms, detail.c_str(), wins)};
}

// ---------------------------------------------------------------------------
// Overestimation on an under-covered graph
// ---------------------------------------------------------------------------

struct OverestimationSeed {
  double bias_eta6 = 0.0;
  double bias_eta0 = 0.0;
  double agreement_eta100 = 0.0;
};

// Behavior on the 5x5 grid may use only two actions per state: one of
// down/right plus one other, so the data reaches the goal but most actions
// are never supported. The table starts at U[0, 2], which leaves unsupported
// entries above their true value.
OverestimationSeed overestimation_seed(std::uint64_t seed) {
  EnvSpec spec;
  spec.kind = "grid";
  const double gamma = 0.9;
  const Task task = make_task(spec, gamma);
  const Mdp& mdp = task.mdp;
  Rng rng = make_rng(seed, 21);
  std::vector<std::array<ActionId, 2>> allowed(mdp.num_states());
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    const ActionId progress = std::bernoulli_distribution(0.5)(rng) ? 1 : 3;
    std::vector<ActionId> rest;
    for (ActionId a = 0; a < 4; ++a)
      if (a != progress) rest.push_back(a);
    std::shuffle(rest.begin(), rest.end(), rng);
    allowed[s] = {progress, rest[0]};
  }
  ReplayGraph g;
  {
    PrivilegedRewardScope privileged;
    for (int e = 0; e < 100; ++e) {
      StateId s = mdp.sample_initial(rng);
      for (int t = 0; t < 50 && !mdp.terminal(s); ++t) {
        const ActionId a = allowed[s][std::uniform_int_distribution<int>(0, 1)(rng)];
        const StateId next = mdp.sample_next(s, a, rng);
        g.insert({s, a, next, mdp.terminal(next), mdp.true_reward(s, a)}, e);
        s = next;
      }
    }
  }
  for (int i = 0; i < 5000 && g.sweep_all(1, gamma) > 1e-12; ++i) {
  }
  std::vector<StateId> states;
  for (StateId s : g.vertex_order())
    if (!g.support(s).empty() && !mdp.terminal(s)) states.push_back(s);

  OverestimationSeed out;
  for (double eta : {6.0, 0.0, 100.0}) {
    QTable q(mdp.num_states(), mdp.num_actions());
    Rng init = make_rng(seed, 22);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (auto& v : q.values()) v = u(init);
    // the stiff eta=100 run needs a smaller step and proportionally more of them
    const bool stiff = eta == 100.0;
    const LearnerParams lp{eta, gamma, stiff ? 0.005 : 0.1, 32, 1.0};
    Rng learn = make_rng(seed, 23);
    const int steps = stiff ? 80000 : 20000;
    {
      TrainingScope training;
      for (int i = 0; i < steps; ++i) learner_step(q, g, lp, learn);
    }
    const std::vector<ActionId> pi = greedy_policy(q);
    const auto mc = mc_true_value(mdp, pi, states, 20, seed, 200);
    double bias = 0.0;
    int agree = 0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const StateId s = states[i];
      bias += q(s, pi[s]) - mc[i].mean;
      double best_hat = -1e300;
      for (ActionId a : g.support(s)) best_hat = std::max(best_hat, g.q_hat(s, a));
      agree += g.q_hat(s, greedy_support_action(q, g, s)) >= best_hat - 1e-9;
    }
    bias /= static_cast<double>(states.size());
    if (eta == 6.0) out.bias_eta6 = bias;
    if (eta == 0.0) out.bias_eta0 = bias;
    if (stiff) out.agreement_eta100 = static_cast<double>(agree) / static_cast<double>(states.size());
  }
  return out;
}

Outcome overestimation() {
  int wins = 0;
  double worst_agreement = 1.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = overestimation_seed(seed);
    wins += r.bias_eta6 < r.bias_eta0;
    worst_agreement = std::min(worst_agreement, r.agreement_eta100);
    detail += fmt(" s%lu %.4f/%.4f", static_cast<unsigned long>(seed), r.bias_eta6, r.bias_eta0);
  }
  return {wins >= 4 && worst_agreement >= 0.95,
          fmt("mean Q-bias eta=6/eta=0:%s; eta=6 lower on %d/5; min argmax agreement at eta=100 %.3f", detail.c_str(),
              wins, worst_agreement)};
}

// ---------------------------------------------------------------------------
// End to end
// ---------------------------------------------------------------------------

Outcome online(const std::string& fixture, double min_success, int needed, double max_seconds) {
  const RunConfig base = load_run_config(std::string(SEER_FIXTURE_DIR) + "/" + fixture);
  int wins = 0;
  double slowest = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig cfg = base;
    cfg.seed = seed;
    RunConfig ablation = cfg;
    ablation.eta = 0.0;
    ablation.lambda = 0.0;
    const Task task = make_task(cfg);
    auto t0 = Clock::now();
    const double full = run_online(cfg, task).final_eval.success_rate;
    slowest = std::max(slowest, seconds_since(t0));
    t0 = Clock::now();
    const double abl = run_online(ablation, task).final_eval.success_rate;
    slowest = std::max(slowest, seconds_since(t0));
    wins += full >= min_success && full >= abl;
    detail += fmt(" s%lu %.2f/%.2f", static_cast<unsigned long>(seed), full, abl);
  }
  return {wins >= needed && slowest <= max_seconds,
          fmt("success full/ablation:%s; %d/5 seeds meet >= %.1f and >= ablation (need %d); slowest run %.1fs <= %.0fs",
              detail.c_str(), wins, min_success, needed, slowest, max_seconds)};
}

Outcome offline() {
  const RunConfig base = load_run_config(SEER_FIXTURE_DIR "/chain_offline.cfg");
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig cfg = base;
    cfg.seed = seed;
    const Task task = make_task(cfg);
    const auto data = generate_offline_data(cfg, task);
    const double learned = run_offline(cfg, task, data.transitions, data.preferences).final_eval.return_mean;
    const double behavior = behavior_return(task, 200, seed + 100);
    wins += learned > behavior;
    detail += fmt(" s%lu %.3f/%.3f", static_cast<unsigned long>(seed), learned, behavior);
  }
  return {wins == 5, fmt("return extracted/behavior:%s; %d/5 seeds", detail.c_str(), wins)};
}

Outcome determinism() {
  const RunConfig cfg = load_run_config(SEER_FIXTURE_DIR "/grid5.cfg");
  const Task task = make_task(cfg);
  auto csv = [&] {
    std::string out;
    for (const auto& row : run_online(cfg, task).metrics) out += to_csv(row) + "\n";
    return out;
  };
  const std::string a = csv(), b = csv();
  const std::size_t guard = reward_guard_violations();
  return {a == b && !a.empty() && guard == 0,
          fmt("two scripted runs give %s metrics (%zu bytes); reward guard trips over the whole acceptance run: %zu",
              a == b ? "bit-identical" : "DIFFERENT", a.size(), guard)};
}

}  // namespace

int main() {
  reset_reward_guard_violations();
  report("conservative_lower_bound", lower_bound_suite);
  report("backup_contraction", contraction_suite);
  report("oracle_equivalence", oracle_equivalence);
  report("sampled_convergence", sampled_convergence);
  report("gradient_checks", gradient_checks);
  report("t_beta_properties", t_beta_properties);
  report("label_smoothing", label_smoothing);
  report("overestimation_ordering", overestimation);
  report("online_grid5", [] { return online("grid5.cfg", 0.9, 4, 300.0); });
  report("online_push7", [] { return online("push7.cfg", 0.5, 3, 900.0); });
  report("offline_chain", offline);
  report("determinism_and_guard", determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
