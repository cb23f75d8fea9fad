#include <gtest/gtest.h>

#include "seer/seer.hpp"

namespace seer {
namespace {

ReplayGraph two_chain_graph() {
  ReplayGraph g;
  g.insert({0, 0, 1, false, 0.0}, 0);
  g.insert({1, 0, 2, true, 1.0}, 0);
  return g;
}

// State 0 has two supported actions. Action 0 leads to the rewarding chain,
// action 1 to state 3 whose only supported action ends with nothing. The
// unsupported action at state 3 starts out optimistic.
ReplayGraph undercovered_graph() {
  ReplayGraph g;
  g.insert({0, 0, 1, false, 0.0}, 0);
  g.insert({1, 0, 2, true, 1.0}, 0);
  g.insert({0, 1, 3, false, 0.0}, 1);
  g.insert({3, 0, 4, true, 0.0}, 1);
  g.sweep_all(10, 0.9);
  return g;
}

TEST(Kl, Examples) {
  const std::vector<double> a{0.3, 0.7};
  EXPECT_EQ(kl_divergence(a, a), 0.0);
  EXPECT_NEAR(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-12);
  EXPECT_NEAR(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{0.75, 0.25}), 0.143841, 1e-6);
  EXPECT_THROW(kl_divergence(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), ContractError);
}

TEST(Kl, NonNegativeAndZeroOnlyWhenEqual) {
  Rng rng = make_rng(2);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const int n = 2 + i % 4;
    std::vector<double> p(n), q(n);
    double sp = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
      sp += (p[k] = u(rng));
      sq += (q[k] = u(rng));
    }
    for (int k = 0; k < n; ++k) {
      p[k] /= sp;
      q[k] /= sq;
    }
    EXPECT_GT(kl_divergence(p, q), 0.0);
    EXPECT_EQ(kl_divergence(p, p), 0.0);
  }
}

TEST(DiscreteLoss, ZeroAtFixedPointWithMatchingPolicies) {
  ReplayGraph g = two_chain_graph();
  g.sweep_all(5, 0.9);
  QTable q(3, 1);
  q(0, 0) = 0.9;
  q(1, 0) = 1.0;
  LearnerParams p;
  p.gamma = 0.9;
  const std::vector<GraphSample> batch{{0, 0, 1, 0.0, false}, {1, 0, 2, 1.0, true}};
  const auto loss = discrete_loss(q, q, batch, g, p);
  EXPECT_NEAR(loss.total, 0.0, 1e-15);
}

TEST(DiscreteLoss, EtaZeroIsPlainTd) {
  const ReplayGraph g = undercovered_graph();
  QTable q(5, 2);
  q(0, 1) = 2.0;
  LearnerParams p;
  p.gamma = 0.9;
  p.eta = 0.0;
  const std::vector<GraphSample> batch{{0, 1, 3, 0.0, false}, {0, 0, 1, 0.0, false}};
  const auto loss = discrete_loss(q, q, batch, g, p);
  EXPECT_DOUBLE_EQ(loss.total, loss.td);
  EXPECT_DOUBLE_EQ(loss.td, (4.0 + 0.0) / 2.0);
}

TEST(DiscreteLoss, RegularizerPullsTowardGraphArgmax) {
  const ReplayGraph g = undercovered_graph();
  ASSERT_GT(g.q_hat(0, 0), g.q_hat(0, 1));
  QTable q(5, 2);
  q(0, 1) = 1.0;
  LearnerParams p;
  p.gamma = 0.9;
  const std::vector<GraphSample> batch{{0, 0, 1, 0.0, false}};
  QTable grad;
  const auto loss = discrete_loss(q, q, batch, g, p, &grad);
  EXPECT_GT(loss.reg, 0.0);
  // descent raises q(0,0) relative to q(0,1)
  EXPECT_LT(grad(0, 0) - grad(0, 1), 0.0);
}

TEST(DiscreteLoss, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> eta(0.0, 10.0), temp(0.3, 2.0);
  for (int config = 0; config < 100; ++config) {
    ReplayGraph g;
    std::uniform_int_distribution<int> st(0, 5), ac(0, 2);
    for (int i = 0; i < 30; ++i) g.insert({st(rng), ac(rng), st(rng), i % 7 == 6, n(rng)}, i / 10);
    for (StateId s : g.vertex_order())
      for (ActionId a : g.support(s)) g.set_q_hat(s, a, n(rng));
    QTable q(6, 3);
    for (auto& v : q.values()) v = n(rng);
    const QTable target = q;
    LearnerParams p;
    p.gamma = 0.9;
    p.eta = eta(rng);
    p.temperature = temp(rng);
    std::vector<GraphSample> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(g.sample(rng));
    QTable grad;
    discrete_loss(q, target, batch, g, p, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < q.values().size(); ++i) {
      QTable plus = q, minus = q;
      plus.values()[i] += h;
      minus.values()[i] -= h;
      const double fd =
          (discrete_loss(plus, target, batch, g, p).total - discrete_loss(minus, target, batch, g, p).total) / (2 * h);
      const double an = grad.values()[i];
      EXPECT_LT(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}), 1e-5) << "config " << config;
    }
  }
}

TEST(LearnerStep, ZeroLearningRateLeavesTableUnchanged) {
  const ReplayGraph g = undercovered_graph();
  QTable q(5, 2, 0.3);
  const QTable before = q;
  LearnerParams p;
  p.lr = 0.0;
  Rng rng = make_rng(1);
  learner_step(q, g, p, rng);
  EXPECT_EQ(q, before);
  EXPECT_THROW(learner_step(q, ReplayGraph(), p, rng), ContractError);
}

TEST(LearnerStep, ConvergesToTdFixedPointWithoutRegularizer) {
  const ReplayGraph g = two_chain_graph();
  QTable q(3, 1);
  LearnerParams p;
  p.gamma = 0.9;
  p.eta = 0.0;
  p.lr = 0.5;
  Rng rng = make_rng(4);
  for (int i = 0; i < 2000; ++i) learner_step(q, g, p, rng);
  EXPECT_NEAR(q(1, 0), 1.0, 1e-3);
  EXPECT_NEAR(q(0, 0), 0.9, 1e-3);
}

TEST(LearnerStep, StrongRegularizerMatchesGraphArgmax) {
  const ReplayGraph g = undercovered_graph();
  QTable q(5, 2);
  q(3, 1) = 5.0;  // never supported, so the plain TD target overestimates action 1 at state 0
  LearnerParams p;
  p.gamma = 0.9;
  p.lr = 0.01;
  Rng rng = make_rng(5);
  QTable plain = q;
  p.eta = 0.0;
  for (int i = 0; i < 5000; ++i) learner_step(plain, g, p, rng);
  EXPECT_EQ(greedy_support_action(plain, g, 0), 1);
  p.eta = 100.0;
  for (int i = 0; i < 5000; ++i) learner_step(q, g, p, rng);
  for (StateId s : g.vertex_order()) {
    if (g.support(s).empty()) continue;
    ActionId best_hat = g.support(s)[0];
    for (ActionId a : g.support(s))
      if (g.q_hat(s, a) > g.q_hat(s, best_hat)) best_hat = a;
    EXPECT_EQ(greedy_support_action(q, g, s), best_hat) << "state " << s;
  }
}

TEST(Greedy, TieBreakLowestId) {
  QTable q(3, 2);
  q(0, 0) = 0.2;
  q(0, 1) = 0.9;
  q(1, 0) = q(1, 1) = 0.5;
  EXPECT_EQ(greedy_policy(q), (std::vector<ActionId>{1, 0, 0}));
}

TEST(EpsilonGreedy, Contracts) {
  QTable q(1, 4);
  q(0, 2) = 1.0;
  Rng rng = make_rng(6);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(epsilon_greedy_action(q, 0, 0.0, rng), 2);
  std::vector<int> counts(4, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[epsilon_greedy_action(q, 0, 1.0, rng)];
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  for (int c : counts) EXPECT_LT(std::abs(c - draws / 4.0), 3 * sigma);
  Rng a = make_rng(7), b = make_rng(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(epsilon_greedy_action(q, 0, 0.5, a), epsilon_greedy_action(q, 0, 0.5, b));
  EXPECT_THROW(epsilon_greedy_action(q, 0, 1.5, rng), ConfigError);
}

TEST(EpsilonSchedule, LinearThenFlat) {
  EXPECT_DOUBLE_EQ(epsilon_schedule(0, 1000), 1.0);
  EXPECT_NEAR(epsilon_schedule(100, 1000), 0.525, 1e-12);
  EXPECT_NEAR(epsilon_schedule(200, 1000), 0.05, 1e-15);
  EXPECT_NEAR(epsilon_schedule(900, 1000), 0.05, 1e-15);
}

}  // namespace
}  // namespace seer
