#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seer/mdp.hpp"

namespace seer {

// Preference distribution over (first segment preferred, second preferred).
using Label = std::array<double, 2>;

enum class LabelSource { scripted, human };

inline const char* to_string(LabelSource s) { return s == LabelSource::scripted ? "scripted" : "human"; }

struct PreferenceRecord {
  Segment segment_a;
  Segment segment_b;
  Label raw_label{0.5, 0.5};
  Label label{0.5, 0.5};  // smoothed; this is what training consumes
  LabelSource source = LabelSource::scripted;
  std::int64_t timestamp = 0;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow or log(0).
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// Ensemble of tabular reward estimators. Member m predicts tanh(theta_m[s,a]);
// the ensemble reward is the member mean.
class RewardEnsemble {
 public:
  static constexpr int kDefaultMembers = 3;

  RewardEnsemble() = default;
  RewardEnsemble(int num_states, int num_actions, int members = kDefaultMembers)
      : num_states_(num_states),
        num_actions_(num_actions),
        theta_(members, std::vector<double>(static_cast<std::size_t>(num_states) * num_actions, 0.0)) {
    if (num_states <= 0 || num_actions <= 0 || members < 1)
      throw ContractError("RewardEnsemble: sizes must be positive");
  }

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int num_members() const { return static_cast<int>(theta_.size()); }

  std::size_t index(StateId s, ActionId a) const {
    if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_)
      throw ContractError("RewardEnsemble: state/action id out of range");
    return static_cast<std::size_t>(s) * num_actions_ + a;
  }

  std::vector<double>& parameters(int member) { return theta_.at(member); }
  const std::vector<double>& parameters(int member) const { return theta_.at(member); }

  double member_reward(int member, StateId s, ActionId a) const {
    return std::tanh(theta_.at(member)[index(s, a)]);
  }
  double reward(StateId s, ActionId a) const {
    const std::size_t i = index(s, a);
    double total = 0.0;
    for (const auto& t : theta_) total += std::tanh(t[i]);
    return total / static_cast<double>(theta_.size());
  }

  bool operator==(const RewardEnsemble&) const = default;

 private:
  int num_states_ = 0;
  int num_actions_ = 0;
  std::vector<std::vector<double>> theta_;
};

// Sum of estimated rewards over the valid (non-padded) steps of a segment.
// member < 0 selects the ensemble mean.
inline double segment_return(const RewardEnsemble& ens, int member, const Segment& seg) {
  double total = 0.0;
  for (int t = 0; t < seg.valid_length; ++t) {
    const auto& st = seg.steps[t];
    total += member < 0 ? ens.reward(st.state, st.action) : ens.member_reward(member, st.state, st.action);
  }
  return total;
}

// Bradley-Terry probability that `a` is preferred over `b`.
inline double predict_preference(const RewardEnsemble& ens, int member, const Segment& a, const Segment& b) {
  return sigmoid(segment_return(ens, member, a) - segment_return(ens, member, b));
}

inline Label smooth_label(const Label& raw, double lambda) {
  if (!(lambda >= 0.0 && lambda < 0.5)) throw ConfigError("lambda", "label smoothing must lie in [0, 0.5)");
  if (raw[0] == 1.0 && raw[1] == 0.0) return {1.0 - lambda, lambda};
  if (raw[0] == 0.0 && raw[1] == 1.0) return {lambda, 1.0 - lambda};
  if (raw[0] == 0.5 && raw[1] == 0.5) return {0.5, 0.5};
  throw ContractError("smooth_label: raw label must be (1,0), (0,1) or (0.5,0.5)");
}

// Mean cross-entropy between smoothed labels and the member's predictions.
// When `grad` is non-null it receives d(loss)/d(theta_member), same layout as
// the parameter table.
inline double reward_loss(const RewardEnsemble& ens, int member, std::span<const PreferenceRecord> batch,
                          std::vector<double>* grad = nullptr) {
  if (batch.empty()) throw ContractError("reward_loss: empty batch");
  const auto& theta = ens.parameters(member);
  if (grad) grad->assign(theta.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& rec : batch) {
    const double diff = segment_return(ens, member, rec.segment_a) - segment_return(ens, member, rec.segment_b);
    loss -= rec.label[0] * log_sigmoid(diff) + rec.label[1] * log_sigmoid(-diff);
    if (!grad) continue;
    // d/d diff of the record loss is sigmoid(diff) - y0 (labels sum to one).
    const double g = (sigmoid(diff) - rec.label[0]) * inv_n;
    auto accumulate = [&](const Segment& seg, double sign) {
      for (int t = 0; t < seg.valid_length; ++t) {
        const std::size_t i = ens.index(seg.steps[t].state, seg.steps[t].action);
        const double th = std::tanh(theta[i]);
        (*grad)[i] += sign * g * (1.0 - th * th);
      }
    };
    accumulate(rec.segment_a, 1.0);
    accumulate(rec.segment_b, -1.0);
  }
  return loss * inv_n;
}

struct RewardTrainingOptions {
  int epochs = 50;
  int batch_size = 16;
  double lr = 1e-2;
  bool bootstrap = false;  // members see independent resamples (with replacement) of the dataset
};

struct RewardTrainingStats {
  std::vector<double> initial_loss;  // per member, full dataset
  std::vector<double> final_loss;
  double mean_final_loss() const {
    return final_loss.empty() ? 0.0
                              : std::accumulate(final_loss.begin(), final_loss.end(), 0.0) / final_loss.size();
  }
};

// Mini-batch gradient descent on reward_loss. Each member draws its own
// shuffles so members decorrelate; with `bootstrap` each member also trains on
// its own resample of the dataset.
inline RewardTrainingStats update_ensemble(RewardEnsemble& ens, std::span<const PreferenceRecord> dataset,
                                           const RewardTrainingOptions& opts, Rng& rng) {
  if (dataset.empty()) throw ContractError("update_ensemble: empty preference dataset");
  if (opts.batch_size < 1 || opts.epochs < 0) throw ConfigError("reward_batch_size", "must be positive");
  RewardTrainingStats stats;
  std::vector<std::size_t> order(dataset.size());
  std::vector<PreferenceRecord> batch;
  std::vector<double> grad;
  for (int m = 0; m < ens.num_members(); ++m) {
    Rng member_rng(rng());
    stats.initial_loss.push_back(reward_loss(ens, m, dataset));
    auto& theta = ens.parameters(m);
    std::vector<std::size_t> members_view(dataset.size());
    std::iota(members_view.begin(), members_view.end(), 0);
    if (opts.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
      for (auto& i : members_view) i = pick(member_rng);
    }
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
      order = members_view;
      std::shuffle(order.begin(), order.end(), member_rng);
      for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
        batch.clear();
        for (std::size_t i = start; i < std::min(order.size(), start + opts.batch_size); ++i)
          batch.push_back(dataset[order[i]]);
        reward_loss(ens, m, batch, &grad);
        for (std::size_t i = 0; i < theta.size(); ++i) {
          if (!std::isfinite(grad[i])) throw ContractError("update_ensemble: non-finite gradient");
          theta[i] -= opts.lr * grad[i];
        }
      }
    }
    stats.final_loss.push_back(reward_loss(ens, m, dataset));
  }
  return stats;
}

// Population standard deviation of member preference probabilities.
inline double disagreement(const RewardEnsemble& ens, const Segment& a, const Segment& b) {
  if (ens.num_members() < 2) throw ContractError("disagreement: needs at least two members");
  std::vector<double> p;
  for (int m = 0; m < ens.num_members(); ++m) p.push_back(predict_preference(ens, m, a, b));
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / p.size();
  double var = 0.0;
  for (double v : p) var += (v - mean) * (v - mean);
  return std::sqrt(var / p.size());
}

// Fraction of strict records whose preferred segment has the larger
// ensemble-mean return. Records with equal labels are skipped.
inline double preference_accuracy(const RewardEnsemble& ens, std::span<const PreferenceRecord> records) {
  int total = 0;
  int correct = 0;
  for (const auto& r : records) {
    if (r.raw_label[0] == r.raw_label[1]) continue;
    ++total;
    const double diff = segment_return(ens, -1, r.segment_a) - segment_return(ens, -1, r.segment_b);
    if ((diff > 0.0) == (r.raw_label[0] > r.raw_label[1]) && diff != 0.0) ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

}  // namespace seer
