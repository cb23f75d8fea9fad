#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "seer/mdp.hpp"
#include "seer/reward_model.hpp"

namespace seer {

inline double true_segment_return(const Mdp& mdp, const Segment& seg) {
  PrivilegedRewardScope privileged;
  double total = 0.0;
  for (int t = 0; t < seg.valid_length; ++t) total += mdp.true_reward(seg.steps[t].state, seg.steps[t].action);
  return total;
}

// Labels a segment pair from ground-truth returns. Differences within
// tie_epsilon are labeled as equal.
struct ScriptedTeacher {
  double tie_epsilon = 0.0;

  Label label(const Mdp& mdp, const Segment& a, const Segment& b) const {
    const double diff = true_segment_return(mdp, a) - true_segment_return(mdp, b);
    if (diff > tie_epsilon) return {1.0, 0.0};
    if (diff < -tie_epsilon) return {0.0, 1.0};
    return {0.5, 0.5};
  }
};

enum class HumanChoice { a, b, equal, skip };

inline std::optional<HumanChoice> parse_choice(const std::string& s) {
  if (s == "a" || s == "left") return HumanChoice::a;
  if (s == "b" || s == "right") return HumanChoice::b;
  if (s == "equal") return HumanChoice::equal;
  if (s == "skip") return HumanChoice::skip;
  return std::nullopt;
}

struct HumanQuery {
  std::uint64_t id = 0;
  Segment segment_a;
  Segment segment_b;
  std::int64_t created_step = 0;
};

enum class SubmitStatus { accepted, discarded, rejected };

// Open queries waiting for a human and answered records waiting to be drained
// by the training loop. All members are safe to call concurrently.
class HumanQueryBook {
 public:
  explicit HumanQueryBook(double lambda = 0.0) : lambda_(lambda) { smooth_label({1.0, 0.0}, lambda); }

  std::uint64_t enqueue(Segment a, Segment b, std::int64_t step) {
    std::lock_guard lock(mu_);
    const std::uint64_t id = next_id_++;
    open_.emplace(id, HumanQuery{id, std::move(a), std::move(b), step});
    return id;
  }

  // Oldest unanswered query, if any.
  std::optional<HumanQuery> next_pending() const {
    std::lock_guard lock(mu_);
    if (open_.empty()) return std::nullopt;
    return open_.begin()->second;
  }

  SubmitStatus submit(std::uint64_t id, HumanChoice choice) {
    std::lock_guard lock(mu_);
    auto it = open_.find(id);
    if (it == open_.end()) return SubmitStatus::rejected;
    HumanQuery q = std::move(it->second);
    open_.erase(it);
    if (choice == HumanChoice::skip) return SubmitStatus::discarded;
    PreferenceRecord rec;
    rec.segment_a = std::move(q.segment_a);
    rec.segment_b = std::move(q.segment_b);
    rec.raw_label = choice == HumanChoice::a ? Label{1.0, 0.0}
                    : choice == HumanChoice::b ? Label{0.0, 1.0}
                                               : Label{0.5, 0.5};
    rec.label = smooth_label(rec.raw_label, lambda_);
    rec.source = LabelSource::human;
    rec.timestamp = q.created_step;
    ready_.push_back(std::move(rec));
    return SubmitStatus::accepted;
  }

  // Removes and returns every answered record.
  std::vector<PreferenceRecord> drain() {
    std::lock_guard lock(mu_);
    std::vector<PreferenceRecord> out;
    out.swap(ready_);
    return out;
  }

  std::size_t pending() const {
    std::lock_guard lock(mu_);
    return open_.size();
  }
  std::size_t ready() const {
    std::lock_guard lock(mu_);
    return ready_.size();
  }

 private:
  double lambda_;
  mutable std::mutex mu_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, HumanQuery> open_;
  std::vector<PreferenceRecord> ready_;
};

}  // namespace seer
