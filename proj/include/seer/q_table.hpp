#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "seer/mdp.hpp"

namespace seer {

// Dense (state x action) table of reals.
class QTable {
 public:
  QTable() = default;
  QTable(int num_states, int num_actions, double init = 0.0)
      : num_states_(num_states),
        num_actions_(num_actions),
        values_(static_cast<std::size_t>(num_states) * num_actions, init) {}

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }

  double& operator()(StateId s, ActionId a) { return values_[index(s, a)]; }
  double operator()(StateId s, ActionId a) const { return values_[index(s, a)]; }

  std::span<double> row(StateId s) { return {values_.data() + index(s, 0), static_cast<std::size_t>(num_actions_)}; }
  std::span<const double> row(StateId s) const {
    return {values_.data() + index(s, 0), static_cast<std::size_t>(num_actions_)};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const QTable&) const = default;

 private:
  std::size_t index(StateId s, ActionId a) const {
    if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_)
      throw ContractError("QTable: state/action id out of range");
    return static_cast<std::size_t>(s) * num_actions_ + a;
  }

  int num_states_ = 0;
  int num_actions_ = 0;
  std::vector<double> values_;
};

inline double sup_norm_diff(const QTable& x, const QTable& y) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.values().size(); ++i) d = std::max(d, std::abs(x.values()[i] - y.values()[i]));
  return d;
}

}  // namespace seer
