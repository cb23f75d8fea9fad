#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seer/mdp.hpp"

namespace seer {

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

// Everything a renderer needs to draw one state of a grid-like task.
struct GridView {
  int width = 0;
  int height = 0;
  std::vector<Cell> walls;
  std::vector<Cell> goals;
  std::vector<Cell> hazards;
  std::vector<Cell> targets;
  Cell agent;
  std::optional<Cell> box;
};

inline std::string render_ascii(const GridView& v) {
  std::vector<std::string> rows(v.height, std::string(v.width, '.'));
  auto put = [&](const Cell& c, char ch) {
    if (c.y >= 0 && c.y < v.height && c.x >= 0 && c.x < v.width) rows[c.y][c.x] = ch;
  };
  for (const auto& c : v.walls) put(c, '#');
  for (const auto& c : v.hazards) put(c, 'X');
  for (const auto& c : v.goals) put(c, 'G');
  for (const auto& c : v.targets) put(c, 'T');
  if (v.box) put(*v.box, std::find(v.targets.begin(), v.targets.end(), *v.box) != v.targets.end() ? '*' : 'B');
  put(v.agent, 'A');
  std::string out;
  for (const auto& r : rows) out += r + "\n";
  return out;
}

// A concrete environment compiled down to an enumerable Mdp plus the
// state-level helpers the training loop and the UI bridge need.
struct Task {
  std::string kind;
  Mdp mdp;
  int max_steps = 100;
  std::vector<std::string> action_names;
  std::function<std::vector<double>(StateId)> features;
  std::function<GridView(StateId)> view;
};

namespace detail {

struct Layout {
  int width = 0;
  int height = 0;
  std::vector<std::string> rows;

  bool inside(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  char at(Cell c) const { return rows[c.y][c.x]; }
  bool wall(Cell c) const { return !inside(c) || at(c) == '#'; }
  std::vector<Cell> cells_with(std::string_view chars) const {
    std::vector<Cell> out;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (chars.find(rows[y][x]) != std::string_view::npos) out.push_back({x, y});
    return out;
  }
};

inline Layout parse_layout(const std::vector<std::string>& rows, std::string_view allowed) {
  if (rows.empty()) throw ConfigError("row", "layout has no rows");
  Layout l;
  l.height = static_cast<int>(rows.size());
  l.width = static_cast<int>(rows.front().size());
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != l.width) throw ConfigError("row", "layout rows differ in length");
    for (char ch : r)
      if (allowed.find(ch) == std::string_view::npos)
        throw ConfigError("row", std::string("unexpected layout character '") + ch + "'");
  }
  l.rows = rows;
  return l;
}

inline constexpr int kDx[4] = {0, 0, -1, 1};
inline constexpr int kDy[4] = {-1, 1, 0, 0};

inline void rescale_rewards(Mdp& mdp, const std::vector<double>& raw) {
  double scale = 0.0;
  for (double r : raw) scale = std::max(scale, std::abs(r));
  if (scale == 0.0) scale = 1.0;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (mdp.terminal(s)) continue;
    for (ActionId a = 0; a < mdp.num_actions(); ++a)
      mdp.set_reward(s, a, raw[static_cast<std::size_t>(s) * mdp.num_actions() + a] / scale);
  }
}

}  // namespace detail

// Navigation grid. Layout characters: '#' wall, '.' floor, 'A' start,
// 'G' goal, 'X' hazard. Rewards before rescaling: goal_reward on entering a
// goal, -hazard_penalty on entering a hazard, -step_cost otherwise. Goals are
// absorbing: every action there stays put and pays goal_reward.
// With slip > 0 the intended move is replaced by a uniformly chosen
// perpendicular move with that probability.
struct GridOptions {
  double step_cost = 0.1;
  double goal_reward = 1.0;
  double hazard_penalty = 1.0;
  double slip = 0.0;
  double gamma = 0.9;
};

class GridEnv {
 public:
  using Options = GridOptions;

  explicit GridEnv(const std::vector<std::string>& rows) : GridEnv(rows, Options{}) {}
  GridEnv(const std::vector<std::string>& rows, Options opts)
      : layout_(detail::parse_layout(rows, "#.AGX")), opts_(opts) {
    free_ = layout_.cells_with(".AGX");
    if (free_.empty()) throw ConfigError("row", "layout has no free cells");
    if (layout_.cells_with("A").size() != 1) throw ConfigError("row", "grid layout needs exactly one 'A'");
    if (layout_.cells_with("G").empty()) throw ConfigError("row", "grid layout needs at least one 'G'");
    if (opts.slip < 0.0 || opts.slip >= 1.0) throw ConfigError("slip", "must lie in [0, 1)");
  }

  static GridEnv open(int width, int height, Options opts = {}) {
    std::vector<std::string> rows(height, std::string(width, '.'));
    rows[0][0] = 'A';
    rows[height - 1][width - 1] = 'G';
    return GridEnv(rows, opts);
  }

  int num_states() const { return static_cast<int>(free_.size()); }
  int width() const { return layout_.width; }
  int height() const { return layout_.height; }

  StateId encode(Cell agent) const {
    auto it = std::find(free_.begin(), free_.end(), agent);
    if (it == free_.end()) throw ContractError("GridEnv: cell is not free");
    return static_cast<StateId>(it - free_.begin());
  }
  Cell decode(StateId s) const {
    if (s < 0 || s >= num_states()) throw ContractError("GridEnv: state id out of range");
    return free_[s];
  }

  GridView view(StateId s) const {
    GridView v;
    v.width = layout_.width;
    v.height = layout_.height;
    v.walls = layout_.cells_with("#");
    v.goals = layout_.cells_with("G");
    v.hazards = layout_.cells_with("X");
    v.agent = decode(s);
    return v;
  }

  Mdp to_mdp() const {
    const int n = num_states();
    Mdp mdp(n, 4, opts_.gamma);
    std::vector<double> raw(static_cast<std::size_t>(n) * 4, 0.0);
    for (StateId s = 0; s < n; ++s) {
      Cell c = free_[s];
      for (ActionId a = 0; a < 4; ++a) {
        std::vector<Outcome> outs;
        double reward = 0.0;
        auto add = [&](int dir, double p) {
          if (p <= 0.0) return;
          Cell to = move(c, dir);
          StateId next = encode(to);
          reward += p * raw_reward(to);
          for (auto& o : outs)
            if (o.next == next) {
              o.prob += p;
              return;
            }
          outs.push_back({next, p});
        };
        add(a, 1.0 - opts_.slip);
        const int side0 = a < 2 ? 2 : 0;
        add(side0, opts_.slip / 2);
        add(side0 + 1, opts_.slip / 2);
        mdp.set_transition(s, a, std::move(outs));
        raw[static_cast<std::size_t>(s) * 4 + a] = reward;
      }
    }
    // goals absorb the agent and keep paying the goal reward
    for (StateId s = 0; s < n; ++s) {
      if (layout_.at(free_[s]) != 'G') continue;
      mdp.set_goal(s);
      for (ActionId a = 0; a < 4; ++a) {
        mdp.set_transition(s, a, {{s, 1.0}});
        raw[static_cast<std::size_t>(s) * 4 + a] = opts_.goal_reward;
      }
    }
    detail::rescale_rewards(mdp, raw);
    std::vector<double> init(n, 0.0);
    init[encode(layout_.cells_with("A").front())] = 1.0;
    mdp.set_initial_distribution(std::move(init));
    return mdp;
  }

 private:
  Cell move(Cell c, int dir) const {
    Cell to{c.x + detail::kDx[dir], c.y + detail::kDy[dir]};
    return layout_.wall(to) ? c : to;
  }
  double raw_reward(Cell to) const {
    switch (layout_.at(to)) {
      case 'G': return opts_.goal_reward;
      case 'X': return -opts_.hazard_penalty;
      default: return -opts_.step_cost;
    }
  }

  detail::Layout layout_;
  Options opts_;
  std::vector<Cell> free_;
};

// Single-box push puzzle. Layout characters: '#' wall, '.' floor, 'A' agent,
// 'B' box, 'T' target. Actions 0-3 move (blocked by boxes), 4-7 push in the
// same four directions (and move when no box is in the way). Raw rewards:
// -0.1 per step, +1 per box placed and +10 on completion, rescaled by the
// largest magnitude. With one box, placing it completes the puzzle; solved
// states are terminal goals.
class PushEnv {
 public:
  PushEnv(const std::vector<std::string>& rows, double gamma = 0.9)
      : layout_(detail::parse_layout(rows, "#.ABT")), gamma_(gamma) {
    free_ = layout_.cells_with(".ABT");
    if (layout_.cells_with("A").size() != 1) throw ConfigError("row", "push layout needs exactly one 'A'");
    if (layout_.cells_with("B").size() != 1) throw ConfigError("row", "push layout needs exactly one 'B'");
    if (layout_.cells_with("T").size() != 1) throw ConfigError("row", "push layout needs exactly one 'T'");
    if (free_.size() < 2) throw ConfigError("row", "push layout needs two free cells");
  }

  int num_states() const {
    const int n = static_cast<int>(free_.size());
    return n * (n - 1);
  }
  int width() const { return layout_.width; }
  int height() const { return layout_.height; }

  StateId encode(Cell agent, Cell box) const {
    const int n = static_cast<int>(free_.size());
    int ai = free_index(agent);
    int bi = free_index(box);
    if (ai == bi) throw ContractError("PushEnv: agent and box overlap");
    int box_rank = bi < ai ? bi : bi - 1;
    return ai * (n - 1) + box_rank;
  }
  std::pair<Cell, Cell> decode(StateId s) const {
    const int n = static_cast<int>(free_.size());
    if (s < 0 || s >= num_states()) throw ContractError("PushEnv: state id out of range");
    int ai = s / (n - 1);
    int rank = s % (n - 1);
    int bi = rank < ai ? rank : rank + 1;
    return {free_[ai], free_[bi]};
  }

  GridView view(StateId s) const {
    auto [agent, box] = decode(s);
    GridView v;
    v.width = layout_.width;
    v.height = layout_.height;
    v.walls = layout_.cells_with("#");
    v.targets = layout_.cells_with("T");
    v.agent = agent;
    v.box = box;
    return v;
  }

  Mdp to_mdp() const {
    const int n = num_states();
    const Cell target = layout_.cells_with("T").front();
    Mdp mdp(n, 8, gamma_);
    std::vector<double> raw(static_cast<std::size_t>(n) * 8, 0.0);
    for (StateId s = 0; s < n; ++s) {
      auto [agent, box] = decode(s);
      for (ActionId a = 0; a < 8; ++a) {
        const int dir = a % 4;
        const bool push = a >= 4;
        Cell ahead{agent.x + detail::kDx[dir], agent.y + detail::kDy[dir]};
        Cell new_agent = agent;
        Cell new_box = box;
        if (ahead == box) {
          Cell beyond{box.x + detail::kDx[dir], box.y + detail::kDy[dir]};
          if (push && !layout_.wall(beyond)) {
            new_box = beyond;
            new_agent = ahead;
          }
        } else if (!layout_.wall(ahead)) {
          new_agent = ahead;
        }
        raw[static_cast<std::size_t>(s) * 8 + a] = new_box == target ? -0.1 + 1.0 + 10.0 : -0.1;
        mdp.set_transition(s, a, {{encode(new_agent, new_box), 1.0}});
      }
      if (box == target) {
        mdp.set_terminal(s);
        mdp.set_goal(s);
      }
    }
    detail::rescale_rewards(mdp, raw);
    std::vector<double> init(n, 0.0);
    init[encode(layout_.cells_with("A").front(), layout_.cells_with("B").front())] = 1.0;
    mdp.set_initial_distribution(std::move(init));
    return mdp;
  }

 private:
  int free_index(Cell c) const {
    auto it = std::find(free_.begin(), free_.end(), c);
    if (it == free_.end()) throw ContractError("PushEnv: cell is not free");
    return static_cast<int>(it - free_.begin());
  }

  detail::Layout layout_;
  double gamma_;
  std::vector<Cell> free_;
};

// Deterministic chain s0 -> s1 -> ... -> s_length (terminal). Action 0
// advances (reward 1 on the edge into the terminal state, 0 otherwise);
// action 1 steps back (staying put at s0) at a cost of back_cost.
inline Mdp make_chain(int length, double gamma = 0.9, double back_cost = 0.1) {
  if (length < 1) throw ContractError("make_chain: length must be >= 1");
  Mdp mdp(length + 1, 2, gamma);
  for (StateId s = 0; s < length; ++s) {
    mdp.set_transition(s, 0, {{s + 1, 1.0}});
    mdp.set_reward(s, 0, s + 1 == length ? 1.0 : 0.0);
    mdp.set_transition(s, 1, {{std::max(0, s - 1), 1.0}});
    mdp.set_reward(s, 1, -back_cost);
  }
  mdp.set_terminal(length);
  mdp.set_goal(length);
  return mdp;
}

// ---------------------------------------------------------------------------
// Task construction from an environment description.
// ---------------------------------------------------------------------------

struct EnvSpec {
  std::string kind = "grid";  // grid | push | chain
  std::vector<std::string> rows;
  int width = 5;
  int height = 5;
  int chain_length = 2;
  double slip = 0.0;
  double step_cost = 0.1;
  double back_cost = 0.1;
  int max_steps = 50;
};

inline Task make_task(const EnvSpec& spec, double gamma) {
  Task task;
  task.kind = spec.kind;
  task.max_steps = spec.max_steps;
  if (spec.max_steps < 1) throw ConfigError("max_steps", "must be positive");
  if (spec.kind == "grid") {
    GridEnv::Options opts;
    opts.slip = spec.slip;
    opts.step_cost = spec.step_cost;
    opts.gamma = gamma;
    auto env = spec.rows.empty() ? GridEnv::open(spec.width, spec.height, opts) : GridEnv(spec.rows, opts);
    task.mdp = env.to_mdp();
    task.action_names = {"up", "down", "left", "right"};
    task.features = [env](StateId s) {
      Cell c = env.decode(s);
      return std::vector<double>{double(c.x), double(c.y)};
    };
    task.view = [env](StateId s) { return env.view(s); };
  } else if (spec.kind == "push") {
    if (spec.rows.empty()) throw ConfigError("row", "push environment needs a layout");
    PushEnv env(spec.rows, gamma);
    task.mdp = env.to_mdp();
    task.action_names = {"up", "down", "left", "right", "push-up", "push-down", "push-left", "push-right"};
    task.features = [env](StateId s) {
      auto [a, b] = env.decode(s);
      return std::vector<double>{double(a.x), double(a.y), double(b.x), double(b.y)};
    };
    task.view = [env](StateId s) { return env.view(s); };
  } else if (spec.kind == "chain") {
    task.mdp = make_chain(spec.chain_length, gamma, spec.back_cost);
    task.action_names = {"advance", "back"};
    task.features = [](StateId s) { return std::vector<double>{double(s)}; };
    const int len = spec.chain_length;
    task.view = [len](StateId s) {
      GridView v;
      v.width = len + 1;
      v.height = 1;
      v.goals = {{len, 0}};
      v.agent = {s, 0};
      return v;
    };
  } else {
    throw ConfigError("env", "unknown environment kind '" + spec.kind + "'");
  }
  task.mdp.validate();
  return task;
}

}  // namespace seer
