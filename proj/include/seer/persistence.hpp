#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "seer/orchestrator.hpp"
#include "seer/q_table.hpp"
#include "seer/replay_graph.hpp"
#include "seer/reward_model.hpp"

namespace seer {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON conversions
// ---------------------------------------------------------------------------

inline json segment_to_json(const Segment& seg) {
  json steps = json::array();
  for (const auto& st : seg.steps) steps.push_back({st.state, st.action});
  return {{"episode_id", seg.episode_id},
          {"start_index", seg.start_index},
          {"valid_length", seg.valid_length},
          {"truncated", seg.truncated},
          {"steps", steps}};
}

inline Segment segment_from_json(const json& j) {
  Segment seg;
  seg.episode_id = j.at("episode_id").get<int>();
  seg.start_index = j.at("start_index").get<int>();
  seg.valid_length = j.at("valid_length").get<int>();
  seg.truncated = j.at("truncated").get<bool>();
  for (const auto& st : j.at("steps")) seg.steps.push_back({st.at(0).get<StateId>(), st.at(1).get<ActionId>()});
  if (seg.valid_length < 0 || seg.valid_length > static_cast<int>(seg.steps.size()))
    throw ContractError("segment: valid_length out of range");
  return seg;
}

inline json preference_to_json(const PreferenceRecord& r) {
  return {{"segment_a", segment_to_json(r.segment_a)},
          {"segment_b", segment_to_json(r.segment_b)},
          {"raw_label", {r.raw_label[0], r.raw_label[1]}},
          {"label", {r.label[0], r.label[1]}},
          {"source", to_string(r.source)},
          {"timestamp", r.timestamp}};
}

inline PreferenceRecord preference_from_json(const json& j) {
  PreferenceRecord r;
  r.segment_a = segment_from_json(j.at("segment_a"));
  r.segment_b = segment_from_json(j.at("segment_b"));
  r.raw_label = {j.at("raw_label").at(0).get<double>(), j.at("raw_label").at(1).get<double>()};
  r.label = {j.at("label").at(0).get<double>(), j.at("label").at(1).get<double>()};
  const auto src = j.at("source").get<std::string>();
  if (src == "scripted") r.source = LabelSource::scripted;
  else if (src == "human") r.source = LabelSource::human;
  else throw ContractError("preference: unknown source '" + src + "'");
  r.timestamp = j.at("timestamp").get<std::int64_t>();
  return r;
}

inline json graph_to_json(const ReplayGraph& g) {
  json vertices = json::array();
  for (StateId s : g.vertex_order()) {
    const auto* v = g.find(s);
    json actions = json::array();
    for (const auto& [a, rec] : v->actions) {
      json edges = json::array();
      for (const auto& [next, e] : rec.edges)
        edges.push_back({{"next", next}, {"reward", e.reward}, {"count", e.count}, {"done", e.done}});
      actions.push_back({{"action", a}, {"q_hat", rec.q_hat}, {"total", rec.total}, {"edges", edges}});
    }
    vertices.push_back({{"state", s}, {"actions", actions}});
  }
  json log = json::array();
  for (const auto& e : g.log()) log.push_back({e.episode, e.state, e.action, e.next_state});
  return {{"capacity", g.capacity()}, {"vertices", vertices}, {"log", log}};
}

inline ReplayGraph graph_from_json(const json& j) {
  std::vector<VertexRecord> vertices;
  for (const auto& vj : j.at("vertices")) {
    VertexRecord v;
    v.state = vj.at("state").get<StateId>();
    for (const auto& aj : vj.at("actions")) {
      ActionRecord rec;
      rec.q_hat = aj.at("q_hat").get<double>();
      rec.total = aj.at("total").get<std::int64_t>();
      for (const auto& ej : aj.at("edges"))
        rec.edges[ej.at("next").get<StateId>()] =
            EdgeRecord{ej.at("reward").get<double>(), ej.at("count").get<std::int64_t>(), ej.at("done").get<bool>()};
      v.actions[aj.at("action").get<ActionId>()] = std::move(rec);
    }
    vertices.push_back(std::move(v));
  }
  std::deque<LogEntry> log;
  for (const auto& e : j.at("log"))
    log.push_back({e.at(0).get<int>(), e.at(1).get<StateId>(), e.at(2).get<ActionId>(), e.at(3).get<StateId>()});
  return ReplayGraph::restore(j.at("capacity").get<std::size_t>(), std::move(vertices), std::move(log));
}

inline json metrics_to_json(const MetricsRow& r) {
  return {{"step", r.step},
          {"return_mean", r.return_mean},
          {"return_std", r.return_std},
          {"success_rate", r.success_rate},
          {"pref_acc", r.pref_acc},
          {"mean_q", r.mean_q},
          {"mc_value", r.mc_value},
          {"q_bias", r.q_bias},
          {"feedback_used", r.feedback_used},
          {"td_loss", r.td_loss},
          {"reg_loss", r.reg_loss},
          {"reward_loss", r.reward_loss}};
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}
inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return in;
}

inline double parse_double(const std::string& tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ContractError("cannot parse number '" + tok + "'");
  return v;
}

}  // namespace detail

inline void save_preferences(const std::string& path, std::span<const PreferenceRecord> records) {
  auto out = detail::open_out(path);
  for (const auto& r : records) out << preference_to_json(r).dump() << '\n';
}

inline std::vector<PreferenceRecord> load_preferences(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<PreferenceRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(preference_from_json(json::parse(line)));
  return out;
}

// One transition per line; episodes are regrouped on load.
inline void save_transitions(const std::string& path, std::span<const Trajectory> data) {
  auto out = detail::open_out(path);
  for (const auto& t : data)
    for (const auto& tr : t.steps)
      out << json{{"episode", t.episode_id},
                  {"state", tr.state},
                  {"action", tr.action},
                  {"next_state", tr.next_state},
                  {"done", tr.done}}
                 .dump()
          << '\n';
}

inline std::vector<Trajectory> load_transitions(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const int ep = j.at("episode").get<int>();
    if (out.empty() || out.back().episode_id != ep) {
      out.emplace_back();
      out.back().episode_id = ep;
    }
    out.back().steps.push_back({j.at("state").get<StateId>(), j.at("action").get<ActionId>(),
                                j.at("next_state").get<StateId>(), j.at("done").get<bool>(), kUnlabeled});
  }
  return out;
}

// Text format: "ensemble <states> <actions> <members> <lambda>", then one
// line of parameters per member.
inline void save_ensemble(const std::string& path, const RewardEnsemble& ens, double lambda) {
  auto out = detail::open_out(path);
  out << "ensemble " << ens.num_states() << ' ' << ens.num_actions() << ' ' << ens.num_members() << ' '
      << format_double(lambda) << '\n';
  for (int m = 0; m < ens.num_members(); ++m) {
    const auto& p = ens.parameters(m);
    for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << format_double(p[i]);
    out << '\n';
  }
}

inline RewardEnsemble load_ensemble(const std::string& path, double* lambda = nullptr) {
  auto in = detail::open_in(path);
  std::string tag, lam;
  int s = 0, a = 0, m = 0;
  if (!(in >> tag >> s >> a >> m >> lam) || tag != "ensemble") throw ContractError("ensemble file: bad header");
  RewardEnsemble ens(s, a, m);
  if (lambda) *lambda = detail::parse_double(lam);
  std::string tok;
  for (int k = 0; k < m; ++k)
    for (auto& v : ens.parameters(k)) {
      if (!(in >> tok)) throw ContractError("ensemble file: truncated");
      v = detail::parse_double(tok);
    }
  return ens;
}

inline void save_q_table(const std::string& path, const QTable& q) {
  auto out = detail::open_out(path);
  out << "qtable " << q.num_states() << ' ' << q.num_actions() << '\n';
  for (StateId s = 0; s < q.num_states(); ++s) {
    for (ActionId a = 0; a < q.num_actions(); ++a) out << (a ? " " : "") << format_double(q(s, a));
    out << '\n';
  }
}

inline QTable load_q_table(const std::string& path) {
  auto in = detail::open_in(path);
  std::string tag, tok;
  int s = 0, a = 0;
  if (!(in >> tag >> s >> a) || tag != "qtable") throw ContractError("q table file: bad header");
  QTable q(s, a);
  for (auto& v : q.values()) {
    if (!(in >> tok)) throw ContractError("q table file: truncated");
    v = detail::parse_double(tok);
  }
  return q;
}

inline void save_graph(const std::string& path, const ReplayGraph& g) { detail::open_out(path) << graph_to_json(g).dump(); }

inline ReplayGraph load_graph(const std::string& path) {
  auto in = detail::open_in(path);
  return graph_from_json(json::parse(in));
}

inline void save_metrics_csv(const std::string& path, std::span<const MetricsRow> rows) {
  auto out = detail::open_out(path);
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << to_csv(r) << '\n';
}

}  // namespace seer
