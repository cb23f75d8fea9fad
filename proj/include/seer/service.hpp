#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "seer/config.hpp"
#include "seer/envs.hpp"
#include "seer/orchestrator.hpp"
#include "seer/persistence.hpp"
#include "seer/teacher.hpp"

namespace seer {

inline json cell_json(const Cell& c) { return json::array({c.x, c.y}); }

inline json cells_json(const std::vector<Cell>& cells) {
  json out = json::array();
  for (const auto& c : cells) out.push_back(cell_json(c));
  return out;
}

// A segment as a list of renderable grid frames.
inline json segment_view_json(const Segment& seg, const Task& task) {
  json steps = json::array();
  for (std::size_t t = 0; t < seg.steps.size(); ++t) {
    const auto& st = seg.steps[t];
    const GridView v = task.view(st.state);
    steps.push_back({{"state", st.state},
                     {"action", st.action},
                     {"action_name", task.action_names.at(st.action)},
                     {"valid", static_cast<int>(t) < seg.valid_length},
                     {"agent", cell_json(v.agent)},
                     {"box", v.box ? cell_json(*v.box) : json(nullptr)}});
  }
  return {{"episode_id", seg.episode_id},
          {"start_index", seg.start_index},
          {"length", seg.steps.size()},
          {"valid_length", seg.valid_length},
          {"truncated", seg.truncated},
          {"steps", steps}};
}

// Everything the labeler needs to draw both segments: static layout, per-step
// entity positions and action names.
inline json query_payload(const HumanQuery& q, const Task& task) {
  const GridView v = task.view(q.segment_a.steps.empty() ? 0 : q.segment_a.steps.front().state);
  return {{"query_id", q.id},
          {"created_step", q.created_step},
          {"env", task.kind},
          {"layout",
           {{"width", v.width},
            {"height", v.height},
            {"walls", cells_json(v.walls)},
            {"goals", cells_json(v.goals)},
            {"hazards", cells_json(v.hazards)},
            {"targets", cells_json(v.targets)}}},
          {"action_names", task.action_names},
          {"segment_a", segment_view_json(q.segment_a, task)},
          {"segment_b", segment_view_json(q.segment_b, task)}};
}

inline json config_json(const RunConfig& c) {
  return {{"mode", c.mode},
          {"env", c.env.kind},
          {"rows", c.env.rows},
          {"width", c.env.width},
          {"height", c.env.height},
          {"max_steps", c.env.max_steps},
          {"query_frequency", c.query_frequency},
          {"labels_per_session", c.labels_per_session},
          {"feedback_budget", c.feedback_budget},
          {"segment_length", c.segment_length},
          {"lambda", c.lambda},
          {"eta", c.eta},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"seed", c.seed},
          {"pretrain_steps", c.pretrain_steps},
          {"total_steps", c.total_steps},
          {"capacity", c.capacity},
          {"block_on_labels", c.block_on_labels}};
}

// State shared between the training loop and the HTTP handlers: the label
// queue, progress counters and an immutable metrics snapshot.
class ServeState {
 public:
  ServeState(const RunConfig& cfg, const Task& task)
      : book(cfg.lambda), config_(config_json(cfg)), budget_(cfg.feedback_budget), task_(task) {}

  HumanQueryBook book;
  std::atomic<std::int64_t> step{0};
  std::atomic<int> feedback_used{0};
  std::atomic<bool> finished{false};

  void publish(const MetricsRow& row) {
    std::lock_guard lock(mu_);
    auto next = std::make_shared<std::vector<MetricsRow>>(*metrics_);
    next->push_back(row);
    metrics_ = std::move(next);
  }
  std::shared_ptr<const std::vector<MetricsRow>> metrics() const {
    std::lock_guard lock(mu_);
    return metrics_;
  }

  const json& config() const { return config_; }
  int budget() const { return budget_; }
  const Task& task() const { return task_; }

 private:
  json config_;
  int budget_;
  const Task& task_;
  mutable std::mutex mu_;
  std::shared_ptr<const std::vector<MetricsRow>> metrics_ = std::make_shared<std::vector<MetricsRow>>();
};

namespace detail {

inline void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace detail

// Registers the /api routes. Handlers touch only the query book and the
// published snapshots.
inline void install_routes(httplib::Server& server, ServeState& state) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Get("/api/query", [&state](const httplib::Request&, httplib::Response& res) {
    auto q = state.book.next_pending();
    if (!q) {
      res.status = 204;
      return;
    }
    detail::send_json(res, query_payload(*q, state.task()));
  });

  server.Post("/api/label", [&state](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("query_id") || !body.contains("choice") ||
        !body["query_id"].is_number_integer() || !body["choice"].is_string()) {
      detail::send_json(res, {{"error", "expected {\"query_id\": int, \"choice\": string}"}}, 400);
      return;
    }
    const auto choice = parse_choice(body["choice"].get<std::string>());
    if (!choice) {
      detail::send_json(res, {{"error", "choice must be one of a, b, left, right, equal, skip"}}, 400);
      return;
    }
    const auto id = body["query_id"].get<std::int64_t>();
    const auto status = id < 1 ? SubmitStatus::rejected : state.book.submit(static_cast<std::uint64_t>(id), *choice);
    switch (status) {
      case SubmitStatus::accepted:
        detail::send_json(res, {{"status", "accepted"}});
        break;
      case SubmitStatus::discarded:
        detail::send_json(res, {{"status", "discarded"}});
        break;
      case SubmitStatus::rejected:
        detail::send_json(res, {{"error", "unknown or already answered query"}}, 409);
        break;
    }
  });

  server.Get("/api/metrics", [&state](const httplib::Request& req, httplib::Response& res) {
    std::int64_t since = -1;
    if (req.has_param("since")) {
      const std::string v = req.get_param_value("since");
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), since);
      if (ec != std::errc() || ptr != v.data() + v.size()) {
        detail::send_json(res, {{"error", "since must be an integer step"}}, 400);
        return;
      }
    }
    json rows = json::array();
    for (const auto& r : *state.metrics())
      if (r.step > since) rows.push_back(metrics_to_json(r));
    detail::send_json(res, rows);
  });

  server.Get("/api/status", [&state](const httplib::Request&, httplib::Response& res) {
    detail::send_json(res, {{"config", state.config()},
                            {"step", state.step.load()},
                            {"feedback_used", state.feedback_used.load()},
                            {"feedback_budget", state.budget()},
                            {"pending_queries", state.book.pending()},
                            {"finished", state.finished.load()}});
  });
}

// HTTP server on a background thread.
class LabelServer {
 public:
  explicit LabelServer(ServeState& state) { install_routes(server_, state); }
  ~LabelServer() { stop(); }

  // Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host, int port) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

// Online training whose labels come from the HTTP queue.
inline RunResult run_served(const RunConfig& cfg, const Task& task, ServeState& state,
                            const std::atomic<bool>* stop = nullptr) {
  HumanChannel channel(state.book, cfg.block_on_labels, stop);
  RunHooks hooks;
  hooks.channel = &channel;
  hooks.stop = stop;
  hooks.on_metrics = [&state](const MetricsRow& row) { state.publish(row); };
  hooks.on_progress = [&state](std::int64_t step, int used) {
    state.step.store(step);
    state.feedback_used.store(used);
  };
  RunResult res = run_online(cfg, task, hooks);
  state.finished.store(true);
  return res;
}

}  // namespace seer
