#include <gtest/gtest.h>

#include "httplib.h"
#include "seer/seer.hpp"
#include "seer/service.hpp"

namespace seer {
namespace {

Segment two_steps(StateId a, StateId b) {
  Segment seg;
  seg.steps = {{a, 3}, {b, 1}};
  seg.valid_length = 2;
  return seg;
}

class Service : public ::testing::Test {
 protected:
  Service() : cfg_(load_run_config(SEER_FIXTURE_DIR "/grid5.cfg")), task_(make_task(cfg_)), state_(cfg_, task_) {}

  void SetUp() override {
    server_ = std::make_unique<LabelServer>(state_);
    port_ = server_->start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override { server_->stop(); }

  httplib::Result post_label(std::int64_t id, const std::string& choice) {
    return client_->Post("/api/label", json{{"query_id", id}, {"choice", choice}}.dump(), "application/json");
  }

  RunConfig cfg_;
  Task task_;
  ServeState state_;
  std::unique_ptr<LabelServer> server_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

TEST_F(Service, EmptyQueueGives204) {
  auto res = client_->Get("/api/query");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
}

TEST_F(Service, QueryPayloadDescribesBothSegments) {
  const auto id = state_.book.enqueue(two_steps(0, 1), two_steps(5, 6), 400);
  auto res = client_->Get("/api/query");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const json body = json::parse(res->body);
  EXPECT_EQ(body["query_id"].get<std::uint64_t>(), id);
  EXPECT_EQ(body["created_step"], 400);
  EXPECT_EQ(body["env"], "grid");
  EXPECT_EQ(body["layout"]["width"], 5);
  EXPECT_EQ(body["segment_a"]["steps"].size(), 2u);
  EXPECT_EQ(body["segment_a"]["steps"][0]["action_name"], "right");
  EXPECT_EQ(body["segment_b"]["steps"][1]["state"], 6);
}

TEST_F(Service, LabelAcceptThenDuplicate) {
  const auto id = state_.book.enqueue(two_steps(0, 1), two_steps(5, 6), 0);
  auto first = post_label(static_cast<std::int64_t>(id), "left");
  ASSERT_TRUE(first);
  EXPECT_EQ(first->status, 200);
  EXPECT_EQ(json::parse(first->body)["status"], "accepted");
  auto again = post_label(static_cast<std::int64_t>(id), "right");
  ASSERT_TRUE(again);
  EXPECT_EQ(again->status, 409);
  auto unknown = post_label(12345, "a");
  EXPECT_EQ(unknown->status, 409);
  const auto recs = state_.book.drain();
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].label, (Label{1.0 - cfg_.lambda, cfg_.lambda}));
  EXPECT_EQ(recs[0].segment_b.steps[0].state, 5);
}

TEST_F(Service, SkipIsDiscarded) {
  const auto id = state_.book.enqueue(two_steps(0, 1), two_steps(5, 6), 0);
  auto res = post_label(static_cast<std::int64_t>(id), "skip");
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["status"], "discarded");
  EXPECT_TRUE(state_.book.drain().empty());
  EXPECT_EQ(client_->Get("/api/query")->status, 204);
}

TEST_F(Service, MalformedLabelsGive400) {
  EXPECT_EQ(client_->Post("/api/label", "not json", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/api/label", R"({"query_id": 1})", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/api/label", R"({"query_id": "x", "choice": "a"})", "application/json")->status, 400);
  EXPECT_EQ(post_label(1, "maybe")->status, 400);
}

TEST_F(Service, MetricsSinceFilters) {
  for (int s : {100, 200, 300}) {
    MetricsRow row;
    row.step = s;
    state_.publish(row);
  }
  auto all = client_->Get("/api/metrics");
  EXPECT_EQ(json::parse(all->body).size(), 3u);
  auto later = client_->Get("/api/metrics?since=200");
  const json rows = json::parse(later->body);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["step"], 300);
  EXPECT_EQ(client_->Get("/api/metrics?since=abc")->status, 400);
}

TEST_F(Service, StatusEchoesConfig) {
  state_.book.enqueue(two_steps(0, 1), two_steps(5, 6), 0);
  const json body = json::parse(client_->Get("/api/status")->body);
  EXPECT_EQ(body["feedback_budget"], cfg_.feedback_budget);
  EXPECT_EQ(body["feedback_used"], 0);
  EXPECT_EQ(body["pending_queries"], 1);
  EXPECT_EQ(body["finished"], false);
  EXPECT_EQ(body["config"]["eta"], cfg_.eta);
}

TEST_F(Service, ServedRunConsumesPostedLabels) {
  RunConfig cfg = cfg_;
  cfg.total_steps = 2000;
  cfg.block_on_labels = true;
  std::atomic<bool> stop{false};
  std::atomic<int> posted{0};
  std::thread labeler([&] {
    httplib::Client c("127.0.0.1", port_);
    while (!state_.finished.load()) {
      auto q = c.Get("/api/query");
      if (q && q->status == 200) {
        const auto id = json::parse(q->body)["query_id"].get<std::int64_t>();
        auto r = c.Post("/api/label", json{{"query_id", id}, {"choice", "a"}}.dump(), "application/json");
        if (r && r->status == 200) ++posted;
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
    }
  });
  const RunResult res = run_served(cfg, task_, state_, &stop);
  labeler.join();
  EXPECT_TRUE(state_.finished.load());
  EXPECT_EQ(res.feedback_used, posted.load());
  EXPECT_EQ(res.feedback_used, cfg.feedback_budget);
  for (const auto& p : res.preferences) EXPECT_EQ(p.raw_label, (Label{1.0, 0.0}));
  const json status = json::parse(client_->Get("/api/status")->body);
  EXPECT_EQ(status["feedback_used"], cfg.feedback_budget);
  EXPECT_EQ(status["finished"], true);
  EXPECT_FALSE(json::parse(client_->Get("/api/metrics")->body).empty());
}

}  // namespace
}  // namespace seer
