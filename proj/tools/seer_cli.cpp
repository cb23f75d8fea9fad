#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "seer/seer.hpp"
#include "seer/service.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "seer-out";
};

void add_common(CLI::App* sub, Common& c, bool with_out) {
  sub->add_option("--config", c.config, "Config file (key = value lines)")->required();
  sub->add_option("--seed", c.seed, "Override the config seed");
  if (with_out) sub->add_option("--out", c.out, "Output directory for metrics and checkpoints");
}

seer::RunConfig load(const Common& c) {
  seer::RunConfig cfg = seer::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_outputs(const std::string& dir, const seer::RunConfig& cfg, const seer::RunResult& res) {
  std::filesystem::create_directories(dir);
  seer::save_metrics_csv(dir + "/metrics.csv", res.metrics);
  seer::save_preferences(dir + "/preferences.jsonl", res.preferences);
  seer::save_ensemble(dir + "/ensemble.txt", res.ensemble, cfg.lambda);
  seer::save_graph(dir + "/graph.json", res.graph);
  seer::save_q_table(dir + "/q_table.txt", res.q);
}

void print_summary(const seer::RunResult& res) {
  seer::json j{{"steps", res.steps},
               {"feedback_used", res.feedback_used},
               {"return_mean", res.final_eval.return_mean},
               {"return_std", res.final_eval.return_std},
               {"success_rate", res.final_eval.success_rate}};
  std::cout << j.dump() << '\n';
}

std::vector<seer::ActionId> policy_from(const std::string& q_path, const seer::Task& task) {
  const seer::QTable q = seer::load_q_table(q_path);
  if (q.num_states() != task.mdp.num_states() || q.num_actions() != task.mdp.num_actions())
    throw seer::ConfigError("q", "table shape does not match the environment");
  return seer::greedy_policy(q);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based tabular RL with a graph replay memory"};
  app.require_subcommand(1);

  Common online_opts, offline_opts, verify_opts, serve_opts, eval_opts, render_opts;
  bool oracle_reward = false;
  int port = 8080;
  std::string host = "127.0.0.1";
  bool block_on_labels = false;
  bool linger = false;
  std::string q_path;
  int episodes = 0;

  auto* online = app.add_subcommand("train-online", "Online training with a scripted teacher");
  add_common(online, online_opts, true);
  online->add_flag("--oracle-reward", oracle_reward, "Oracle-reward baseline: learn from the true reward");

  auto* offline = app.add_subcommand("train-offline", "Offline training on a fixed dataset");
  add_common(offline, offline_opts, true);

  auto* verify = app.add_subcommand("verify-theorem", "Brute-force checks of the conservative backup");
  add_common(verify, verify_opts, false);

  auto* serve = app.add_subcommand("serve", "Online training with labels from the HTTP queue");
  add_common(serve, serve_opts, true);
  serve->add_option("--port", port, "Listen port (0 picks a free one)");
  serve->add_option("--host", host, "Listen address");
  serve->add_flag("--block-on-labels", block_on_labels, "Wait for every query of a session to be answered");
  serve->add_flag("--linger", linger, "Keep serving after training finishes until interrupted");

  auto* eval = app.add_subcommand("eval", "Evaluate the greedy policy of a saved Q table");
  add_common(eval, eval_opts, false);
  eval->add_option("--q", q_path, "Q table file")->required();
  eval->add_option("--episodes", episodes, "Evaluation episodes (default: eval_episodes)");

  auto* render = app.add_subcommand("render-trajectory", "Print one episode as ASCII frames");
  add_common(render, render_opts, false);
  render->add_option("--q", q_path, "Q table file; uniform-random actions when omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*online) {
      const auto cfg = load(online_opts);
      const auto task = seer::make_task(cfg);
      seer::RunHooks hooks;
      hooks.oracle_reward = oracle_reward;
      hooks.stop = &g_stop;
      const auto res = seer::run_online(cfg, task, hooks);
      write_outputs(online_opts.out, cfg, res);
      print_summary(res);
      return 0;
    }
    if (*offline) {
      const auto cfg = load(offline_opts);
      const auto task = seer::make_task(cfg);
      seer::OfflineData data = seer::generate_offline_data(cfg, task);
      if (!cfg.offline_transitions.empty()) data.transitions = seer::load_transitions(cfg.offline_transitions);
      if (!cfg.offline_preferences.empty()) data.preferences = seer::load_preferences(cfg.offline_preferences);
      const auto res = seer::run_offline(cfg, task, data.transitions, data.preferences);
      write_outputs(offline_opts.out, cfg, res);
      seer::save_transitions(offline_opts.out + "/transitions.jsonl", data.transitions);
      print_summary(res);
      return 0;
    }
    if (*verify) {
      seer::VerifyConfig cfg = seer::load_verify_config(verify_opts.config);
      if (verify_opts.seed) cfg.seed = *verify_opts.seed;
      const auto rep = seer::run_theorem_suite(cfg);
      std::cout << rep.to_json().dump(2) << '\n';
      return rep.passed() ? 0 : 1;
    }
    if (*serve) {
      auto cfg = load(serve_opts);
      cfg.mode = "serve";
      if (block_on_labels) cfg.block_on_labels = true;
      const auto task = seer::make_task(cfg);
      seer::ServeState state(cfg, task);
      seer::LabelServer server(state);
      const int bound = server.start(host, port);
      std::cerr << "serving on http://" << host << ':' << bound << '\n';
      const auto res = seer::run_served(cfg, task, state, &g_stop);
      write_outputs(serve_opts.out, cfg, res);
      print_summary(res);
      while (linger && !g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      server.stop();
      return 0;
    }
    if (*eval) {
      const auto cfg = load(eval_opts);
      const auto task = seer::make_task(cfg);
      const auto policy = policy_from(q_path, task);
      const auto ev = seer::evaluate(task.mdp, policy, episodes > 0 ? episodes : cfg.eval_episodes, cfg.seed,
                                     task.max_steps);
      std::cout << seer::json{{"episodes", ev.episodes},
                              {"return_mean", ev.return_mean},
                              {"return_std", ev.return_std},
                              {"success_rate", ev.success_rate}}
                       .dump()
                << '\n';
      return 0;
    }
    if (*render) {
      const auto cfg = load(render_opts);
      const auto task = seer::make_task(cfg);
      seer::Policy pi;
      if (!q_path.empty()) {
        const auto greedy = policy_from(q_path, task);
        pi = [greedy](seer::StateId s, seer::Rng&) { return greedy[s]; };
      } else {
        const int n = task.mdp.num_actions();
        pi = [n](seer::StateId, seer::Rng& rng) { return std::uniform_int_distribution<seer::ActionId>(0, n - 1)(rng); };
      }
      const auto traj = seer::rollout(task.mdp, pi, cfg.seed, task.max_steps);
      if (traj.steps.empty()) {
        std::cout << "episode starts in a terminal state\n";
        return 0;
      }
      std::cout << "step 0\n" << seer::render_ascii(task.view(traj.steps.front().state));
      for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const auto& tr = traj.steps[t];
        std::cout << "\nstep " << t + 1 << " (" << task.action_names[tr.action] << ")\n"
                  << seer::render_ascii(task.view(tr.next_state));
      }
      std::cout << "\nreturn " << traj.true_return << (traj.success ? ", reached a goal" : "") << '\n';
      return 0;
    }
  } catch (const seer::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
