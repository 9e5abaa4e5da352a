// Command-line front end for the pipeline stages.

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cqr/pipeline.h"
#include "cqr/stages.h"

namespace {

struct Globals {
  std::string config_file;
  std::string work_dir;
  std::vector<std::string> overrides;  // key=value
};

// Defaults, then the config file, then CQR_* variables, then --set.
cqr::PipelineConfig load_config(const Globals& g) {
  cqr::PipelineConfig c;
  if (!g.config_file.empty()) c = cqr::load_config_file(g.config_file, c);
  cqr::apply_env_overrides(c);
  if (!g.work_dir.empty()) c.work_dir = g.work_dir;
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    if (!cqr::set_config_item(c, kv.substr(0, eq), kv.substr(eq + 1))) {
      throw std::invalid_argument("unknown config key '" + kv.substr(0, eq) + "'");
    }
  }
  return c.resolved();
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative query rewriting pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("-w,--work-dir", g.work_dir, "artifact directory (overrides work_dir)");
  app.add_option("--set", g.overrides, "config override key=value, repeatable");

  auto* synth = app.add_subcommand("synth", "generate a synthetic world and its logs");
  app.add_subcommand("build-graph", "build the interaction graph from the history period of the logs");

  auto* index = app.add_subcommand("build-index", "build per-user collaborative indexes");
  bool traversal_only = false;
  std::string with_predictions;
  std::optional<std::size_t> cap;
  auto* t_flag = index->add_flag("--traversal-only", traversal_only, "graph traversal only");
  auto* p_opt = index->add_option("--with-predictions", with_predictions, "interchange response file");
  t_flag->excludes(p_opt);
  index->add_option("--cap", cap, "entries per user")->check(CLI::PositiveNumber);

  auto* predict = app.add_subcommand("predict-links", "predict user-entity links");
  std::string method = "cooccurrence";
  bool export_requests = false;
  auto* m_opt = predict->add_option("--method", method, "prediction method")->check(CLI::IsMember({"cooccurrence"}));
  predict->add_flag("--export-requests", export_requests, "write request file for an external model")->excludes(m_opt);

  app.add_subcommand("export-finetune", "write fine-tuning examples");

  auto* evaluate = app.add_subcommand("evaluate", "coverage tables and scorer metrics");
  bool coverage = false;
  bool metrics = false;
  std::string format = "table";
  evaluate->add_flag("--coverage", coverage, "unseen-interaction coverage");
  evaluate->add_flag("--metrics", metrics, "train and evaluate scorers (includes coverage)");
  evaluate->add_option("--format", format, "stdout format")->check(CLI::IsMember({"table", "jsonl"}));

  auto* rewrite = app.add_subcommand("rewrite", "rewrite one query");
  std::string user;
  std::string query;
  rewrite->add_option("--user", user, "user id")->required();
  rewrite->add_option("--query", query, "utterance")->required();

  auto* serve = app.add_subcommand("serve", "HTTP endpoint POST /rewrite");
  int port = 8080;
  std::string host = "127.0.0.1";
  int threads = 8;
  serve->add_option("--port", port, "listen port")->check(CLI::Range(1, 65535));
  serve->add_option("--host", host, "listen address");
  serve->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  auto* show = app.add_subcommand("config", "print the effective configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = load_config(g);
    auto* cmd = app.get_subcommands().front();
    const auto name = cmd->get_name();
    if (cmd == synth) {
      std::cout << cqr::synth_stage(config) << '\n';
    } else if (name == "build-graph") {
      std::cout << cqr::build_graph_stage(config) << '\n';
    } else if (cmd == index) {
      auto mode = config.index_mode;
      if (traversal_only) mode = cqr::IndexMode::kTraversal;
      if (!with_predictions.empty()) mode = cqr::IndexMode::kExternal;
      const std::size_t n = cap ? *cap : (mode == cqr::IndexMode::kTraversal ? config.traversal_cap
                                                                              : config.prediction_cap);
      std::cout << cqr::build_index_stage(config, mode, n, with_predictions) << '\n';
    } else if (cmd == predict) {
      std::cout << cqr::predict_links_stage(config, export_requests) << '\n';
    } else if (name == "export-finetune") {
      std::cout << cqr::export_finetune_stage(config) << '\n';
    } else if (cmd == evaluate) {
      if (!coverage && !metrics) coverage = true;
      const auto out = cqr::evaluate_stage(config, coverage, metrics,
                                           format == "jsonl" ? cqr::ReportFormat::kJsonl : cqr::ReportFormat::kTable);
      std::cout << out.report;
      std::cerr << out.summary << '\n';
    } else if (cmd == rewrite) {
      const cqr::RewriteService service(config);
      if (service.default_weights_used()) std::cerr << "note: no weights at " << config.weights_path.string()
                                                    << ", using default weights\n";
      std::cout << cqr::reply_json(service.answer(user, query)) << '\n';
    } else if (cmd == serve) {
      const cqr::RewriteService service(config);
      httplib::Server server;
      server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
      server.Post("/rewrite", [&service](const httplib::Request& req, httplib::Response& res) {
        try {
          const auto [u, q] = cqr::parse_rewrite_request(req.body);
          res.set_content(cqr::reply_json(service.answer(u, q)), "application/json");
        } catch (const std::invalid_argument& e) {
          res.status = 400;
          res.set_content(std::string("{\"error\":") + nlohmann::json(e.what()).dump() + "}", "application/json");
        }
      });
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "serving on http://" << host << ':' << port << "/rewrite\n";
      if (!server.listen(host, port)) {
        std::cerr << "error: cannot listen on " << host << ':' << port << '\n';
        return 1;
      }
    } else if (cmd == show) {
      for (const auto& [k, v] : cqr::config_items(config)) std::cout << k << " = " << v << '\n';
    }
  } catch (const cqr::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
