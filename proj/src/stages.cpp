#include "cqr/stages.h"

#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cqr/log_io.h"
#include "cqr/text.h"

namespace cqr {

namespace fs = std::filesystem;

MissingArtifact::MissingArtifact(const std::string& what, const fs::path& path, std::string_view producer)
    : std::runtime_error("missing " + what + " at " + path.string() + "; run `cqr " + std::string(producer) +
                         "` first"),
      path_(path) {}

namespace {

void require_file(const fs::path& path, const std::string& what, std::string_view producer) {
  if (!fs::is_regular_file(path)) throw MissingArtifact(what, path, producer);
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_out(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<LogRecord> load_logs(const PipelineConfig& c) {
  require_file(c.logs_path, "logs", "synth");
  auto parsed = parse_log_file(c.logs_path);
  if (!parsed.rejects.empty()) {
    const auto& r = parsed.rejects.front();
    throw std::runtime_error(c.logs_path.string() + ": " + std::to_string(parsed.rejects.size()) +
                             " malformed lines (first at line " + std::to_string(r.line_number) + ": " + r.reason +
                             ")");
  }
  return std::move(parsed.records);
}

Fig load_graph_artifact(const PipelineConfig& c) {
  require_file(c.graph_path, "graph", "build-graph");
  return load_graph_file(c.graph_path);
}

std::vector<CollaborativeIndex> load_index_artifact(const PipelineConfig& c) {
  require_file(c.index_path, "collaborative index", "build-index");
  std::ifstream in(c.index_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + c.index_path.string());
  return read_collaborative_indexes(in);
}

PipelineConfig checked(const PipelineConfig& config) {
  config.validate();
  return config.resolved();
}

}  // namespace

std::string synth_stage(const PipelineConfig& config) {
  const auto c = checked(config);
  const auto world = generate_world(c.world);
  const auto logs = generate_logs(world);
  ensure_parent(c.logs_path);
  write_log_file(c.logs_path, logs.records);
  auto manifest = open_out(c.work_dir / "world_manifest.txt");
  write_world_manifest(manifest, world, logs);
  return "synth: " + std::to_string(world.users.size()) + " users, " + std::to_string(world.entities.size()) +
         " entities, " + std::to_string(logs.records.size()) + " records -> " + c.logs_path.string();
}

std::string build_graph_stage(const PipelineConfig& config) {
  const auto c = checked(config);
  const auto records = load_logs(c);
  const auto end = history_end(c.world);
  std::vector<LogRecord> history;
  for (const auto& r : records) {
    if (r.timestamp < end) history.push_back(r);
  }
  const auto graph = build_graph(history, GraphOptions{c.defect_threshold});
  ensure_parent(c.graph_path);
  save_graph_file(c.graph_path, graph);
  return "build-graph: " + std::to_string(graph.num_users()) + " users, " + std::to_string(graph.num_entities()) +
         " entities, " + std::to_string(graph.num_edges()) + " edges -> " + c.graph_path.string();
}

std::string build_index_stage(const PipelineConfig& config, IndexMode mode, std::size_t cap,
                              const fs::path& predictions) {
  if (cap < 1) throw std::invalid_argument("cap must be >= 1");
  const auto c = checked(config);
  const auto graph = load_graph_artifact(c);
  PredictionsFile preds;
  if (mode == IndexMode::kExternal) {
    const auto path = predictions.empty() ? c.predictions_path : predictions;
    require_file(path, "predictions file", "predict-links");
    preds = read_predictions_file(path);
  }
  const auto indexes = build_collaborative_indexes(graph, mode, cap, c.history_cap, c.predictions_per_user,
                                                   mode == IndexMode::kExternal ? &preds : nullptr);
  auto out = open_out(c.index_path);
  write_collaborative_indexes(out, indexes);
  if (!out) throw std::runtime_error("write failed for " + c.index_path.string());
  std::size_t entries = 0;
  for (const auto& i : indexes) entries += i.entries.size();
  std::string msg = "build-index: " + std::string(to_string(mode)) + " cap " + std::to_string(cap) + ", " +
                    std::to_string(indexes.size()) + " users, " + std::to_string(entries) + " entries -> " +
                    c.index_path.string();
  if (!preds.rejects.empty()) msg += " (" + std::to_string(preds.rejects.size()) + " prediction lines rejected)";
  return msg;
}

std::string predict_links_stage(const PipelineConfig& config, bool export_requests) {
  const auto c = checked(config);
  const auto graph = load_graph_artifact(c);
  if (export_requests) {
    const auto path = c.work_dir / "prediction_requests.jsonl";
    ensure_parent(path);
    const auto requests = build_prediction_requests(graph);
    write_predictions_request(path, requests);
    return "predict-links: " + std::to_string(requests.size()) + " requests -> " + path.string();
  }
  std::vector<std::pair<std::string, PredictedNames>> lines;
  for (const auto& u : graph.users()) {
    std::map<Domain, std::vector<std::string>> by_domain;
    for (const auto& link : cooccurrence_predict(graph, u, c.predictions_per_user)) {
      const auto& e = graph.entity(*graph.find_entity(link.entity_id));
      by_domain[e.domain].push_back(e.name);
    }
    for (auto& [d, names] : by_domain) lines.push_back({u, PredictedNames{d, std::move(names)}});
  }
  auto out = open_out(c.predictions_path);
  write_predictions_response(out, lines);
  if (!out) throw std::runtime_error("write failed for " + c.predictions_path.string());
  return "predict-links: " + std::to_string(lines.size()) + " response lines -> " + c.predictions_path.string();
}

std::string export_finetune_stage(const PipelineConfig& config) {
  const auto c = checked(config);
  const auto examples = export_finetune_examples(load_logs(c));
  const auto path = c.work_dir / "finetune.jsonl";
  auto out = open_out(path);
  write_finetune_jsonl(out, examples);
  return "export-finetune: " + std::to_string(examples.size()) + " examples -> " + path.string();
}

EvaluateOutput evaluate_stage(const PipelineConfig& config, bool coverage, bool metrics, ReportFormat format) {
  if (!coverage && !metrics) throw std::invalid_argument("evaluate needs --coverage and/or --metrics");
  const auto c = checked(config);
  const auto records = load_logs(c);
  auto graph = std::make_shared<const Fig>(load_graph_artifact(c));
  EvaluateOutput result;
  std::ostringstream selected;
  auto emit = [&](const std::string& name, const std::string& table, const std::string& jsonl) {
    write_text(c.report_dir / (name + ".txt"), table);
    write_text(c.report_dir / (name + ".jsonl"), jsonl);
    selected << (format == ReportFormat::kTable ? table : jsonl);
  };
  std::vector<std::string> parts;
  if (metrics) {
    const auto indexes = load_index_artifact(c);
    const auto report = run_experiment(records, c, graph, &indexes);
    std::ostringstream t;
    std::ostringstream j;
    write_metrics_table(t, report);
    write_metrics_jsonl(j, report);
    write_coverage_table(t, report.coverage);
    write_coverage_jsonl(j, report.coverage);
    emit("metrics", t.str(), j.str());
    ensure_parent(c.weights_path);
    for (const auto& s : report.scorers) {
      if (s.name == "full") save_weights_file(c.weights_path, s.weights);
    }
    parts.push_back("metrics -> " + (c.report_dir / "metrics.txt").string() + ", weights -> " +
                    c.weights_path.string());
  } else {
    // The experiment already reports coverage; only run it alone when asked.
    const auto report = run_coverage(records, c, graph);
    std::ostringstream t;
    std::ostringstream j;
    write_coverage_table(t, report);
    write_coverage_jsonl(j, report);
    emit("coverage", t.str(), j.str());
    parts.push_back("coverage -> " + (c.report_dir / "coverage.txt").string());
  }
  result.summary = "evaluate: ";
  for (std::size_t i = 0; i < parts.size(); ++i) result.summary += (i ? "; " : "") + parts[i];
  result.report = selected.str();
  return result;
}

RewriteService::RewriteService(const PipelineConfig& config) {
  const auto c = checked(config);
  auto graph = std::make_shared<const Fig>(load_graph_artifact(c));
  const auto indexes = load_index_artifact(c);
  EngineOptions o;
  o.history_cap = c.history_cap;
  o.encoder = {c.embedding_dim, c.hash_seed};
  o.retrieval_k = c.retrieval_k;
  engine_ = std::make_unique<const RewriteEngine>(std::move(graph), indexes, o);
  if (fs::is_regular_file(c.weights_path)) {
    weights_ = load_weights_file(c.weights_path);
  } else {
    weights_ = default_weights();
    default_weights_ = true;
  }
  threshold_ = c.trigger_threshold;
}

RewriteReply RewriteService::answer(const std::string& user_id, std::string_view query) const {
  const auto r = engine_->rewrite(user_id, query, weights_, threshold_);
  RewriteReply reply;
  reply.score = r.decision.score;
  if (r.decision.triggered) {
    reply.triggered = true;
    reply.rewrite = *r.decision.rewrite;
  }
  return reply;
}

std::string reply_json(const RewriteReply& reply) {
  nlohmann::json j;
  j["triggered"] = reply.triggered;
  j["rewrite"] = reply.rewrite;
  j["score"] = reply.score;
  return j.dump();
}

std::pair<std::string, std::string> parse_rewrite_request(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("request is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("request must be a JSON object");
  for (const char* key : {"user_id", "query"}) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw std::invalid_argument(std::string("request needs a string field \"") + key + "\"");
    }
  }
  return {j["user_id"].get<std::string>(), j["query"].get<std::string>()};
}

}  // namespace cqr
