#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cqr/pipeline.h"

namespace cqr {

// Artifact-level pipeline stages shared by the command-line tool, the Python
// module and the tests. Every stage reads and writes files named by a
// resolved PipelineConfig and returns a one-line summary.

/// A prerequisite file is absent. The message names the stage that makes it.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const std::string& what, const std::filesystem::path& path, std::string_view producer);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Synthetic world and logs: writes logs_path and work_dir/world_manifest.txt.
std::string synth_stage(const PipelineConfig& config);

/// Graph over the history period (records before history_end(world)).
std::string build_graph_stage(const PipelineConfig& config);

/// Collaborative indexes for every user of the graph. kExternal reads
/// `predictions` (or predictions_path when empty).
std::string build_index_stage(const PipelineConfig& config, IndexMode mode, std::size_t cap,
                              const std::filesystem::path& predictions = {});

/// Co-occurrence predictions written as an interchange response file at
/// predictions_path, or, with export_requests, the request file at
/// work_dir/prediction_requests.jsonl for an external model.
std::string predict_links_stage(const PipelineConfig& config, bool export_requests);

/// Fine-tuning examples from the logs at work_dir/finetune.jsonl.
std::string export_finetune_stage(const PipelineConfig& config);

enum class ReportFormat { kTable, kJsonl };

struct EvaluateOutput {
  std::string summary;
  std::string report;  // the selected format, also written under report_dir
};

/// Coverage tables (coverage.txt, coverage.jsonl) and/or the scorer
/// experiment (metrics.txt, metrics.jsonl, trained full weights at
/// weights_path). Metrics use the loaded graph and index artifacts.
EvaluateOutput evaluate_stage(const PipelineConfig& config, bool coverage, bool metrics, ReportFormat format);

struct RewriteReply {
  bool triggered = false;
  std::string rewrite;
  double score = 0.0;
};

/// Loaded graph, indexes and weights behind the rewrite and serve commands.
/// Immutable after construction; answer() is safe to call concurrently.
class RewriteService {
 public:
  /// Weights come from weights_path when present, otherwise default_weights().
  explicit RewriteService(const PipelineConfig& config);

  RewriteReply answer(const std::string& user_id, std::string_view query) const;
  bool default_weights_used() const { return default_weights_; }

 private:
  std::unique_ptr<const RewriteEngine> engine_;
  WeightVector weights_;
  double threshold_ = kDefaultTriggerThreshold;
  bool default_weights_ = false;
};

/// {"triggered": ..., "rewrite": ..., "score": ...}
std::string reply_json(const RewriteReply& reply);
/// Parses {"user_id": ..., "query": ...}; throws std::invalid_argument.
std::pair<std::string, std::string> parse_rewrite_request(std::string_view body);

}  // namespace cqr
