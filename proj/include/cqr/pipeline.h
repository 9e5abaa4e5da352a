#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cqr/affinity.h"
#include "cqr/eval.h"
#include "cqr/graph.h"
#include "cqr/link_prediction.h"
#include "cqr/ranking.h"
#include "cqr/retrieval.h"
#include "cqr/synth.h"

namespace cqr {

enum class IndexMode : std::uint8_t {
  kTraversal,     // graph traversal only
  kCooccurrence,  // traversal plus co-occurrence predicted links
  kExternal,      // traversal plus links grounded from a predictions file
};

std::string_view to_string(IndexMode mode);
IndexMode parse_index_mode(std::string_view name);

struct PipelineConfig {
  WorldConfig world;

  std::filesystem::path work_dir = "cqr_work";
  // Empty paths resolve inside work_dir (see resolved()).
  std::filesystem::path logs_path;
  std::filesystem::path graph_path;
  std::filesystem::path index_path;
  std::filesystem::path predictions_path;
  std::filesystem::path weights_path;
  std::filesystem::path report_dir;

  double defect_threshold = 0.5;
  std::size_t history_cap = kDefaultHistoryCap;
  std::size_t traversal_cap = kTraversalOnlyCap;
  std::size_t prediction_cap = kWithPredictionsCap;
  std::size_t predictions_per_user = kDefaultPredictionsPerUser;
  IndexMode index_mode = IndexMode::kCooccurrence;
  int max_hop = 5;

  std::size_t embedding_dim = kDefaultEmbeddingDim;
  std::uint64_t hash_seed = kDefaultHashSeed;
  std::size_t retrieval_k = 10;
  double trigger_threshold = kDefaultTriggerThreshold;

  std::int64_t max_gap_seconds = 90;
  double edit_threshold = 0.5;
  std::size_t guardrail_size = 2000;
  std::uint64_t guardrail_seed = 7;

  double learning_rate = 0.5;
  std::size_t epochs = 400;
  double l2 = 1e-3;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
  /// Copy with every empty path filled in from work_dir.
  PipelineConfig resolved() const;
  /// Cap used for the configured index mode.
  std::size_t collaborative_cap() const {
    return index_mode == IndexMode::kTraversal ? traversal_cap : prediction_cap;
  }
};

/// Flat key/value view, world keys prefixed with "world.".
std::vector<std::pair<std::string, std::string>> config_items(const PipelineConfig& config);
/// Returns false for an unknown key; throws std::invalid_argument on a bad value.
bool set_config_item(PipelineConfig& config, std::string_view key, std::string_view value);

/// `key = value` lines; '#' starts a comment. Unknown keys are errors.
PipelineConfig parse_config(std::istream& in, PipelineConfig base = {});
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {});
/// CQR_<KEY> environment variables override file values (key upper-cased,
/// dots replaced by underscores, e.g. CQR_WORLD_SEED).
void apply_env_overrides(PipelineConfig& config);

/// Ranked, deduplicated and capped collaborative index for one user.
CollaborativeIndex build_collaborative_index(const Fig& graph, std::string_view user_id, IndexMode mode,
                                             std::size_t cap, std::size_t history_cap = kDefaultHistoryCap,
                                             std::size_t predictions_per_user = kDefaultPredictionsPerUser,
                                             const PredictionsFile* predictions = nullptr);

/// Indexes for every user in the graph, in user-id order.
std::vector<CollaborativeIndex> build_collaborative_indexes(const Fig& graph, IndexMode mode, std::size_t cap,
                                                            std::size_t history_cap = kDefaultHistoryCap,
                                                            std::size_t predictions_per_user =
                                                                kDefaultPredictionsPerUser,
                                                            const PredictionsFile* predictions = nullptr);

struct EngineOptions {
  std::size_t history_cap = kDefaultHistoryCap;
  HashingEncoderConfig encoder;
  std::size_t retrieval_k = 10;
};

struct RewriteResult {
  std::vector<RetrievalHit> hits;
  std::vector<FeatureVector> features;
  RewriteDecision decision;
};

/// Retrieval plus ranking over immutable artifacts. After construction every
/// method is const and safe to call from several threads.
class RewriteEngine {
 public:
  RewriteEngine(std::shared_ptr<const Fig> graph, const std::vector<CollaborativeIndex>& collaborative,
                EngineOptions options = {});

  /// Top-k hits for the query from the user's personalized index. Entries
  /// whose rewrite would reproduce the query verbatim are skipped.
  std::vector<RetrievalHit> retrieve_hits(const std::string& user_id, std::string_view query) const;
  std::vector<FeatureVector> features(const std::string& user_id, std::string_view query,
                                      const std::vector<RetrievalHit>& hits) const;
  RewriteResult rewrite(const std::string& user_id, std::string_view query, const WeightVector& weights,
                        double threshold) const;

  const Fig& graph() const { return *graph_; }
  const EngineOptions& options() const { return options_; }

 private:
  struct UserEntries {
    std::vector<RewriteCandidate> candidates;  // history first, then collaborative
    std::vector<const Embedding*> embeddings;
  };

  std::shared_ptr<const Fig> graph_;
  EngineOptions options_;
  std::shared_ptr<const HashingEncoder> encoder_;
  EmbeddingCache cache_;
  FeatureExtractor extractor_;
  std::unordered_map<std::string, UserEntries> users_;
};

/// RewriteSystem view of an engine with fixed weights and threshold.
class ScoredSystem final : public RewriteSystem {
 public:
  ScoredSystem(const RewriteEngine& engine, WeightVector weights, double threshold)
      : engine_(engine), weights_(std::move(weights)), threshold_(threshold) {}
  SystemAnswer answer(const std::string& user_id, const std::string& query) const override;

 private:
  const RewriteEngine& engine_;
  WeightVector weights_;
  double threshold_;
};

/// Training examples from one labeled period: every retrieved hit of an
/// opportunity pair is positive iff it resolves to the label entity; every
/// hit for a guardrail case is negative.
std::vector<LabeledExample> labeled_examples(const RewriteEngine& engine, const std::vector<OpportunityPair>& pairs,
                                             const std::vector<GuardrailCase>& guardrail);

struct ScorerRun {
  std::string name;
  WeightVector weights;
  std::vector<double> loss_trace;
  MetricsReport metrics;
};

struct ExperimentReport {
  std::int64_t history_end = 0;
  std::size_t train_examples = 0;
  std::size_t train_positives = 0;
  std::size_t eval_pairs_seen = 0;
  std::size_t eval_pairs_unseen = 0;
  std::vector<ScorerRun> scorers;  // similarity-only, full
  CoverageReport coverage;
};

/// Held-out experiment on a log:
///  1. weeks before the last history week build a training graph; weak labels
///     and guardrail cases from the last history week train two scorers
///     (similarity only and all features);
///  2. the full history builds the evaluation graph and indexes; both
///     scorers are evaluated on the eval period, and coverage is measured for
///     traversal-only and co-occurrence indexes.
/// A supplied history graph replaces the one built from the log, and supplied
/// indexes replace the engine's collaborative indexes (coverage always uses
/// freshly ranked lists).
ExperimentReport run_experiment(const std::vector<LogRecord>& records, const PipelineConfig& config,
                                std::shared_ptr<const Fig> history_graph = nullptr,
                                const std::vector<CollaborativeIndex>* engine_indexes = nullptr);

/// Coverage only (step 2 without scorers).
CoverageReport run_coverage(const std::vector<LogRecord>& records, const PipelineConfig& config,
                            std::shared_ptr<const Fig> history_graph = nullptr);

/// Aligned plain-text tables.
void write_metrics_table(std::ostream& out, const ExperimentReport& report);
void write_coverage_table(std::ostream& out, const CoverageReport& report);
/// One JSON object per line.
void write_metrics_jsonl(std::ostream& out, const ExperimentReport& report);
void write_coverage_jsonl(std::ostream& out, const CoverageReport& report);

}  // namespace cqr
