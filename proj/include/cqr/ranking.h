#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqr/entity_names.h"
#include "cqr/graph.h"
#include "cqr/retrieval.h"

namespace cqr {

// Order is part of the weights file format (version 1).
enum class Feature : std::size_t {
  kGlobalImpression,
  kGlobalDefectRate,
  kUserImpression,
  kUserDefectRate,
  kAffinityImpression,
  kAffinityEntityImpression,
  kHop,
  kUniquePathCount,
  kPathImpressionSum,
  kDegreeDifference,
  kNeighborhoodJaccardDistance,
  kL1Similarity,
  kQueryEntityImpression,
  kQueryEntityDefectRate,
  kEntityNameSimilarity,
  kBargeInRate,
  kTerminationRate,
};

inline constexpr std::size_t kNumFeatures = 17;
// Each feature contributes a transformed value and a presence flag.
inline constexpr std::size_t kModelDim = 2 * kNumFeatures;

std::string_view feature_name(Feature f);
/// Count-valued features enter the model as log1p(value).
bool is_count_feature(Feature f);

struct FeatureVector {
  std::array<double, kNumFeatures> values{};
  std::array<bool, kNumFeatures> present{};

  double get(Feature f) const { return values[static_cast<std::size_t>(f)]; }
  bool has(Feature f) const { return present[static_cast<std::size_t>(f)]; }
  void set(Feature f, double v, bool is_present = true) {
    values[static_cast<std::size_t>(f)] = v;
    present[static_cast<std::size_t>(f)] = is_present;
  }
};

using FeatureMask = std::bitset<kNumFeatures>;

FeatureMask all_features();
FeatureMask similarity_only();
/// Similarity plus the global/user impression and defect signals.
FeatureMask base_features();
FeatureMask affinity_features();
FeatureMask guardrail_features();

/// Model input: [transformed values..., presence flags...]. Features outside
/// `mask` are zeroed.
std::array<double, kModelDim> model_input(const FeatureVector& features,
                                          const FeatureMask& mask = all_features());

/// Precomputed global statistics for feature extraction over one graph.
/// Immutable after construction; safe for concurrent readers.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const Fig& graph);

  /// `query` is the raw user query; `hit` must come from this user's index.
  FeatureVector extract(std::string_view query, const RetrievalHit& hit, std::string_view user_id) const;

  /// The entity a query refers to: the longest entity name it contains.
  std::optional<NodeIndex> query_entity(std::string_view normalized_query) const;

 private:
  struct Tally {
    std::int64_t impression = 0;
    double defect_mass = 0.0;  // sum of impression * defect_rate
  };

  const Fig* graph_;
  EntityNameIndex names_;
  std::unordered_map<std::string, Tally> global_text_;
  std::unordered_map<std::string, Tally> user_text_;  // key: user_id '\x1f' text
  std::vector<Tally> entity_;
};

FeatureVector extract_features(const Fig& graph, std::string_view query, const RetrievalHit& hit,
                               std::string_view user_id);

struct WeightVector {
  std::vector<double> weights;  // kModelDim entries
  double bias = 0.0;

  bool operator==(const WeightVector&) const = default;
};

/// Hand-set weights: positive on similarity and impressions, negative on
/// defect, barge-in and termination rates.
WeightVector default_weights();

/// logistic(bias + weights . model_input(features)). Throws
/// std::invalid_argument if the weight vector has the wrong dimension.
double score(const FeatureVector& features, const WeightVector& weights);

struct LabeledExample {
  FeatureVector features;
  bool label = false;
};

struct TrainOptions {
  double learning_rate = 0.5;
  std::size_t epochs = 400;
  double l2 = 1e-3;
  // Weight classes inversely to their frequency.
  bool balance_classes = true;
  FeatureMask mask = all_features();
};

struct TrainResult {
  WeightVector weights;
  std::vector<double> loss_trace;  // objective after each epoch
};

/// Full-batch gradient descent on the (regularized) logistic loss over
/// standardized inputs, starting from zero. A step that would increase the
/// objective is retried with half the learning rate, so the trace never
/// increases. Deterministic and independent of example order up to
/// floating-point summation order. Throws std::invalid_argument unless both
/// classes are present.
TrainResult train_scorer(const std::vector<LabeledExample>& examples, const TrainOptions& options = {});

inline constexpr double kDefaultTriggerThreshold = 0.8;

struct RewriteDecision {
  bool triggered = false;
  double score = 0.0;
  double threshold = kDefaultTriggerThreshold;
  std::optional<RewriteCandidate> candidate;  // highest scoring hit, if any
  std::optional<std::string> rewrite;         // set iff triggered

  std::optional<std::size_t> winner;  // index into the hits
};

/// Scores every hit and picks the maximum (ties: higher l1 similarity, then
/// rewrite text, then utterance). Triggers iff the best score >= threshold.
RewriteDecision decide(const std::vector<RetrievalHit>& hits, const std::vector<FeatureVector>& features,
                       const WeightVector& weights, double threshold = kDefaultTriggerThreshold);

void save_weights(std::ostream& out, const WeightVector& weights);
WeightVector load_weights(std::istream& in);
void save_weights_file(const std::filesystem::path& path, const WeightVector& weights);
WeightVector load_weights_file(const std::filesystem::path& path);

}  // namespace cqr
