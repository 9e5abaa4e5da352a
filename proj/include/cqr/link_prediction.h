#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cqr/affinity.h"
#include "cqr/graph.h"
#include "cqr/log_io.h"
#include "cqr/types.h"

namespace cqr {

enum class LinkSource : std::uint8_t { kCooccurrence, kExternal };

struct PredictedLink {
  std::string user_id;
  std::string entity_id;
  LinkSource source = LinkSource::kCooccurrence;
  std::size_t rank = 1;  // 1-based

  bool operator==(const PredictedLink&) const = default;
};

inline constexpr std::size_t kDefaultPredictionsPerUser = 10;

struct CooccurrenceOptions {
  // Only entities in these domains are predicted.
  std::vector<Domain> domains{Domain::kMusic, Domain::kVideo};
};

/// Scores every entity e the user has not touched by
/// sum over the user's entities h of |users(h) ∩ users(e)| and returns the
/// top k by (score desc, entity id).
std::vector<PredictedLink> cooccurrence_predict(const Fig& graph, std::string_view user_id,
                                                std::size_t k = kDefaultPredictionsPerUser,
                                                const CooccurrenceOptions& options = {});

inline constexpr double kDefaultGroundingThreshold = 0.5;

struct GroundingOptions {
  double min_jaccard = kDefaultGroundingThreshold;
  // When set, both exact and fuzzy matches are restricted to this domain.
  std::optional<Domain> domain;
};

/// Maps free-text names to entity ids: exact normalized-name match first,
/// otherwise the entity with the highest token-set Jaccard >= min_jaccard
/// (ties by entity id).
std::vector<std::pair<std::string, std::optional<std::string>>> ground_entities(
    const Fig& graph, const std::vector<std::string>& names, const GroundingOptions& options = {});

/// Peer queries on predicted entities, as hop-2 candidates
/// ("user -> predicted entity -> peer"). Links that are already edges are
/// ignored; utterances in the user's history index are excluded.
std::vector<RewriteCandidate> augment_and_collect(const Fig& graph, std::string_view user_id,
                                                  const std::vector<PredictedLink>& links,
                                                  std::size_t history_cap = kDefaultHistoryCap);

struct FinetuneExample {
  std::string user_id;
  Domain domain = Domain::kMusic;
  std::string instruction;
  std::string input;
  std::string label;

  bool operator==(const FinetuneExample&) const = default;
};


struct FinetuneWindows {
  std::int64_t history_seconds = 26 * kSecondsPerWeek;
  std::int64_t label_seconds = 4 * kSecondsPerWeek;
};

std::string finetune_instruction(Domain domain);
/// `The user listened to songs "a", "b".` (music) or the movies variant.
std::string finetune_input(Domain domain, const std::vector<std::string>& names);
/// `"a", "b"`
std::string quoted_name_list(const std::vector<std::string>& names);

/// The label window is the final label_seconds of the log; the history window
/// is the history_seconds before it (clipped to the start of the log). Only
/// non-defective music/video turns count as interactions. Labels are entities
/// first seen in the label window; users without labels are skipped.
std::vector<FinetuneExample> export_finetune_examples(const std::vector<LogRecord>& records,
                                                      const FinetuneWindows& windows = {});
void write_finetune_jsonl(std::ostream& out, const std::vector<FinetuneExample>& examples);

// Interchange with the external model adapter. JSON Lines:
//   request:  {"user_id": ..., "domain": "music", "history": ["name", ...]}
//   response: {"user_id": ..., "domain": "music", "predictions": ["name", ...]}
struct PredictionRequest {
  std::string user_id;
  Domain domain = Domain::kMusic;
  std::vector<std::string> history;

  bool operator==(const PredictionRequest&) const = default;
};

struct PredictedNames {
  Domain domain = Domain::kMusic;
  std::vector<std::string> names;

  bool operator==(const PredictedNames&) const = default;
};

struct PredictionsFile {
  // Per user, response lines in file order.
  std::map<std::string, std::vector<PredictedNames>> by_user;
  std::vector<LineReject> rejects;
};

/// Requests for every user with music/video history, names ordered by
/// descending edge impression then name.
std::vector<PredictionRequest> build_prediction_requests(const Fig& graph);
void write_predictions_request(std::ostream& out, const std::vector<PredictionRequest>& requests);
void write_predictions_request(const std::filesystem::path& path,
                               const std::vector<PredictionRequest>& requests);
std::vector<PredictionRequest> read_predictions_request(std::istream& in,
                                                        std::vector<LineReject>* rejects = nullptr);

void write_predictions_response(std::ostream& out,
                                const std::vector<std::pair<std::string, PredictedNames>>& lines);
PredictionsFile read_predictions_file(std::istream& in);
PredictionsFile read_predictions_file(const std::filesystem::path& path);

/// Grounds one user's external predictions into links, dropping unmatched
/// names, entities already adjacent to the user and duplicates. Ranks are
/// assigned in file order.
std::vector<PredictedLink> links_from_predictions(const Fig& graph, std::string_view user_id,
                                                  const std::vector<PredictedNames>& predictions,
                                                  const GroundingOptions& options = {});

}  // namespace cqr
