#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cqr/graph.h"
#include "cqr/ranking.h"
#include "cqr/types.h"

namespace cqr {

struct OpportunityPair {
  std::string user_id;
  std::string session_id;
  std::int64_t timestamp = 0;  // of the defective turn
  std::string defective_utterance;
  std::string rewrite_label;
  std::string label_entity_id;
  Domain domain = Domain::kOther;
  bool seen = false;

  bool operator==(const OpportunityPair&) const = default;
};

struct MiningOptions {
  std::int64_t max_gap_seconds = 90;
  double edit_threshold = 0.5;
};

/// Consecutive same-session turns (defective, then successful) within the gap
/// whose normalized utterances are within the edit threshold. Input order does
/// not matter; records are sorted by (user, session, timestamp) internally.
std::vector<OpportunityPair> mine_opportunity_pairs(const std::vector<LogRecord>& records,
                                                    const MiningOptions& options = {});

/// Normalized utterances and rewrite targets in a user's history index.
std::set<std::string> history_texts(const Fig& graph, std::string_view user_id,
                                    std::size_t cap = kDefaultHistoryCap);

/// Marks each pair seen iff its label is among the user's history-index texts.
/// Returns (seen, unseen), each in input order.
std::pair<std::vector<OpportunityPair>, std::vector<OpportunityPair>> split_seen_unseen(
    std::vector<OpportunityPair> pairs, const Fig& history_graph, std::size_t history_cap = kDefaultHistoryCap);

struct GuardrailCase {
  std::string user_id;
  std::string utterance;  // normalized
  std::string entity_id;

  bool operator==(const GuardrailCase&) const = default;
};

/// Distinct (user, utterance) pairs of non-defective, non-rewritten records,
/// sampled without replacement by seed and returned sorted. A sample_size of
/// 0 keeps everything.
std::vector<GuardrailCase> build_guardrail_set(const std::vector<LogRecord>& records, std::size_t sample_size,
                                               std::uint64_t seed);

/// What a system under test returns for one query.
struct SystemAnswer {
  bool triggered = false;
  std::string rewrite;
  std::string entity_id;  // entity the rewrite resolves to, empty if unknown
  double score = 0.0;
};

class RewriteSystem {
 public:
  virtual ~RewriteSystem() = default;
  virtual SystemAnswer answer(const std::string& user_id, const std::string& query) const = 0;
};

struct SetMetrics {
  std::string name;
  std::size_t total = 0;
  std::size_t triggered = 0;
  std::size_t correct = 0;

  std::optional<double> precision_at_1() const;
  double trigger_rate() const;
};

struct MetricsReport {
  std::vector<SetMetrics> opportunity;
  SetMetrics guardrail;
  double false_trigger_rate() const { return guardrail.trigger_rate(); }
};

/// A triggered rewrite is correct when its entity equals the label entity;
/// when either side has no entity, normalized text equality decides.
bool rewrite_correct(const SystemAnswer& answer, const OpportunityPair& pair);

SetMetrics evaluate_opportunities(const RewriteSystem& system, std::string name,
                                  const std::vector<OpportunityPair>& pairs);
SetMetrics evaluate_guardrail(const RewriteSystem& system, const std::vector<GuardrailCase>& cases);

MetricsReport evaluate(const RewriteSystem& system,
                       const std::vector<std::pair<std::string, std::vector<OpportunityPair>>>& opportunity_sets,
                       const std::vector<GuardrailCase>& guardrail);

/// One evaluation-period interaction: a distinct successful (user, utterance).
struct EvalInteraction {
  std::string user_id;
  std::string text;  // normalized
  std::string entity_id;
  Domain domain = Domain::kOther;
  bool defective = false;  // it is the label of an opportunity pair
};

/// Successful, non-rewritten records deduplicated by (user, utterance),
/// keeping the earliest. `pairs` flags the defective subset.
std::vector<EvalInteraction> eval_interactions(const std::vector<LogRecord>& records,
                                               const std::vector<OpportunityPair>& pairs);

/// Interactions whose text is not in the user's history index.
std::vector<EvalInteraction> unseen_interactions(const std::vector<EvalInteraction>& interactions,
                                                 const Fig& history_graph,
                                                 std::size_t history_cap = kDefaultHistoryCap);

struct CoverageFraction {
  std::size_t covered = 0;
  std::size_t total = 0;
  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total); }
};

struct HopCoverage {
  int hop = 1;
  CoverageFraction entity_level;
  CoverageFraction query_level;
  CoverageFraction entity_level_defective;
  CoverageFraction query_level_defective;
};

struct CapCoverage {
  std::string index;  // e.g. "traversal", "cooccurrence"
  std::size_t cap = 0;
  std::string domain;  // music, video, other or all
  CoverageFraction coverage;
};

struct CoverageReport {
  std::vector<HopCoverage> hops;
  std::vector<CapCoverage> caps;
};

/// Per-user ranked collaborative candidates (already deduplicated and sorted,
/// at the largest cap of interest) for one index flavour.
struct RankedIndexSet {
  std::string name;
  std::map<std::string, std::vector<RewriteCandidate>> by_user;
};

struct CoverageOptions {
  int max_hop = 5;
  std::size_t history_cap = kDefaultHistoryCap;
  std::vector<std::size_t> caps{100, 200, 500};
};

/// Hop coverage over `unseen` interactions:
///  - entity level: the label entity is within n hops of the user;
///  - query level: hop 1 is the user's history index; for n >= 2 the label
///    text also counts when it occurs on another user's edge (u, e) with both
///    u and e within n hops.
/// Cap coverage: the label text is among the first `cap` entries of the
/// user's collaborative index.
CoverageReport coverage_report(const Fig& history_graph, const std::vector<EvalInteraction>& unseen,
                               const std::vector<RankedIndexSet>& indexes, const CoverageOptions& options = {});

}  // namespace cqr
