#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cqr {

enum class EntityType : std::uint8_t {
  kSong,
  kAlbum,
  kArtist,
  kBook,
  kVideo,
  kShoppingItem,
  kGenre,
  kApp,
  kCity,
  kState,
  kDeviceName,
  kRoutineName,
  kContactName,
};

inline constexpr int kNumEntityTypes = 13;

// ClassA entities feed 3-hop traversal; ClassB only the 2-hop common affinity.
enum class EntityClass : std::uint8_t { kA, kB };

enum class Domain : std::uint8_t { kMusic, kVideo, kOther };

EntityClass entity_class(EntityType type);

std::string_view to_string(EntityType type);
std::string_view to_string(EntityClass cls);
std::string_view to_string(Domain domain);
// Throw std::invalid_argument on unknown names.
EntityType parse_entity_type(std::string_view name);
Domain parse_domain(std::string_view name);

inline constexpr std::int64_t kSecondsPerWeek = 7 * 24 * 3600;

// Record-level cutoff: a turn is defective when defect_score exceeds this.
inline constexpr double kRecordDefectCutoff = 0.5;

inline bool is_defective(double defect_score) { return defect_score > kRecordDefectCutoff; }

struct LogRecord {
  std::string user_id;
  std::int64_t timestamp = 0;
  std::string session_id;
  std::string utterance;
  std::string entity_id;
  std::string entity_name;
  EntityType entity_type = EntityType::kSong;
  Domain domain = Domain::kOther;
  double defect_score = 0.0;
  bool barged_in = false;
  bool terminated = false;
  std::optional<std::string> rewrite_target;

  bool operator==(const LogRecord&) const = default;
};

struct FeedbackSignals {
  std::int64_t impression = 0;
  double defect_rate = 0.0;
  double barge_in_rate = 0.0;
  double termination_rate = 0.0;

  bool operator==(const FeedbackSignals&) const = default;
};

struct QueryRecord {
  std::string utterance;
  std::optional<std::string> rewrite_target;
  FeedbackSignals signals;

  // The text a rewrite to this query would produce.
  const std::string& effective_text() const { return rewrite_target ? *rewrite_target : utterance; }

  bool operator==(const QueryRecord&) const = default;
};

struct AffinityStats {
  std::int64_t unique_path_count = 0;
  std::int64_t path_impression_sum = 0;
  std::int64_t degree_difference = 0;
  double neighborhood_jaccard_distance = 0.0;
  std::int64_t affinity_impression = 0;

  bool operator==(const AffinityStats&) const = default;
};

struct RewriteCandidate {
  std::string utterance;
  std::optional<std::string> rewrite_target;
  std::string source_user_id;
  std::string source_entity_id;
  EntityClass entity_class = EntityClass::kA;
  int hop = 1;
  FeedbackSignals signals;
  AffinityStats affinity;

  const std::string& effective_text() const { return rewrite_target ? *rewrite_target : utterance; }

  bool operator==(const RewriteCandidate&) const = default;
};

}  // namespace cqr
