#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cqr/types.h"

namespace cqr {

/// SplitMix64. Specified here so synthetic data is identical on every
/// platform and standard library.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform in [0, n); n must be positive. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  bool chance(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index = 0);

/// Samples ranks 0..n-1 with probability proportional to 1/(rank+1)^s.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent);
  std::size_t sample(SplitMix64& rng) const;
  std::size_t size() const { return cumulative_.size(); }
  double probability(std::size_t rank) const;

 private:
  std::vector<double> cumulative_;
};

struct WorldConfig {
  std::uint64_t seed = 42;
  std::size_t num_users = 1000;
  std::size_t num_clusters = 40;

  // Entity counts per type.
  std::size_t num_songs = 900;
  std::size_t num_artists = 150;
  std::size_t num_albums = 40;
  std::size_t num_videos = 600;
  std::size_t num_books = 80;
  std::size_t num_shopping_items = 80;
  std::size_t num_genres = 15;
  std::size_t num_apps = 30;
  std::size_t num_cities = 50;
  std::size_t num_device_names = 15;
  std::size_t num_routine_names = 15;
  std::size_t num_contact_names = 40;
  // Fraction of artists and videos that get a sibling whose name extends
  // theirs by one word ("pink" / "pink floyd").
  double prefix_sibling_fraction = 0.1;

  // Per-cluster pool sizes (ClassA entities drawn by global popularity).
  std::size_t pool_songs = 40;
  std::size_t pool_artists = 8;
  std::size_t pool_videos = 30;
  std::size_t pool_other = 6;  // books and shopping items
  // Share of the cluster pool a user already knows in the history period.
  double familiar_fraction = 0.5;
  // Probability mass a user puts on its cluster pool; the rest follows
  // global popularity.
  double cluster_mass = 0.85;
  double zipf_exponent = 1.0;

  std::size_t weeks_history = 26;
  std::size_t weeks_eval = 1;
  std::int64_t start_timestamp = 1'700'000'000;
  std::size_t sessions_per_week = 3;
  std::size_t max_turns_per_session = 3;
  // Share of turns about ClassB entities (genres, apps, weather, ...).
  double class_b_share = 0.2;

  double defect_probability = 0.08;
  double rephrase_probability = 0.85;
  // Share of would-be defective turns that the existing rewriter already
  // fixes; these are logged with a rewrite target.
  double system_rewrite_share = 0.3;
  // Chance that an eval-week turn picks an unfamiliar entity from the pool.
  double novel_probability = 0.35;
  // Distinct ASR corruptions per utterance across the population.
  std::size_t asr_variants = 3;
  // Share of ASR defects that mishear the entity name itself; the rest
  // corrupt the utterance as a whole (asr_corrupt).
  double name_error_share = 0.7;
  // Defective turns on an entity whose name is a prefix of a sibling's are
  // routed to that sibling with this probability (utterance left intact).
  double entity_swap_share = 0.5;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Flat key/value view of a WorldConfig, in declaration order.
std::vector<std::pair<std::string, std::string>> world_config_items(const WorldConfig& config);
/// Sets one field by key. Returns false for an unknown key; throws
/// std::invalid_argument on a malformed value.
bool set_world_config_item(WorldConfig& config, std::string_view key, std::string_view value);

struct SyntheticEntity {
  std::string id;
  std::string name;
  EntityType type = EntityType::kSong;
  Domain domain = Domain::kMusic;
  std::size_t artist = 0;  // songs and albums: index of the artist entity
};

struct SyntheticUser {
  std::string id;
  std::size_t cluster = 0;
  std::vector<std::size_t> familiar;  // ClassA entity indices known in history
  std::vector<std::size_t> novel;     // rest of the cluster pool
  std::vector<std::size_t> class_b;   // ClassB entity indices the user uses
};

struct SyntheticWorld {
  WorldConfig config;
  std::vector<SyntheticEntity> entities;
  // ClassA entity indices ordered by global popularity rank.
  std::vector<std::size_t> popularity;
  std::vector<std::vector<std::size_t>> cluster_pools;
  std::vector<SyntheticUser> users;

  /// Probability mass user u puts on each entity. Sums to 1.
  std::vector<double> preference(std::size_t u) const;
};

SyntheticWorld generate_world(const WorldConfig& config);

struct PlantedPair {
  std::string user_id;
  std::string session_id;
  std::int64_t timestamp = 0;  // of the defective turn
  std::string defective_utterance;
  std::string label;
  std::string entity_id;
};

struct SyntheticLogs {
  std::vector<LogRecord> records;  // sorted by (user, timestamp)
  std::vector<PlantedPair> planted;
};

SyntheticLogs generate_logs(const SyntheticWorld& world);

/// The clean utterance for an entity under template `variant`.
std::string render_utterance(const SyntheticWorld& world, std::size_t entity, std::size_t variant);
std::size_t template_count(EntityType type);
/// An entity name with 1-2 phonetic character substitutions; deterministic
/// per (name, seed) and never equal to the input.
std::string mishear_name(std::string_view name, std::uint64_t seed);

/// ASR-shaped corruption: 1-3 edits among word drop, word duplication,
/// adjacent swap and phonetic character substitution. Deterministic per
/// (utterance, seed); the result differs from the normalized input and stays
/// within normalized edit distance 0.5 whenever the input has more than one
/// character.
std::string asr_corrupt(std::string_view utterance, std::uint64_t seed);

std::int64_t history_end(const WorldConfig& config);

void write_world_manifest(std::ostream& out, const SyntheticWorld& world, const SyntheticLogs& logs);

}  // namespace cqr
