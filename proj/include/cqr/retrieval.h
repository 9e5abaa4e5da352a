#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqr/types.h"

namespace cqr {

struct Embedding {
  std::vector<double> values;
  double norm = 0.0;

  bool operator==(const Embedding&) const = default;
};

/// Cosine similarity dot / sqrt(|a|^2 |b|^2), sums taken in index order; 0 if
/// either side has zero norm. Identical vectors give exactly 1.
double cosine(const Embedding& a, const Embedding& b);

class UtteranceEncoder {
 public:
  virtual ~UtteranceEncoder() = default;
  virtual std::size_t dimension() const = 0;
  /// Throws std::invalid_argument on an empty utterance.
  virtual Embedding encode(std::string_view utterance) const = 0;
};

inline constexpr std::size_t kDefaultEmbeddingDim = 256;
inline constexpr std::uint64_t kDefaultHashSeed = 0x5eedc0de2023ULL;

struct HashingEncoderConfig {
  std::size_t dimension = kDefaultEmbeddingDim;
  std::uint64_t seed = kDefaultHashSeed;
};

/// Word unigrams and character trigrams (over the utterance padded with one
/// space on each side) are hashed with seeded 64-bit FNV-1a followed by a
/// splitmix64 finalizer. The low bits pick the bucket, the top bit the sign.
/// Counts are accumulated and the vector is L2-normalized.
class HashingEncoder final : public UtteranceEncoder {
 public:
  explicit HashingEncoder(HashingEncoderConfig config = {});
  std::size_t dimension() const override { return config_.dimension; }
  Embedding encode(std::string_view utterance) const override;
  const HashingEncoderConfig& config() const { return config_; }

 private:
  HashingEncoderConfig config_;
};

/// Memoizes encodings by normalized text. Not thread-safe for writes; call
/// warm() before sharing across threads.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::shared_ptr<const UtteranceEncoder> encoder);
  const Embedding& get(const std::string& normalized_text);
  const Embedding* find(const std::string& normalized_text) const;
  const UtteranceEncoder& encoder() const { return *encoder_; }
  std::size_t size() const { return cache_.size(); }

  // One line per text: text \t idx:value ... (only nonzero components).
  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  std::shared_ptr<const UtteranceEncoder> encoder_;
  std::unordered_map<std::string, Embedding> cache_;
};

struct IndexEntry {
  RewriteCandidate candidate;
  const Embedding* embedding = nullptr;  // embedding of the normalized utterance
};

/// Search space for one user: history entries followed by collaborative ones.
struct PersonalizedIndex {
  std::string user_id;
  std::vector<IndexEntry> entries;
};

PersonalizedIndex make_personalized_index(std::string user_id,
                                          const std::vector<RewriteCandidate>& history,
                                          const std::vector<RewriteCandidate>& collaborative,
                                          EmbeddingCache& cache);

struct RetrievalHit {
  RewriteCandidate candidate;
  double similarity = 0.0;
};

/// Strict weak order used to rank hits: similarity desc, impression desc,
/// utterance, rewrite target, hop, entity id, source user.
bool hit_before(const RetrievalHit& a, const RetrievalHit& b);

/// Exact top-k by cosine similarity. Returns min(k, |index|) hits.
std::vector<RetrievalHit> retrieve(const Embedding& query, const PersonalizedIndex& index, std::size_t k);
std::vector<RetrievalHit> retrieve(std::string_view query, const PersonalizedIndex& index,
                                   std::size_t k, const UtteranceEncoder& encoder);

}  // namespace cqr
