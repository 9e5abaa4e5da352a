#include "cqr/retrieval.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include "cqr/text.h"

namespace cqr {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t splitmix_finalize(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t feature_hash(std::uint64_t seed, char kind, std::string_view text) {
  std::uint64_t h = kFnvOffset ^ splitmix_finalize(seed);
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= kFnvPrime;
  };
  mix(static_cast<unsigned char>(kind));
  for (char c : text) mix(static_cast<unsigned char>(c));
  return splitmix_finalize(h);
}

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double cosine(const Embedding& a, const Embedding& b) {
  if (a.values.size() != b.values.size()) throw std::invalid_argument("embedding dimension mismatch");
  if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
  // Squared norms are accumulated exactly like the dot product, so a vector
  // compared with itself gives dot / sqrt(dot * dot) = 1 exactly.
  double dot = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    aa += a.values[i] * a.values[i];
    bb += b.values[i] * b.values[i];
  }
  return dot / std::sqrt(aa * bb);
}

HashingEncoder::HashingEncoder(HashingEncoderConfig config) : config_(config) {
  if (config_.dimension == 0) throw std::invalid_argument("embedding dimension must be positive");
}

Embedding HashingEncoder::encode(std::string_view utterance) const {
  const auto text = normalize_utterance(utterance);
  if (text.empty()) throw std::invalid_argument("cannot embed an empty utterance");

  Embedding out{std::vector<double>(config_.dimension, 0.0), 0.0};
  auto add = [&](char kind, std::string_view feature) {
    const auto h = feature_hash(config_.seed, kind, feature);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    out.values[h % config_.dimension] += sign;
  };
  for (auto w : tokens(text)) add('w', w);
  const std::string padded = " " + text + " ";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add('c', std::string_view(padded).substr(i, 3));

  const double n = l2(out.values);
  if (n > 0.0) {
    for (double& v : out.values) v /= n;
  }
  out.norm = l2(out.values);
  return out;
}

EmbeddingCache::EmbeddingCache(std::shared_ptr<const UtteranceEncoder> encoder)
    : encoder_(std::move(encoder)) {
  if (!encoder_) throw std::invalid_argument("null encoder");
}

const Embedding& EmbeddingCache::get(const std::string& normalized_text) {
  auto it = cache_.find(normalized_text);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(normalized_text, encoder_->encode(normalized_text)).first->second;
}

const Embedding* EmbeddingCache::find(const std::string& normalized_text) const {
  auto it = cache_.find(normalized_text);
  return it == cache_.end() ? nullptr : &it->second;
}

void EmbeddingCache::save(std::ostream& out) const {
  std::vector<const std::string*> keys;
  keys.reserve(cache_.size());
  for (const auto& kv : cache_) keys.push_back(&kv.first);
  std::sort(keys.begin(), keys.end(), [](const auto* a, const auto* b) { return *a < *b; });
  out << "cqr-embeddings 1 " << encoder_->dimension() << '\n';
  for (const auto* k : keys) {
    out << *k;
    const auto& v = cache_.at(*k).values;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] != 0.0) out << '\t' << i << ':' << format_double(v[i]);
    }
    out << '\n';
  }
}

void EmbeddingCache::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("embeddings: empty file");
  const auto head = split(line, ' ');
  if (head.size() != 3 || head[0] != "cqr-embeddings" || head[1] != "1") {
    throw std::runtime_error("embeddings: bad header");
  }
  const auto dim = static_cast<std::size_t>(parse_int(head[2]));
  if (dim != encoder_->dimension()) throw std::runtime_error("embeddings: dimension mismatch");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    Embedding e{std::vector<double>(dim, 0.0), 0.0};
    for (std::size_t i = 1; i < f.size(); ++i) {
      const auto colon = f[i].find(':');
      if (colon == std::string_view::npos) throw std::runtime_error("embeddings: bad component");
      const auto idx = static_cast<std::size_t>(parse_int(f[i].substr(0, colon)));
      if (idx >= dim) throw std::runtime_error("embeddings: component out of range");
      e.values[idx] = parse_double(f[i].substr(colon + 1));
    }
    e.norm = l2(e.values);
    cache_.insert_or_assign(std::string(f[0]), std::move(e));
  }
}

PersonalizedIndex make_personalized_index(std::string user_id,
                                          const std::vector<RewriteCandidate>& history,
                                          const std::vector<RewriteCandidate>& collaborative,
                                          EmbeddingCache& cache) {
  PersonalizedIndex index{std::move(user_id), {}};
  index.entries.reserve(history.size() + collaborative.size());
  for (const auto* part : {&history, &collaborative}) {
    for (const auto& c : *part) {
      index.entries.push_back({c, &cache.get(normalize_utterance(c.utterance))});
    }
  }
  return index;
}

bool hit_before(const RetrievalHit& a, const RetrievalHit& b) {
  const auto& ca = a.candidate;
  const auto& cb = b.candidate;
  return std::forward_as_tuple(-a.similarity, -ca.signals.impression, ca.utterance, ca.rewrite_target,
                               ca.hop, ca.source_entity_id, ca.source_user_id) <
         std::forward_as_tuple(-b.similarity, -cb.signals.impression, cb.utterance, cb.rewrite_target,
                               cb.hop, cb.source_entity_id, cb.source_user_id);
}

std::vector<RetrievalHit> retrieve(const Embedding& query, const PersonalizedIndex& index, std::size_t k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const auto& entries = index.entries;
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    scored.emplace_back(cosine(query, *entries[i].embedding), i);
  }
  auto before = [&entries](const auto& a, const auto& b) {
    const auto& ca = entries[a.second].candidate;
    const auto& cb = entries[b.second].candidate;
    return std::forward_as_tuple(-a.first, -ca.signals.impression, ca.utterance, ca.rewrite_target,
                                 ca.hop, ca.source_entity_id, ca.source_user_id) <
           std::forward_as_tuple(-b.first, -cb.signals.impression, cb.utterance, cb.rewrite_target,
                                 cb.hop, cb.source_entity_id, cb.source_user_id);
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    before);
  std::vector<RetrievalHit> hits;
  hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    hits.push_back({entries[scored[i].second].candidate, scored[i].first});
  }
  return hits;
}

std::vector<RetrievalHit> retrieve(std::string_view query, const PersonalizedIndex& index,
                                   std::size_t k, const UtteranceEncoder& encoder) {
  if (index.entries.empty()) return {};
  return retrieve(encoder.encode(query), index, k);
}

}  // namespace cqr
