#include "cqr/entity_names.h"

#include <algorithm>

#include "cqr/text.h"

namespace cqr {

EntityNameIndex::EntityNameIndex(const Fig& graph) : graph_(&graph) {
  names_.reserve(graph.num_entities());
  impressions_.assign(graph.num_entities(), 0);
  for (NodeIndex e = 0; e < graph.num_entities(); ++e) {
    names_.push_back(normalize_utterance(graph.entity(e).name));
    const auto& name = names_.back();
    if (name.empty()) continue;
    by_name_[name].push_back(e);
    auto toks = tokens(name);
    max_name_tokens_ = std::max(max_name_tokens_, toks.size());
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (auto t : toks) by_token_[std::string(t)].push_back(e);
    for (EdgeIndex ei : graph.entity_edges(e)) impressions_[e] += graph.edge(ei).signals.impression;
  }
}

std::optional<NodeIndex> EntityNameIndex::exact(std::string_view name,
                                                std::optional<Domain> domain) const {
  auto it = by_name_.find(normalize_utterance(name));
  if (it == by_name_.end()) return std::nullopt;
  for (NodeIndex e : it->second) {
    if (!domain || graph_->entity(e).domain == *domain) return e;
  }
  return std::nullopt;
}

std::optional<NodeIndex> EntityNameIndex::best_fuzzy(std::string_view name, double min_similarity,
                                                     std::optional<Domain> domain) const {
  const auto norm = normalize_utterance(name);
  std::vector<NodeIndex> pool;
  for (auto t : tokens(norm)) {
    auto it = by_token_.find(std::string(t));
    if (it != by_token_.end()) pool.insert(pool.end(), it->second.begin(), it->second.end());
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  std::optional<NodeIndex> best;
  double best_sim = -1.0;
  for (NodeIndex e : pool) {
    if (domain && graph_->entity(e).domain != *domain) continue;
    const double sim = token_set_jaccard(norm, names_[e]);
    if (sim >= min_similarity && sim > best_sim) {
      best_sim = sim;
      best = e;
    }
  }
  return best;
}

std::optional<NodeIndex> EntityNameIndex::longest_contained(std::string_view normalized_query) const {
  const auto toks = tokens(normalized_query);
  std::optional<NodeIndex> best;
  std::size_t best_len = 0;
  std::string phrase;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    phrase.clear();
    for (std::size_t j = i; j < toks.size() && j - i < max_name_tokens_; ++j) {
      if (j > i) phrase.push_back(' ');
      phrase.append(toks[j]);
      auto it = by_name_.find(phrase);
      if (it == by_name_.end()) continue;
      const std::size_t len = j - i + 1;
      for (NodeIndex e : it->second) {
        const bool better = !best || len > best_len ||
                            (len == best_len && (impressions_[e] > impressions_[*best] ||
                                                 (impressions_[e] == impressions_[*best] && e < *best)));
        if (better) {
          best = e;
          best_len = len;
        }
      }
    }
  }
  return best;
}

}  // namespace cqr
