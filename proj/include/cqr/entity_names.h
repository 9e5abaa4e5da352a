#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqr/graph.h"

namespace cqr {

/// Lookup of graph entities by normalized display name.
class EntityNameIndex {
 public:
  explicit EntityNameIndex(const Fig& graph);

  /// Exact normalized-name match; the smallest entity index wins among
  /// duplicates.
  std::optional<NodeIndex> exact(std::string_view name, std::optional<Domain> domain = {}) const;

  /// Highest token-set Jaccard similarity >= min_similarity, ties to the
  /// smallest entity index.
  std::optional<NodeIndex> best_fuzzy(std::string_view name, double min_similarity,
                                      std::optional<Domain> domain = {}) const;

  /// Longest entity name occurring as a contiguous token run inside the
  /// normalized query. Among equally long matches, the one with the most
  /// impressions wins, then the smallest index.
  std::optional<NodeIndex> longest_contained(std::string_view normalized_query) const;

  const std::string& normalized_name(NodeIndex e) const { return names_[e]; }

 private:
  const Fig* graph_;
  std::vector<std::string> names_;
  std::vector<std::int64_t> impressions_;
  std::unordered_map<std::string, std::vector<NodeIndex>> by_name_;
  std::unordered_map<std::string, std::vector<NodeIndex>> by_token_;
  std::size_t max_name_tokens_ = 0;
};

}  // namespace cqr
