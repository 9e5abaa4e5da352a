#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cqr/graph.h"
#include "cqr/types.h"

namespace cqr {

// Minimum number of distinct shared ClassA entities before a peer's wider
// affinity is used for 3-hop expansion.
inline constexpr std::int64_t kMinSharedPaths = 3;
inline constexpr std::size_t kTraversalOnlyCap = 500;
inline constexpr std::size_t kWithPredictionsCap = 200;

struct PeerAffinity {
  NodeIndex peer = 0;
  std::string peer_id;
  AffinityStats stats;          // affinity_impression is per candidate and left at 0 here
  bool class_a_qualified = false;  // unique_path_count >= kMinSharedPaths
};

/// X/Y similarity statistics. unique_path_count and path_impression_sum range
/// over shared ClassA entities A; each path X->A->Y contributes
/// imp(X,A) + imp(Y,A). Jaccard distance is over full neighborhoods.
AffinityStats pair_stats(const Fig& graph, NodeIndex x, NodeIndex y);

/// Every user sharing at least one entity with `user_id`, ordered by peer id.
/// Peers reached only through ClassB entities have unique_path_count 0.
std::vector<PeerAffinity> qualified_peers(const Fig& graph, std::string_view user_id);

struct TraversalOptions {
  std::size_t history_cap = kDefaultHistoryCap;
  std::int64_t min_shared_paths = kMinSharedPaths;
};

/// Candidates from the constrained affinity of a user:
///  - hop 3: queries on ClassA entities of qualified peers that the user has
///    not interacted with;
///  - hop 2: queries of any peer on ClassB entities the user also touches.
/// Utterances already in the user's history index are excluded. Output is in
/// (peer, entity, query) order.
std::vector<RewriteCandidate> collect_candidates(const Fig& graph, std::string_view user_id,
                                                 const TraversalOptions& options = {});

struct CollaborativeIndex {
  std::string user_id;
  std::size_t cap = kTraversalOnlyCap;
  std::vector<RewriteCandidate> entries;
};

/// Dedups by normalized utterance (keeping the highest affinity_impression),
/// sorts by (hop asc, affinity_impression desc, defect_rate asc,
/// impression desc, utterance) and truncates to `cap`. The order is total, so
/// a smaller cap always yields a prefix of a larger one.
CollaborativeIndex rank_and_cap(std::vector<RewriteCandidate> candidates, std::size_t cap,
                                std::string user_id = {});

/// Same result as rank_and_cap(collect_candidates(graph, user_id, options)
/// followed by `extra`, cap), without materializing the duplicates.
CollaborativeIndex build_ranked_index(const Fig& graph, std::string_view user_id, std::size_t cap,
                                      const TraversalOptions& options = {},
                                      const std::vector<RewriteCandidate>& extra = {});

/// Breadth-first distances over alternating user/entity hops, capped at
/// max_hops; unreachable nodes get -1. The start user has distance 0 and its
/// entities distance 1.
struct HopDistances {
  std::vector<int> user;
  std::vector<int> entity;
};
HopDistances hop_distances(const Fig& graph, NodeIndex start, int max_hops);

/// Entity ids reachable within n alternating hops (1 <= n <= 5), without the
/// traversal constraints. n = 1 gives the user's own entities.
std::set<std::string> n_hop_affinity_entities(const Fig& graph, std::string_view user_id, int n);

// Tab-separated with a header line; see kCollaborativeIndexHeader.
extern const std::string_view kCollaborativeIndexHeader;
void write_collaborative_indexes(std::ostream& out, const std::vector<CollaborativeIndex>& indexes);
std::vector<CollaborativeIndex> read_collaborative_indexes(std::istream& in);

}  // namespace cqr
