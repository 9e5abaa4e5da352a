#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqr/types.h"

namespace cqr {

using NodeIndex = std::uint32_t;
using EdgeIndex = std::uint32_t;

struct EntityNode {
  std::string id;
  std::string name;  // display text as logged
  EntityType type = EntityType::kSong;
  Domain domain = Domain::kOther;

  EntityClass cls() const { return entity_class(type); }
  bool operator==(const EntityNode&) const = default;
};

struct InteractionEdge {
  NodeIndex user = 0;
  NodeIndex entity = 0;
  std::vector<QueryRecord> queries;  // sorted by (utterance, rewrite_target)
  FeedbackSignals signals;           // aggregate over queries

  bool operator==(const InteractionEdge&) const = default;
};

struct GraphOptions {
  // Edges whose aggregate defect rate reaches this value are dropped.
  double defect_threshold = 0.5;
};

/// User feedback interaction graph: bipartite users x entities, immutable
/// once built. Users and entities are indexed densely in id order; edges are
/// ordered by (user, entity).
class Fig {
 public:
  Fig() = default;

  /// Assembles a graph from already aggregated parts. Users and entities must
  /// be sorted by id and unique; edges must reference valid nodes.
  static Fig from_parts(std::vector<std::string> users, std::vector<EntityNode> entities,
                        std::vector<InteractionEdge> edges);

  std::size_t num_users() const { return users_.size(); }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  const std::string& user_id(NodeIndex u) const { return users_[u]; }
  const EntityNode& entity(NodeIndex e) const { return entities_[e]; }
  const InteractionEdge& edge(EdgeIndex i) const { return edges_[i]; }

  std::span<const std::string> users() const { return users_; }
  std::span<const EntityNode> entities() const { return entities_; }
  std::span<const InteractionEdge> edges() const { return edges_; }

  std::optional<NodeIndex> find_user(std::string_view id) const;
  std::optional<NodeIndex> find_entity(std::string_view id) const;

  /// Edge indices incident to a user, ordered by entity index.
  std::span<const EdgeIndex> user_edges(NodeIndex u) const;
  /// Edge indices incident to an entity, ordered by user index.
  std::span<const EdgeIndex> entity_edges(NodeIndex e) const;

  std::size_t user_degree(NodeIndex u) const { return user_edges(u).size(); }
  std::size_t entity_degree(NodeIndex e) const { return entity_edges(e).size(); }

  const InteractionEdge* find_edge(NodeIndex u, NodeIndex e) const;
  /// True when every utterance and rewrite target is already normalized.
  bool text_normalized() const { return text_normalized_; }
  bool adjacent(NodeIndex u, NodeIndex e) const { return find_edge(u, e) != nullptr; }

  bool operator==(const Fig& other) const {
    return users_ == other.users_ && entities_ == other.entities_ && edges_ == other.edges_;
  }

 private:
  std::vector<std::string> users_;
  std::vector<EntityNode> entities_;
  std::vector<InteractionEdge> edges_;
  bool text_normalized_ = true;
  std::unordered_map<std::string, NodeIndex> user_lookup_;
  std::unordered_map<std::string, NodeIndex> entity_lookup_;
  // CSR adjacency: offsets index into the *_adj_ arrays.
  std::vector<std::size_t> user_offsets_;
  std::vector<EdgeIndex> user_adj_;
  std::vector<std::size_t> entity_offsets_;
  std::vector<EdgeIndex> entity_adj_;
};

/// Aggregates records into one edge per (user, entity). Utterances and rewrite
/// targets are normalized; per-query and per-edge signals are averaged over
/// contributing records (defect_rate is the mean defect score). The result
/// does not depend on record order.
Fig build_graph(const std::vector<LogRecord>& records, const GraphOptions& options = {});

const InteractionEdge* edge_lookup(const Fig& graph, std::string_view user_id,
                                   std::string_view entity_id);

inline constexpr std::size_t kDefaultHistoryCap = 100;

struct UserHistoryIndex {
  std::string user_id;
  std::vector<RewriteCandidate> entries;
};

/// The user's own queries ranked by (impression desc, defect_rate asc,
/// utterance, rewrite_target, entity id) and truncated to `cap`.
UserHistoryIndex build_user_history_index(const Fig& graph, std::string_view user_id,
                                          std::size_t cap = kDefaultHistoryCap);

// Line-delimited text with a version header. Doubles are written in shortest
// round-trip form, so load(save(g)) == g.
void save_graph(std::ostream& out, const Fig& graph);
Fig load_graph(std::istream& in);
void save_graph_file(const std::filesystem::path& path, const Fig& graph);
Fig load_graph_file(const std::filesystem::path& path);

}  // namespace cqr
