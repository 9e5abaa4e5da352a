#include "cqr/affinity.h"

#include <algorithm>
#include <deque>
#include <optional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "cqr/text.h"

namespace cqr {

AffinityStats pair_stats(const Fig& graph, NodeIndex x, NodeIndex y) {
  AffinityStats s;
  const auto xa = graph.user_edges(x);
  const auto ya = graph.user_edges(y);
  std::size_t shared = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < xa.size() && j < ya.size()) {
    const auto& ex = graph.edge(xa[i]);
    const auto& ey = graph.edge(ya[j]);
    if (ex.entity < ey.entity) {
      ++i;
    } else if (ey.entity < ex.entity) {
      ++j;
    } else {
      ++shared;
      if (graph.entity(ex.entity).cls() == EntityClass::kA) {
        ++s.unique_path_count;
        s.path_impression_sum += ex.signals.impression + ey.signals.impression;
      }
      ++i;
      ++j;
    }
  }
  const auto dx = static_cast<std::int64_t>(xa.size());
  const auto dy = static_cast<std::int64_t>(ya.size());
  s.degree_difference = dx > dy ? dx - dy : dy - dx;
  const auto uni = xa.size() + ya.size() - shared;
  s.neighborhood_jaccard_distance =
      uni == 0 ? 0.0 : 1.0 - static_cast<double>(shared) / static_cast<double>(uni);
  return s;
}

namespace {

// Accumulates the pair statistics for every peer in one pass over X's
// entities; values equal pair_stats(graph, x, y).
std::vector<PeerAffinity> peers_of(const Fig& graph, NodeIndex x) {
  struct Acc {
    std::int64_t shared = 0;
    std::int64_t paths = 0;
    std::int64_t path_impressions = 0;
  };
  std::unordered_map<NodeIndex, Acc> acc;
  for (EdgeIndex ei : graph.user_edges(x)) {
    const auto& ex = graph.edge(ei);
    const bool class_a = graph.entity(ex.entity).cls() == EntityClass::kA;
    for (EdgeIndex fi : graph.entity_edges(ex.entity)) {
      const auto& ey = graph.edge(fi);
      if (ey.user == x) continue;
      auto& a = acc[ey.user];
      ++a.shared;
      if (class_a) {
        ++a.paths;
        a.path_impressions += ex.signals.impression + ey.signals.impression;
      }
    }
  }
  std::vector<NodeIndex> peers;
  peers.reserve(acc.size());
  for (const auto& kv : acc) peers.push_back(kv.first);
  std::sort(peers.begin(), peers.end());

  const auto dx = static_cast<std::int64_t>(graph.user_degree(x));
  std::vector<PeerAffinity> out;
  out.reserve(peers.size());
  for (NodeIndex y : peers) {
    const auto& a = acc[y];
    const auto dy = static_cast<std::int64_t>(graph.user_degree(y));
    AffinityStats s;
    s.unique_path_count = a.paths;
    s.path_impression_sum = a.path_impressions;
    s.degree_difference = dx > dy ? dx - dy : dy - dx;
    const auto uni = dx + dy - a.shared;
    s.neighborhood_jaccard_distance =
        uni == 0 ? 0.0 : 1.0 - static_cast<double>(a.shared) / static_cast<double>(uni);
    out.push_back({y, graph.user_id(y), s, false});
  }
  return out;
}

std::unordered_set<std::string> history_utterances(const Fig& graph, std::string_view user_id,
                                                   std::size_t cap) {
  std::unordered_set<std::string> out;
  for (auto& c : build_user_history_index(graph, user_id, cap).entries) {
    out.insert(normalize_utterance(c.utterance));
  }
  return out;
}

}  // namespace

std::vector<PeerAffinity> qualified_peers(const Fig& graph, std::string_view user_id) {
  auto x = graph.find_user(user_id);
  if (!x) return {};
  auto peers = peers_of(graph, *x);
  for (auto& p : peers) p.class_a_qualified = p.stats.unique_path_count >= kMinSharedPaths;
  return peers;
}

std::vector<RewriteCandidate> collect_candidates(const Fig& graph, std::string_view user_id,
                                                 const TraversalOptions& options) {
  auto xo = graph.find_user(user_id);
  if (!xo) return {};
  const NodeIndex x = *xo;

  const auto history = history_utterances(graph, user_id, options.history_cap);
  auto peers = peers_of(graph, x);
  for (auto& p : peers) p.class_a_qualified = p.stats.unique_path_count >= options.min_shared_paths;

  std::vector<char> x_adj(graph.num_entities(), 0);
  for (EdgeIndex ei : graph.user_edges(x)) x_adj[graph.edge(ei).entity] = 1;

  // Entity occurrence counts within the constrained affinity.
  std::unordered_map<NodeIndex, std::int64_t> affinity_impression;
  for (const auto& p : peers) {
    for (EdgeIndex ei : graph.user_edges(p.peer)) {
      const auto& e = graph.edge(ei);
      const auto cls = graph.entity(e.entity).cls();
      const bool hop3 = cls == EntityClass::kA && p.class_a_qualified && !x_adj[e.entity];
      const bool hop2 = cls == EntityClass::kB && x_adj[e.entity];
      if (hop3 || hop2) affinity_impression[e.entity] += e.signals.impression;
    }
  }

  std::vector<RewriteCandidate> out;
  for (const auto& p : peers) {
    for (EdgeIndex ei : graph.user_edges(p.peer)) {
      const auto& e = graph.edge(ei);
      const auto& ent = graph.entity(e.entity);
      int hop = 0;
      if (ent.cls() == EntityClass::kA && p.class_a_qualified && !x_adj[e.entity]) {
        hop = 3;
      } else if (ent.cls() == EntityClass::kB && x_adj[e.entity]) {
        hop = 2;
      } else {
        continue;
      }
      AffinityStats stats = p.stats;
      stats.affinity_impression = affinity_impression[e.entity];
      for (const auto& q : e.queries) {
        if (history.count(normalize_utterance(q.utterance))) continue;
        out.push_back({q.utterance, q.rewrite_target, p.peer_id, ent.id, ent.cls(), hop, q.signals,
                       stats});
      }
    }
  }
  return out;
}

CollaborativeIndex rank_and_cap(std::vector<RewriteCandidate> candidates, std::size_t cap,
                                std::string user_id) {
  if (cap < 1) throw std::invalid_argument("cap must be >= 1");

  // Preference among duplicates of one utterance.
  auto dedup_key = [](const RewriteCandidate& c) {
    return std::make_tuple(-c.affinity.affinity_impression, c.hop, c.signals.defect_rate,
                           -c.signals.impression, std::cref(c.rewrite_target),
                           std::cref(c.source_entity_id), std::cref(c.source_user_id));
  };

  std::vector<std::string> norm(candidates.size());
  std::unordered_map<std::string_view, std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    norm[i] = normalize_utterance(candidates[i].utterance);
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto [it, inserted] = best.emplace(norm[i], i);
    if (!inserted && dedup_key(candidates[i]) < dedup_key(candidates[it->second])) it->second = i;
  }

  std::vector<std::size_t> order;
  order.reserve(best.size());
  for (const auto& kv : best) order.push_back(kv.second);
  auto rank_key = [&](std::size_t i) {
    const auto& c = candidates[i];
    return std::make_tuple(c.hop, -c.affinity.affinity_impression, c.signals.defect_rate,
                           -c.signals.impression, std::cref(norm[i]));
  };
  const std::size_t keep = std::min(cap, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) { return rank_key(a) < rank_key(b); });

  CollaborativeIndex index{std::move(user_id), cap, {}};
  index.entries.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) index.entries.push_back(std::move(candidates[order[i]]));
  return index;
}

namespace {

// A candidate by reference, either a peer query or an entry of `extra`.
struct CandidateRef {
  std::string_view key;  // normalized utterance
  std::int64_t affinity_impression = 0;
  int hop = 0;
  const FeedbackSignals* signals = nullptr;
  const std::optional<std::string>* target = nullptr;
  const std::string* entity_id = nullptr;
  const std::string* user_id = nullptr;
  const QueryRecord* query = nullptr;
  const PeerAffinity* peer = nullptr;
  NodeIndex entity = 0;
  const RewriteCandidate* extra = nullptr;
};

auto dedup_key(const CandidateRef& r) {
  return std::make_tuple(-r.affinity_impression, r.hop, r.signals->defect_rate, -r.signals->impression,
                         std::cref(*r.target), std::cref(*r.entity_id), std::cref(*r.user_id));
}

auto rank_key(const CandidateRef& r) {
  return std::make_tuple(r.hop, -r.affinity_impression, r.signals->defect_rate, -r.signals->impression, r.key);
}

}  // namespace

CollaborativeIndex build_ranked_index(const Fig& graph, std::string_view user_id, std::size_t cap,
                                      const TraversalOptions& options, const std::vector<RewriteCandidate>& extra) {
  if (cap < 1) throw std::invalid_argument("cap must be >= 1");
  CollaborativeIndex index{std::string(user_id), cap, {}};

  std::deque<std::string> owned;  // normalized copies of non-normalized text
  const bool trusted = graph.text_normalized();
  auto key_of = [&owned, trusted](const std::string& s) -> std::string_view {
    if (trusted || is_normalized(s)) return s;
    return owned.emplace_back(normalize_utterance(s));
  };

  std::vector<CandidateRef> refs;
  std::unordered_map<std::string_view, std::size_t> best;
  auto offer = [&](CandidateRef r) {
    auto [it, inserted] = best.emplace(r.key, refs.size());
    if (inserted) {
      refs.push_back(r);
    } else if (dedup_key(r) < dedup_key(refs[it->second])) {
      refs[it->second] = r;
    }
  };

  std::vector<PeerAffinity> peers;
  if (auto xo = graph.find_user(user_id)) {
    const NodeIndex x = *xo;
    const auto history_index = build_user_history_index(graph, user_id, options.history_cap);
    std::unordered_set<std::string_view> history;
    for (const auto& c : history_index.entries) history.insert(key_of(c.utterance));

    peers = peers_of(graph, x);
    for (auto& p : peers) p.class_a_qualified = p.stats.unique_path_count >= options.min_shared_paths;
    std::vector<char> x_adj(graph.num_entities(), 0);
    for (EdgeIndex ei : graph.user_edges(x)) x_adj[graph.edge(ei).entity] = 1;

    auto hop_of = [&](const PeerAffinity& p, NodeIndex e) {
      const auto cls = graph.entity(e).cls();
      if (cls == EntityClass::kA && p.class_a_qualified && !x_adj[e]) return 3;
      if (cls == EntityClass::kB && x_adj[e]) return 2;
      return 0;
    };
    std::vector<std::int64_t> affinity_impression(graph.num_entities(), 0);
    for (const auto& p : peers) {
      for (EdgeIndex ei : graph.user_edges(p.peer)) {
        const auto& e = graph.edge(ei);
        if (hop_of(p, e.entity)) affinity_impression[e.entity] += e.signals.impression;
      }
    }
    for (const auto& p : peers) {
      for (EdgeIndex ei : graph.user_edges(p.peer)) {
        const auto& e = graph.edge(ei);
        const int hop = hop_of(p, e.entity);
        if (!hop) continue;
        const auto& ent = graph.entity(e.entity);
        const auto aff = affinity_impression[e.entity];
        for (const auto& q : e.queries) {
          const auto key = key_of(q.utterance);
          if (history.count(key)) continue;
          offer({key, aff, hop, &q.signals, &q.rewrite_target, &ent.id, &p.peer_id, &q, &p, e.entity, nullptr});
        }
      }
    }
  }
  for (const auto& c : extra) {
    offer({key_of(c.utterance), c.affinity.affinity_impression, c.hop, &c.signals, &c.rewrite_target,
           &c.source_entity_id, &c.source_user_id, nullptr, nullptr, 0, &c});
  }

  std::vector<std::size_t> order(refs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t keep = std::min(cap, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) { return rank_key(refs[a]) < rank_key(refs[b]); });

  index.entries.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& r = refs[order[i]];
    if (r.extra) {
      index.entries.push_back(*r.extra);
      continue;
    }
    AffinityStats stats = r.peer->stats;
    stats.affinity_impression = r.affinity_impression;
    const auto& ent = graph.entity(r.entity);
    index.entries.push_back({r.query->utterance, r.query->rewrite_target, r.peer->peer_id, ent.id, ent.cls(), r.hop,
                             r.query->signals, stats});
  }
  return index;
}

HopDistances hop_distances(const Fig& graph, NodeIndex start, int max_hops) {
  HopDistances d{std::vector<int>(graph.num_users(), -1), std::vector<int>(graph.num_entities(), -1)};
  d.user[start] = 0;
  // Odd hops expand users to entities, even hops entities to users.
  std::vector<NodeIndex> frontier{start};
  for (int hop = 1; hop <= max_hops && !frontier.empty(); ++hop) {
    std::vector<NodeIndex> next;
    for (NodeIndex node : frontier) {
      if (hop % 2 == 1) {
        for (EdgeIndex ei : graph.user_edges(node)) {
          const NodeIndex e = graph.edge(ei).entity;
          if (d.entity[e] < 0) {
            d.entity[e] = hop;
            next.push_back(e);
          }
        }
      } else {
        for (EdgeIndex ei : graph.entity_edges(node)) {
          const NodeIndex u = graph.edge(ei).user;
          if (d.user[u] < 0) {
            d.user[u] = hop;
            next.push_back(u);
          }
        }
      }
    }
    frontier = std::move(next);
  }
  return d;
}

std::set<std::string> n_hop_affinity_entities(const Fig& graph, std::string_view user_id, int n) {
  if (n < 1 || n > 5) throw std::invalid_argument("n must be in [1, 5]");
  std::set<std::string> out;
  auto x = graph.find_user(user_id);
  if (!x) return out;
  const auto d = hop_distances(graph, *x, n);
  for (NodeIndex e = 0; e < graph.num_entities(); ++e) {
    if (d.entity[e] >= 0) out.insert(graph.entity(e).id);
  }
  return out;
}

const std::string_view kCollaborativeIndexHeader =
    "#user_id\tutterance\thas_target\trewrite_target\thop\tentity_id\tsource_user_id\t"
    "entity_class\timpression\tdefect_rate\tbarge_in_rate\ttermination_rate\t"
    "unique_path_count\tpath_impression_sum\tdegree_difference\t"
    "neighborhood_jaccard_distance\taffinity_impression";

namespace {
constexpr std::size_t kIndexFields = 17;
}

void write_collaborative_indexes(std::ostream& out, const std::vector<CollaborativeIndex>& indexes) {
  out << kCollaborativeIndexHeader << '\n';
  const std::size_t cap = indexes.empty() ? kTraversalOnlyCap : indexes.front().cap;
  for (const auto& idx : indexes) {
    if (idx.cap != cap) throw std::invalid_argument("indexes in one file must share a cap");
  }
  out << "#cap\t" << cap << '\n';
  for (const auto& idx : indexes) {
    for (const auto& c : idx.entries) {
      out << idx.user_id << '\t' << c.utterance << '\t' << (c.rewrite_target ? 1 : 0) << '\t'
          << c.rewrite_target.value_or("") << '\t' << c.hop << '\t' << c.source_entity_id << '\t'
          << c.source_user_id << '\t' << to_string(c.entity_class) << '\t' << c.signals.impression
          << '\t' << format_double(c.signals.defect_rate) << '\t'
          << format_double(c.signals.barge_in_rate) << '\t'
          << format_double(c.signals.termination_rate) << '\t' << c.affinity.unique_path_count
          << '\t' << c.affinity.path_impression_sum << '\t' << c.affinity.degree_difference << '\t'
          << format_double(c.affinity.neighborhood_jaccard_distance) << '\t'
          << c.affinity.affinity_impression << '\n';
    }
  }
}

std::vector<CollaborativeIndex> read_collaborative_indexes(std::istream& in) {
  std::vector<CollaborativeIndex> out;
  std::string line;
  if (!std::getline(in, line) || line != kCollaborativeIndexHeader) {
    throw std::runtime_error("collaborative index: missing header");
  }
  std::size_t cap = kTraversalOnlyCap;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() == 2 && f[0] == "#cap") {
      cap = static_cast<std::size_t>(parse_int(f[1]));
      continue;
    }
    if (f.size() != kIndexFields) {
      throw std::runtime_error("collaborative index: bad line " + std::to_string(line_number));
    }
    RewriteCandidate c;
    c.utterance = f[1];
    if (f[2] == "1") c.rewrite_target = std::string(f[3]);
    c.hop = static_cast<int>(parse_int(f[4]));
    c.source_entity_id = f[5];
    c.source_user_id = f[6];
    c.entity_class = f[7] == "A" ? EntityClass::kA : EntityClass::kB;
    c.signals = {parse_int(f[8]), parse_double(f[9]), parse_double(f[10]), parse_double(f[11])};
    c.affinity = {parse_int(f[12]), parse_int(f[13]), parse_int(f[14]), parse_double(f[15]),
                  parse_int(f[16])};
    if (out.empty() || out.back().user_id != f[0]) out.push_back({std::string(f[0]), cap, {}});
    out.back().entries.push_back(std::move(c));
  }
  return out;
}

}  // namespace cqr
