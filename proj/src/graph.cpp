#include "cqr/graph.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include "cqr/text.h"

namespace cqr {

Fig Fig::from_parts(std::vector<std::string> users, std::vector<EntityNode> entities,
                    std::vector<InteractionEdge> edges) {
  Fig g;
  g.users_ = std::move(users);
  g.entities_ = std::move(entities);
  g.edges_ = std::move(edges);

  for (NodeIndex i = 0; i < g.users_.size(); ++i) {
    if (i > 0 && !(g.users_[i - 1] < g.users_[i])) {
      throw std::invalid_argument("users must be sorted and unique");
    }
    g.user_lookup_.emplace(g.users_[i], i);
  }
  for (NodeIndex i = 0; i < g.entities_.size(); ++i) {
    if (i > 0 && !(g.entities_[i - 1].id < g.entities_[i].id)) {
      throw std::invalid_argument("entities must be sorted and unique");
    }
    g.entity_lookup_.emplace(g.entities_[i].id, i);
  }

  std::vector<std::size_t> user_count(g.users_.size(), 0);
  std::vector<std::size_t> entity_count(g.entities_.size(), 0);
  for (std::size_t i = 0; i < g.edges_.size(); ++i) {
    const auto& e = g.edges_[i];
    if (e.user >= g.users_.size() || e.entity >= g.entities_.size()) {
      throw std::invalid_argument("edge references a missing node");
    }
    if (i > 0) {
      const auto& prev = g.edges_[i - 1];
      if (std::tie(prev.user, prev.entity) >= std::tie(e.user, e.entity)) {
        throw std::invalid_argument("edges must be sorted by (user, entity) and unique");
      }
    }
    ++user_count[e.user];
    ++entity_count[e.entity];
    for (const auto& q : e.queries) {
      if (!is_normalized(q.utterance) || (q.rewrite_target && !is_normalized(*q.rewrite_target))) {
        g.text_normalized_ = false;
      }
    }
  }

  g.user_offsets_.assign(g.users_.size() + 1, 0);
  std::partial_sum(user_count.begin(), user_count.end(), g.user_offsets_.begin() + 1);
  g.entity_offsets_.assign(g.entities_.size() + 1, 0);
  std::partial_sum(entity_count.begin(), entity_count.end(), g.entity_offsets_.begin() + 1);

  g.user_adj_.resize(g.edges_.size());
  g.entity_adj_.resize(g.edges_.size());
  std::vector<std::size_t> ufill(g.user_offsets_.begin(), g.user_offsets_.end() - 1);
  std::vector<std::size_t> efill(g.entity_offsets_.begin(), g.entity_offsets_.end() - 1);
  // Edges are in (user, entity) order, so both fills come out sorted.
  for (EdgeIndex i = 0; i < g.edges_.size(); ++i) {
    g.user_adj_[ufill[g.edges_[i].user]++] = i;
    g.entity_adj_[efill[g.edges_[i].entity]++] = i;
  }
  return g;
}

std::optional<NodeIndex> Fig::find_user(std::string_view id) const {
  auto it = user_lookup_.find(std::string(id));
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<NodeIndex> Fig::find_entity(std::string_view id) const {
  auto it = entity_lookup_.find(std::string(id));
  if (it == entity_lookup_.end()) return std::nullopt;
  return it->second;
}

std::span<const EdgeIndex> Fig::user_edges(NodeIndex u) const {
  return std::span<const EdgeIndex>(user_adj_).subspan(user_offsets_[u],
                                                       user_offsets_[u + 1] - user_offsets_[u]);
}

std::span<const EdgeIndex> Fig::entity_edges(NodeIndex e) const {
  return std::span<const EdgeIndex>(entity_adj_)
      .subspan(entity_offsets_[e], entity_offsets_[e + 1] - entity_offsets_[e]);
}

const InteractionEdge* Fig::find_edge(NodeIndex u, NodeIndex e) const {
  if (u >= users_.size() || e >= entities_.size()) return nullptr;
  auto adj = user_edges(u);
  auto it = std::lower_bound(adj.begin(), adj.end(), e,
                             [this](EdgeIndex idx, NodeIndex ent) { return edges_[idx].entity < ent; });
  if (it == adj.end() || edges_[*it].entity != e) return nullptr;
  return &edges_[*it];
}

namespace {

struct Contribution {
  const std::string* user;
  const std::string* entity;
  std::string utterance;
  std::optional<std::string> target;
  double defect;
  bool barged;
  bool terminated;

  auto key() const {
    return std::tie(*user, *entity, utterance, target, defect, barged, terminated);
  }
};

struct Accumulator {
  std::int64_t n = 0;
  double defect_sum = 0.0;
  std::int64_t barged = 0;
  std::int64_t terminated = 0;

  void add(const Contribution& c) {
    ++n;
    defect_sum += c.defect;
    barged += c.barged ? 1 : 0;
    terminated += c.terminated ? 1 : 0;
  }

  FeedbackSignals signals() const {
    const auto d = static_cast<double>(n);
    return {n, defect_sum / d, static_cast<double>(barged) / d, static_cast<double>(terminated) / d};
  }
};

}  // namespace

Fig build_graph(const std::vector<LogRecord>& records, const GraphOptions& options) {
  if (!(options.defect_threshold > 0.0 && options.defect_threshold <= 1.0)) {
    throw std::invalid_argument("defect_threshold must be in (0, 1]");
  }

  std::vector<Contribution> contribs;
  contribs.reserve(records.size());
  std::map<std::string, EntityNode> entity_meta;
  for (const auto& r : records) {
    Contribution c{&r.user_id, &r.entity_id, normalize_utterance(r.utterance), std::nullopt,
                   r.defect_score, r.barged_in, r.terminated};
    if (c.utterance.empty()) continue;
    if (r.rewrite_target) {
      auto target = normalize_utterance(*r.rewrite_target);
      if (!target.empty() && target != c.utterance) c.target = std::move(target);
    }
    contribs.push_back(std::move(c));

    // Conflicting metadata for one id resolves to the smallest tuple, which
    // keeps the result independent of record order.
    EntityNode node{r.entity_id, r.entity_name, r.entity_type, r.domain};
    auto [it, inserted] = entity_meta.emplace(r.entity_id, node);
    if (!inserted && std::tie(node.name, node.type, node.domain) <
                         std::tie(it->second.name, it->second.type, it->second.domain)) {
      it->second = node;
    }
  }
  std::sort(contribs.begin(), contribs.end(),
            [](const Contribution& a, const Contribution& b) { return a.key() < b.key(); });

  struct PendingEdge {
    std::string user;
    std::string entity;
    std::vector<QueryRecord> queries;
    FeedbackSignals signals;
  };
  std::vector<PendingEdge> kept;

  std::size_t i = 0;
  while (i < contribs.size()) {
    std::size_t j = i;
    PendingEdge edge{*contribs[i].user, *contribs[i].entity, {}, {}};
    Accumulator edge_acc;
    while (j < contribs.size() && *contribs[j].user == edge.user && *contribs[j].entity == edge.entity) {
      std::size_t k = j;
      Accumulator q_acc;
      while (k < contribs.size() && *contribs[k].user == edge.user &&
             *contribs[k].entity == edge.entity && contribs[k].utterance == contribs[j].utterance &&
             contribs[k].target == contribs[j].target) {
        q_acc.add(contribs[k]);
        edge_acc.add(contribs[k]);
        ++k;
      }
      edge.queries.push_back({contribs[j].utterance, contribs[j].target, q_acc.signals()});
      j = k;
    }
    edge.signals = edge_acc.signals();
    if (edge.signals.defect_rate < options.defect_threshold) kept.push_back(std::move(edge));
    i = j;
  }

  std::vector<std::string> users;
  std::map<std::string, NodeIndex> entity_index;
  for (const auto& e : kept) {
    if (users.empty() || users.back() != e.user) users.push_back(e.user);
    entity_index.emplace(e.entity, 0);
  }
  std::vector<EntityNode> entities;
  entities.reserve(entity_index.size());
  for (auto& [id, idx] : entity_index) {
    idx = static_cast<NodeIndex>(entities.size());
    entities.push_back(entity_meta.at(id));
  }

  std::vector<InteractionEdge> edges;
  edges.reserve(kept.size());
  NodeIndex user_idx = 0;
  for (auto& e : kept) {
    while (users[user_idx] != e.user) ++user_idx;
    edges.push_back({user_idx, entity_index.at(e.entity), std::move(e.queries), e.signals});
  }
  return Fig::from_parts(std::move(users), std::move(entities), std::move(edges));
}

const InteractionEdge* edge_lookup(const Fig& graph, std::string_view user_id,
                                   std::string_view entity_id) {
  auto u = graph.find_user(user_id);
  auto e = graph.find_entity(entity_id);
  if (!u || !e) return nullptr;
  return graph.find_edge(*u, *e);
}

UserHistoryIndex build_user_history_index(const Fig& graph, std::string_view user_id,
                                          std::size_t cap) {
  UserHistoryIndex index{std::string(user_id), {}};
  auto u = graph.find_user(user_id);
  if (!u) return index;

  for (EdgeIndex ei : graph.user_edges(*u)) {
    const auto& edge = graph.edge(ei);
    const auto& ent = graph.entity(edge.entity);
    for (const auto& q : edge.queries) {
      index.entries.push_back({q.utterance, q.rewrite_target, index.user_id, ent.id, ent.cls(), 1,
                               q.signals, AffinityStats{}});
    }
  }
  auto key = [](const RewriteCandidate& c) {
    return std::make_tuple(-c.signals.impression, c.signals.defect_rate, std::cref(c.utterance),
                           std::cref(c.rewrite_target), std::cref(c.source_entity_id));
  };
  std::sort(index.entries.begin(), index.entries.end(),
            [&key](const RewriteCandidate& a, const RewriteCandidate& b) { return key(a) < key(b); });
  if (index.entries.size() > cap) index.entries.resize(cap);
  return index;
}

namespace {

constexpr std::string_view kGraphMagic = "cqr-fig";
constexpr int kGraphVersion = 1;

void write_signals(std::ostream& out, const FeedbackSignals& s) {
  out << s.impression << '\t' << format_double(s.defect_rate) << '\t'
      << format_double(s.barge_in_rate) << '\t' << format_double(s.termination_rate);
}

FeedbackSignals read_signals(const std::vector<std::string_view>& f, std::size_t at) {
  return {parse_int(f[at]), parse_double(f[at + 1]), parse_double(f[at + 2]), parse_double(f[at + 3])};
}

std::string next_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(std::string("graph file truncated at ") + what);
  return line;
}

std::size_t read_count(std::istream& in, std::string_view label) {
  const auto line = next_line(in, label.data());
  const auto f = split(line, ' ');
  if (f.size() != 2 || f[0] != label) {
    throw std::runtime_error("graph file: expected '" + std::string(label) + " <n>'");
  }
  return static_cast<std::size_t>(parse_int(f[1]));
}

}  // namespace

void save_graph(std::ostream& out, const Fig& g) {
  out << kGraphMagic << ' ' << kGraphVersion << '\n';
  out << "users " << g.num_users() << '\n';
  for (const auto& u : g.users()) out << u << '\n';
  out << "entities " << g.num_entities() << '\n';
  for (const auto& e : g.entities()) {
    out << e.id << '\t' << e.name << '\t' << to_string(e.type) << '\t' << to_string(e.domain) << '\n';
  }
  out << "edges " << g.num_edges() << '\n';
  for (const auto& e : g.edges()) {
    out << "E\t" << e.user << '\t' << e.entity << '\t' << e.queries.size() << '\t';
    write_signals(out, e.signals);
    out << '\n';
    for (const auto& q : e.queries) {
      out << "Q\t" << q.utterance << '\t' << (q.rewrite_target ? "1" : "0") << '\t'
          << q.rewrite_target.value_or("") << '\t';
      write_signals(out, q.signals);
      out << '\n';
    }
  }
}

Fig load_graph(std::istream& in) {
  {
    const auto header = next_line(in, "header");
    const auto f = split(header, ' ');
    if (f.size() != 2 || f[0] != kGraphMagic) throw std::runtime_error("not a graph file");
    if (parse_int(f[1]) != kGraphVersion) throw std::runtime_error("unsupported graph version");
  }
  std::vector<std::string> users(read_count(in, "users"));
  for (auto& u : users) u = next_line(in, "users");

  std::vector<EntityNode> entities(read_count(in, "entities"));
  for (auto& e : entities) {
    const auto line = next_line(in, "entities");
    const auto f = split(line, '\t');
    if (f.size() != 4) throw std::runtime_error("graph file: bad entity line");
    e = {std::string(f[0]), std::string(f[1]), parse_entity_type(f[2]), parse_domain(f[3])};
  }

  std::vector<InteractionEdge> edges(read_count(in, "edges"));
  for (auto& e : edges) {
    const auto line = next_line(in, "edges");
    const auto f = split(line, '\t');
    if (f.size() != 8 || f[0] != "E") throw std::runtime_error("graph file: bad edge line");
    e.user = static_cast<NodeIndex>(parse_int(f[1]));
    e.entity = static_cast<NodeIndex>(parse_int(f[2]));
    const auto nq = static_cast<std::size_t>(parse_int(f[3]));
    e.signals = read_signals(f, 4);
    e.queries.resize(nq);
    for (auto& q : e.queries) {
      const auto ql = next_line(in, "queries");
      const auto qf = split(ql, '\t');
      if (qf.size() != 8 || qf[0] != "Q") throw std::runtime_error("graph file: bad query line");
      q.utterance = qf[1];
      if (qf[2] == "1") q.rewrite_target = std::string(qf[3]);
      q.signals = read_signals(qf, 4);
    }
  }
  try {
    return Fig::from_parts(std::move(users), std::move(entities), std::move(edges));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("graph file: ") + e.what());
  }
}

void save_graph_file(const std::filesystem::path& path, const Fig& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write graph file " + path.string());
  save_graph(out, graph);
}

Fig load_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open graph file " + path.string());
  return load_graph(in);
}

}  // namespace cqr
