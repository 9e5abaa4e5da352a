#include "cqr/link_prediction.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "cqr/entity_names.h"
#include "cqr/text.h"

namespace cqr {

using nlohmann::json;

std::vector<PredictedLink> cooccurrence_predict(const Fig& graph, std::string_view user_id,
                                                std::size_t k, const CooccurrenceOptions& options) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  auto xo = graph.find_user(user_id);
  if (!xo) return {};
  const NodeIndex x = *xo;

  std::vector<char> excluded(graph.num_entities(), 1);
  for (NodeIndex e = 0; e < graph.num_entities(); ++e) {
    const auto d = graph.entity(e).domain;
    if (std::find(options.domains.begin(), options.domains.end(), d) != options.domains.end()) {
      excluded[e] = 0;
    }
  }
  for (EdgeIndex ei : graph.user_edges(x)) excluded[graph.edge(ei).entity] = 1;

  // score[e] = sum_h |users(h) ∩ users(e)|, accumulated one co-interacting user at a time.
  std::vector<std::int64_t> score(graph.num_entities(), 0);
  std::vector<NodeIndex> touched;
  for (EdgeIndex ei : graph.user_edges(x)) {
    for (EdgeIndex fi : graph.entity_edges(graph.edge(ei).entity)) {
      const NodeIndex u = graph.edge(fi).user;
      if (u == x) continue;
      for (EdgeIndex gi : graph.user_edges(u)) {
        const NodeIndex e = graph.edge(gi).entity;
        if (excluded[e]) continue;
        if (score[e]++ == 0) touched.push_back(e);
      }
    }
  }

  auto better = [&](NodeIndex a, NodeIndex b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return graph.entity(a).id < graph.entity(b).id;
  };
  const std::size_t keep = std::min(k, touched.size());
  std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(keep), touched.end(),
                    better);

  std::vector<PredictedLink> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    out.push_back({std::string(user_id), graph.entity(touched[i]).id, LinkSource::kCooccurrence, i + 1});
  }
  return out;
}

namespace {

std::optional<NodeIndex> ground_one(const EntityNameIndex& index, std::string_view name,
                                    const GroundingOptions& options) {
  if (auto e = index.exact(name, options.domain)) return e;
  return index.best_fuzzy(name, options.min_jaccard, options.domain);
}

}  // namespace

std::vector<std::pair<std::string, std::optional<std::string>>> ground_entities(
    const Fig& graph, const std::vector<std::string>& names, const GroundingOptions& options) {
  const EntityNameIndex index(graph);
  std::vector<std::pair<std::string, std::optional<std::string>>> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    auto e = ground_one(index, name, options);
    out.emplace_back(name, e ? std::optional<std::string>(graph.entity(*e).id) : std::nullopt);
  }
  return out;
}

std::vector<RewriteCandidate> augment_and_collect(const Fig& graph, std::string_view user_id,
                                                  const std::vector<PredictedLink>& links,
                                                  std::size_t history_cap) {
  auto xo = graph.find_user(user_id);
  if (!xo) return {};
  const NodeIndex x = *xo;

  std::unordered_set<std::string> history;
  for (auto& c : build_user_history_index(graph, user_id, history_cap).entries) {
    history.insert(normalize_utterance(c.utterance));
  }

  std::vector<RewriteCandidate> out;
  std::set<NodeIndex> done;
  for (const auto& link : links) {
    auto a = graph.find_entity(link.entity_id);
    if (!a || graph.adjacent(x, *a) || !done.insert(*a).second) continue;
    const auto& ent = graph.entity(*a);

    std::int64_t affinity_impression = 0;
    for (EdgeIndex ei : graph.entity_edges(*a)) affinity_impression += graph.edge(ei).signals.impression;

    for (EdgeIndex ei : graph.entity_edges(*a)) {
      const auto& e = graph.edge(ei);
      AffinityStats stats = pair_stats(graph, x, e.user);
      stats.affinity_impression = affinity_impression;
      for (const auto& q : e.queries) {
        if (history.count(normalize_utterance(q.utterance))) continue;
        out.push_back({q.utterance, q.rewrite_target, graph.user_id(e.user), ent.id, ent.cls(), 2,
                       q.signals, stats});
      }
    }
  }
  return out;
}

std::string finetune_instruction(Domain domain) {
  switch (domain) {
    case Domain::kVideo:
      return "Recommend 10 other movies based on the user's watching history.";
    case Domain::kMusic:
      return "Recommend ten other songs based on the user's listening history.";
    default:
      throw std::invalid_argument("fine-tune prompts exist for music and video only");
  }
}

std::string quoted_name_list(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) out += ", ";
    out += '"';
    out += names[i];
    out += '"';
  }
  return out;
}

std::string finetune_input(Domain domain, const std::vector<std::string>& names) {
  const char* lead = domain == Domain::kVideo ? "The user watched movies " : "The user listened to songs ";
  return lead + quoted_name_list(names) + ".";
}

std::vector<FinetuneExample> export_finetune_examples(const std::vector<LogRecord>& records,
                                                      const FinetuneWindows& windows) {
  if (records.empty()) return {};
  std::int64_t first = std::numeric_limits<std::int64_t>::max();
  std::int64_t last = std::numeric_limits<std::int64_t>::min();
  for (const auto& r : records) {
    first = std::min(first, r.timestamp);
    last = std::max(last, r.timestamp);
  }
  const std::int64_t end = last + 1;
  const std::int64_t label_start = end - windows.label_seconds;
  const std::int64_t history_start = std::max(first, label_start - windows.history_seconds);

  struct Seen {
    std::int64_t first_ts;
    std::string name;
    std::string entity_id;
  };
  // (user, domain) -> entity id -> first sighting, per window.
  std::map<std::pair<std::string, Domain>, std::map<std::string, Seen>> hist;
  std::map<std::pair<std::string, Domain>, std::map<std::string, Seen>> label;
  for (const auto& r : records) {
    if (is_defective(r.defect_score)) continue;
    if (r.domain != Domain::kMusic && r.domain != Domain::kVideo) continue;
    if (r.timestamp < history_start) continue;
    auto& bucket = r.timestamp < label_start ? hist : label;
    auto& m = bucket[{r.user_id, r.domain}];
    auto [it, inserted] = m.emplace(r.entity_id, Seen{r.timestamp, r.entity_name, r.entity_id});
    if (!inserted && std::tie(r.timestamp, r.entity_name) < std::tie(it->second.first_ts, it->second.name)) {
      it->second = Seen{r.timestamp, r.entity_name, r.entity_id};
    }
  }

  auto ordered_names = [](std::vector<Seen> v) {
    std::sort(v.begin(), v.end(), [](const Seen& a, const Seen& b) {
      return std::tie(a.first_ts, a.name, a.entity_id) < std::tie(b.first_ts, b.name, b.entity_id);
    });
    std::vector<std::string> names;
    for (auto& s : v) names.push_back(std::move(s.name));
    return names;
  };

  std::vector<FinetuneExample> out;
  for (const auto& [key, label_map] : label) {
    auto h = hist.find(key);
    if (h == hist.end() || h->second.empty()) continue;
    std::vector<Seen> inputs;
    for (const auto& kv : h->second) inputs.push_back(kv.second);
    std::vector<Seen> fresh;
    for (const auto& [id, seen] : label_map) {
      if (!h->second.count(id)) fresh.push_back(seen);
    }
    if (fresh.empty()) continue;
    out.push_back({key.first, key.second, finetune_instruction(key.second),
                   finetune_input(key.second, ordered_names(std::move(inputs))),
                   quoted_name_list(ordered_names(std::move(fresh)))});
  }
  return out;
}

void write_finetune_jsonl(std::ostream& out, const std::vector<FinetuneExample>& examples) {
  for (const auto& ex : examples) {
    json j = {{"instruction", ex.instruction}, {"input", ex.input}, {"label", ex.label}};
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRequest> build_prediction_requests(const Fig& graph) {
  std::vector<PredictionRequest> out;
  for (NodeIndex u = 0; u < graph.num_users(); ++u) {
    for (Domain d : {Domain::kMusic, Domain::kVideo}) {
      std::vector<std::pair<std::int64_t, std::string>> items;
      for (EdgeIndex ei : graph.user_edges(u)) {
        const auto& e = graph.edge(ei);
        const auto& ent = graph.entity(e.entity);
        if (ent.domain == d) items.emplace_back(-e.signals.impression, ent.name);
      }
      if (items.empty()) continue;
      std::sort(items.begin(), items.end());
      PredictionRequest req{graph.user_id(u), d, {}};
      for (auto& it : items) req.history.push_back(std::move(it.second));
      out.push_back(std::move(req));
    }
  }
  return out;
}

void write_predictions_request(std::ostream& out, const std::vector<PredictionRequest>& requests) {
  for (const auto& r : requests) {
    json j = {{"user_id", r.user_id}, {"domain", std::string(to_string(r.domain))}, {"history", r.history}};
    out << j.dump() << '\n';
  }
}

void write_predictions_request(const std::filesystem::path& path,
                               const std::vector<PredictionRequest>& requests) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_predictions_request(out, requests);
}

namespace {

// Parses one JSON line holding user_id, domain and a string array field.
std::tuple<std::string, Domain, std::vector<std::string>> parse_interchange_line(
    const std::string& line, const char* list_field) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw std::invalid_argument("invalid JSON");
  }
  if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
  if (!j.contains("user_id") || !j["user_id"].is_string()) throw std::invalid_argument("missing user_id");
  if (!j.contains("domain") || !j["domain"].is_string()) throw std::invalid_argument("missing domain");
  if (!j.contains(list_field) || !j[list_field].is_array()) {
    throw std::invalid_argument(std::string("missing ") + list_field);
  }
  std::vector<std::string> names;
  for (const auto& v : j[list_field]) {
    if (!v.is_string()) throw std::invalid_argument(std::string(list_field) + " must hold strings");
    names.push_back(v.get<std::string>());
  }
  return {j["user_id"].get<std::string>(), parse_domain(j["domain"].get<std::string>()), std::move(names)};
}

}  // namespace

std::vector<PredictionRequest> read_predictions_request(std::istream& in,
                                                        std::vector<LineReject>* rejects) {
  std::vector<PredictionRequest> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto [user, domain, names] = parse_interchange_line(line, "history");
      out.push_back({std::move(user), domain, std::move(names)});
    } catch (const std::invalid_argument& e) {
      if (rejects) rejects->push_back({n, e.what()});
    }
  }
  return out;
}

void write_predictions_response(std::ostream& out,
                                const std::vector<std::pair<std::string, PredictedNames>>& lines) {
  for (const auto& [user, p] : lines) {
    json j = {{"user_id", user}, {"domain", std::string(to_string(p.domain))}, {"predictions", p.names}};
    out << j.dump() << '\n';
  }
}

PredictionsFile read_predictions_file(std::istream& in) {
  PredictionsFile file;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto [user, domain, names] = parse_interchange_line(line, "predictions");
      file.by_user[user].push_back({domain, std::move(names)});
    } catch (const std::invalid_argument& e) {
      file.rejects.push_back({n, e.what()});
    }
  }
  return file;
}

PredictionsFile read_predictions_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file " + path.string());
  return read_predictions_file(in);
}

std::vector<PredictedLink> links_from_predictions(const Fig& graph, std::string_view user_id,
                                                  const std::vector<PredictedNames>& predictions,
                                                  const GroundingOptions& options) {
  auto xo = graph.find_user(user_id);
  if (!xo) return {};
  const EntityNameIndex index(graph);
  std::vector<PredictedLink> out;
  std::set<NodeIndex> seen;
  for (const auto& p : predictions) {
    GroundingOptions opts = options;
    opts.domain = p.domain;
    for (const auto& name : p.names) {
      auto e = ground_one(index, name, opts);
      if (!e || graph.adjacent(*xo, *e) || !seen.insert(*e).second) continue;
      out.push_back({std::string(user_id), graph.entity(*e).id, LinkSource::kExternal, out.size() + 1});
    }
  }
  return out;
}

}  // namespace cqr
