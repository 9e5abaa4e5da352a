#include "cqr/eval.h"

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "cqr/affinity.h"
#include "cqr/synth.h"
#include "cqr/text.h"

namespace cqr {

std::vector<OpportunityPair> mine_opportunity_pairs(const std::vector<LogRecord>& records,
                                                    const MiningOptions& options) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = records[a];
    const auto& y = records[b];
    return std::tie(x.user_id, x.session_id, x.timestamp) < std::tie(y.user_id, y.session_id, y.timestamp);
  });

  std::vector<OpportunityPair> out;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    const auto& a = records[order[k]];
    const auto& b = records[order[k + 1]];
    if (a.user_id != b.user_id || a.session_id != b.session_id) continue;
    if (!is_defective(a.defect_score) || is_defective(b.defect_score)) continue;
    const auto gap = b.timestamp - a.timestamp;
    if (gap < 0 || gap > options.max_gap_seconds) continue;
    auto bad = normalize_utterance(a.utterance);
    auto good = normalize_utterance(b.utterance);
    if (bad.empty() || good.empty()) continue;
    if (normalized_edit_distance(bad, good) > options.edit_threshold) continue;
    out.push_back({a.user_id, a.session_id, a.timestamp, std::move(bad), std::move(good), b.entity_id, b.domain,
                   false});
  }
  return out;
}

std::set<std::string> history_texts(const Fig& graph, std::string_view user_id, std::size_t cap) {
  std::set<std::string> out;
  for (const auto& c : build_user_history_index(graph, user_id, cap).entries) {
    out.insert(normalize_utterance(c.utterance));
    if (c.rewrite_target) out.insert(normalize_utterance(*c.rewrite_target));
  }
  return out;
}

std::pair<std::vector<OpportunityPair>, std::vector<OpportunityPair>> split_seen_unseen(
    std::vector<OpportunityPair> pairs, const Fig& history_graph, std::size_t history_cap) {
  std::unordered_map<std::string, std::set<std::string>> texts;
  std::pair<std::vector<OpportunityPair>, std::vector<OpportunityPair>> out;
  for (auto& p : pairs) {
    auto it = texts.find(p.user_id);
    if (it == texts.end()) it = texts.emplace(p.user_id, history_texts(history_graph, p.user_id, history_cap)).first;
    p.seen = it->second.count(normalize_utterance(p.rewrite_label)) > 0;
    (p.seen ? out.first : out.second).push_back(std::move(p));
  }
  return out;
}

std::vector<GuardrailCase> build_guardrail_set(const std::vector<LogRecord>& records, std::size_t sample_size,
                                               std::uint64_t seed) {
  // (user, utterance) -> (timestamp, entity) of the earliest occurrence.
  std::map<std::pair<std::string, std::string>, std::pair<std::int64_t, std::string>> universe;
  for (const auto& r : records) {
    if (is_defective(r.defect_score) || r.rewrite_target) continue;
    auto text = normalize_utterance(r.utterance);
    if (text.empty()) continue;
    std::pair<std::int64_t, std::string> v{r.timestamp, r.entity_id};
    auto [it, inserted] = universe.emplace(std::make_pair(r.user_id, std::move(text)), v);
    if (!inserted && v < it->second) it->second = v;
  }
  std::vector<GuardrailCase> all;
  all.reserve(universe.size());
  for (auto& [k, v] : universe) all.push_back({k.first, k.second, v.second});
  if (sample_size == 0 || sample_size >= all.size()) return all;

  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < sample_size; ++i) {
    const auto j = i + rng.below(all.size() - i);
    std::swap(all[i], all[j]);
  }
  all.resize(sample_size);
  std::sort(all.begin(), all.end(), [](const GuardrailCase& a, const GuardrailCase& b) {
    return std::tie(a.user_id, a.utterance) < std::tie(b.user_id, b.utterance);
  });
  return all;
}

std::optional<double> SetMetrics::precision_at_1() const {
  if (triggered == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(triggered);
}

double SetMetrics::trigger_rate() const {
  return total == 0 ? 0.0 : static_cast<double>(triggered) / static_cast<double>(total);
}

bool rewrite_correct(const SystemAnswer& answer, const OpportunityPair& pair) {
  if (!answer.triggered) return false;
  if (!answer.entity_id.empty() && !pair.label_entity_id.empty()) return answer.entity_id == pair.label_entity_id;
  return normalize_utterance(answer.rewrite) == normalize_utterance(pair.rewrite_label);
}

SetMetrics evaluate_opportunities(const RewriteSystem& system, std::string name,
                                  const std::vector<OpportunityPair>& pairs) {
  SetMetrics m;
  m.name = std::move(name);
  for (const auto& p : pairs) {
    const auto a = system.answer(p.user_id, p.defective_utterance);
    ++m.total;
    if (a.triggered) {
      ++m.triggered;
      if (rewrite_correct(a, p)) ++m.correct;
    }
  }
  return m;
}

SetMetrics evaluate_guardrail(const RewriteSystem& system, const std::vector<GuardrailCase>& cases) {
  SetMetrics m;
  m.name = "guardrail";
  for (const auto& c : cases) {
    ++m.total;
    if (system.answer(c.user_id, c.utterance).triggered) ++m.triggered;
  }
  return m;
}

MetricsReport evaluate(const RewriteSystem& system,
                       const std::vector<std::pair<std::string, std::vector<OpportunityPair>>>& opportunity_sets,
                       const std::vector<GuardrailCase>& guardrail) {
  MetricsReport r;
  for (const auto& [name, pairs] : opportunity_sets) r.opportunity.push_back(evaluate_opportunities(system, name, pairs));
  r.guardrail = evaluate_guardrail(system, guardrail);
  return r;
}

std::vector<EvalInteraction> eval_interactions(const std::vector<LogRecord>& records,
                                               const std::vector<OpportunityPair>& pairs) {
  std::set<std::pair<std::string, std::string>> labels;
  for (const auto& p : pairs) labels.emplace(p.user_id, normalize_utterance(p.rewrite_label));

  std::map<std::pair<std::string, std::string>, std::tuple<std::int64_t, std::string, Domain>> first;
  for (const auto& r : records) {
    if (is_defective(r.defect_score) || r.rewrite_target) continue;
    auto text = normalize_utterance(r.utterance);
    if (text.empty()) continue;
    std::tuple<std::int64_t, std::string, Domain> v{r.timestamp, r.entity_id, r.domain};
    auto [it, inserted] = first.emplace(std::make_pair(r.user_id, std::move(text)), v);
    if (!inserted && v < it->second) it->second = v;
  }
  std::vector<EvalInteraction> out;
  out.reserve(first.size());
  for (const auto& [k, v] : first) {
    out.push_back({k.first, k.second, std::get<1>(v), std::get<2>(v), labels.count(k) > 0});
  }
  return out;
}

std::vector<EvalInteraction> unseen_interactions(const std::vector<EvalInteraction>& interactions,
                                                 const Fig& history_graph, std::size_t history_cap) {
  std::unordered_map<std::string, std::set<std::string>> texts;
  std::vector<EvalInteraction> out;
  for (const auto& i : interactions) {
    auto it = texts.find(i.user_id);
    if (it == texts.end()) it = texts.emplace(i.user_id, history_texts(history_graph, i.user_id, history_cap)).first;
    if (!it->second.count(i.text)) out.push_back(i);
  }
  return out;
}

namespace {

constexpr int kUnreached = std::numeric_limits<int>::max();

void tally(CoverageFraction& f, bool covered) {
  ++f.total;
  if (covered) ++f.covered;
}

}  // namespace

CoverageReport coverage_report(const Fig& graph, const std::vector<EvalInteraction>& unseen,
                               const std::vector<RankedIndexSet>& indexes, const CoverageOptions& options) {
  if (options.max_hop < 1 || options.max_hop > 5) throw std::invalid_argument("max_hop must be in [1, 5]");
  CoverageReport report;
  for (int n = 1; n <= options.max_hop; ++n) report.hops.push_back({n, {}, {}, {}, {}});

  // Edges carrying each label text.
  std::unordered_map<std::string, std::vector<EdgeIndex>> edges_with_text;
  for (const auto& i : unseen) edges_with_text.emplace(i.text, std::vector<EdgeIndex>{});
  for (EdgeIndex ei = 0; ei < graph.num_edges(); ++ei) {
    for (const auto& q : graph.edge(ei).queries) {
      for (const std::string* t : {&q.utterance, q.rewrite_target ? &*q.rewrite_target : nullptr}) {
        if (!t) continue;
        auto it = edges_with_text.find(*t);
        if (it != edges_with_text.end() && (it->second.empty() || it->second.back() != ei)) it->second.push_back(ei);
      }
    }
  }

  std::vector<std::size_t> order(unseen.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return unseen[a].user_id < unseen[b].user_id; });

  std::string current;
  std::optional<NodeIndex> x;
  HopDistances dist;
  std::set<std::string> history;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& in = unseen[order[k]];
    if (k == 0 || in.user_id != current) {
      current = in.user_id;
      x = graph.find_user(current);
      dist = x ? hop_distances(graph, *x, options.max_hop) : HopDistances{};
      history = history_texts(graph, current, options.history_cap);
    }
    int entity_hop = kUnreached;
    int query_hop = history.count(in.text) ? 1 : kUnreached;
    if (x) {
      if (auto e = graph.find_entity(in.entity_id); e && dist.entity[*e] >= 0) entity_hop = dist.entity[*e];
      for (EdgeIndex ei : edges_with_text[in.text]) {
        const auto& edge = graph.edge(ei);
        if (edge.user == *x) continue;
        const int du = dist.user[edge.user];
        const int de = dist.entity[edge.entity];
        if (du < 0 || de < 0) continue;
        query_hop = std::min(query_hop, std::max({du, de, 1}));
      }
    }
    for (auto& h : report.hops) {
      tally(h.entity_level, entity_hop <= h.hop);
      tally(h.query_level, query_hop <= h.hop);
      if (in.defective) {
        tally(h.entity_level_defective, entity_hop <= h.hop);
        tally(h.query_level_defective, query_hop <= h.hop);
      }
    }
  }

  const std::vector<std::string> domains = {"all", "music", "video", "other"};
  for (const auto& idx : indexes) {
    // Per user: text -> first position in the ranked list.
    std::unordered_map<std::string, std::unordered_map<std::string, std::size_t>> position;
    for (const auto& [user, entries] : idx.by_user) {
      auto& pos = position[user];
      for (std::size_t i = 0; i < entries.size(); ++i) {
        pos.emplace(normalize_utterance(entries[i].utterance), i);
        if (entries[i].rewrite_target) pos.emplace(normalize_utterance(*entries[i].rewrite_target), i);
      }
    }
    for (auto cap : options.caps) {
      for (const auto& d : domains) {
        CapCoverage cc{idx.name, cap, d, {}};
        for (const auto& in : unseen) {
          if (d != "all" && to_string(in.domain) != d) continue;
          bool covered = false;
          if (auto u = position.find(in.user_id); u != position.end()) {
            auto p = u->second.find(in.text);
            covered = p != u->second.end() && p->second < cap;
          }
          tally(cc.coverage, covered);
        }
        report.caps.push_back(std::move(cc));
      }
    }
  }
  return report;
}

}  // namespace cqr
