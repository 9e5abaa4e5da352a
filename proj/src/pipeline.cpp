#include "cqr/pipeline.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "cqr/text.h"

namespace cqr {

std::string_view to_string(IndexMode mode) {
  switch (mode) {
    case IndexMode::kTraversal:
      return "traversal";
    case IndexMode::kCooccurrence:
      return "cooccurrence";
    case IndexMode::kExternal:
      return "external";
  }
  return "traversal";
}

IndexMode parse_index_mode(std::string_view name) {
  if (name == "traversal") return IndexMode::kTraversal;
  if (name == "cooccurrence") return IndexMode::kCooccurrence;
  if (name == "external") return IndexMode::kExternal;
  throw std::invalid_argument("unknown index mode '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

struct Field {
  std::string_view key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, std::string_view)> set;
};

template <typename T>
Field num_field(std::string_view key, T PipelineConfig::*member) {
  Field f{key, nullptr, nullptr};
  f.get = [member](const PipelineConfig& c) {
    if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  f.set = [member, key](PipelineConfig& c, std::string_view v) {
    if constexpr (std::is_floating_point_v<T>) {
      c.*member = parse_double(v);
    } else {
      const long long x = parse_int(v);
      if (std::is_unsigned_v<T> && x < 0) throw std::invalid_argument(std::string(key) + " must be non-negative");
      c.*member = static_cast<T>(x);
    }
  };
  return f;
}

Field path_field(std::string_view key, std::filesystem::path PipelineConfig::*member) {
  return {key, [member](const PipelineConfig& c) { return (c.*member).string(); },
          [member](PipelineConfig& c, std::string_view v) { c.*member = std::filesystem::path(std::string(v)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      path_field("work_dir", &PipelineConfig::work_dir),
      path_field("logs_path", &PipelineConfig::logs_path),
      path_field("graph_path", &PipelineConfig::graph_path),
      path_field("index_path", &PipelineConfig::index_path),
      path_field("predictions_path", &PipelineConfig::predictions_path),
      path_field("weights_path", &PipelineConfig::weights_path),
      path_field("report_dir", &PipelineConfig::report_dir),
      num_field("defect_threshold", &PipelineConfig::defect_threshold),
      num_field("history_cap", &PipelineConfig::history_cap),
      num_field("traversal_cap", &PipelineConfig::traversal_cap),
      num_field("prediction_cap", &PipelineConfig::prediction_cap),
      num_field("predictions_per_user", &PipelineConfig::predictions_per_user),
      {"index_mode", [](const PipelineConfig& c) { return std::string(to_string(c.index_mode)); },
       [](PipelineConfig& c, std::string_view v) { c.index_mode = parse_index_mode(v); }},
      num_field("max_hop", &PipelineConfig::max_hop),
      num_field("embedding_dim", &PipelineConfig::embedding_dim),
      num_field("hash_seed", &PipelineConfig::hash_seed),
      num_field("retrieval_k", &PipelineConfig::retrieval_k),
      num_field("trigger_threshold", &PipelineConfig::trigger_threshold),
      num_field("max_gap_seconds", &PipelineConfig::max_gap_seconds),
      num_field("edit_threshold", &PipelineConfig::edit_threshold),
      num_field("guardrail_size", &PipelineConfig::guardrail_size),
      num_field("guardrail_seed", &PipelineConfig::guardrail_seed),
      num_field("learning_rate", &PipelineConfig::learning_rate),
      num_field("epochs", &PipelineConfig::epochs),
      num_field("l2", &PipelineConfig::l2),
  };
  return all;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

void PipelineConfig::validate() const {
  world.validate();
  require(defect_threshold > 0.0 && defect_threshold <= 1.0, "defect_threshold must be in (0, 1]");
  require(history_cap >= 1, "history_cap must be >= 1");
  require(traversal_cap >= 1 && prediction_cap >= 1, "caps must be >= 1");
  require(predictions_per_user >= 1, "predictions_per_user must be >= 1");
  require(max_hop >= 1 && max_hop <= 5, "max_hop must be in [1, 5]");
  require(embedding_dim >= 1, "embedding_dim must be >= 1");
  require(retrieval_k >= 1, "retrieval_k must be >= 1");
  require(trigger_threshold > 0.0 && trigger_threshold < 1.0, "trigger_threshold must be in (0, 1)");
  require(max_gap_seconds >= 0, "max_gap_seconds must be >= 0");
  require(edit_threshold >= 0.0 && edit_threshold <= 1.0, "edit_threshold must be in [0, 1]");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(epochs >= 1, "epochs must be >= 1");
  require(l2 >= 0.0, "l2 must be >= 0");
}

PipelineConfig PipelineConfig::resolved() const {
  PipelineConfig c = *this;
  auto fill = [&](std::filesystem::path& p, const char* name) {
    if (p.empty()) p = work_dir / name;
  };
  fill(c.logs_path, "logs.tsv");
  fill(c.graph_path, "graph.fig");
  fill(c.index_path, "collaborative.tsv");
  fill(c.predictions_path, "predictions.jsonl");
  fill(c.weights_path, "weights.txt");
  fill(c.report_dir, "reports");
  return c;
}

std::vector<std::pair<std::string, std::string>> config_items(const PipelineConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(std::string(f.key), f.get(config));
  for (auto& [k, v] : world_config_items(config.world)) out.emplace_back("world." + k, v);
  return out;
}

bool set_config_item(PipelineConfig& config, std::string_view key, std::string_view value) {
  if (key.substr(0, 6) == "world.") return set_world_config_item(config.world, key.substr(6), value);
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return true;
    }
  }
  return false;
}

PipelineConfig parse_config(std::istream& in, PipelineConfig base) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(n) + ": expected key = value");
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    try {
      if (!set_config_item(base, key, value)) throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  return parse_config(in, std::move(base));
}

void apply_env_overrides(PipelineConfig& config) {
  for (const auto& [key, value] : config_items(config)) {
    std::string env = "CQR_";
    for (char c : key) env += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(env.c_str())) {
      try {
        set_config_item(config, key, v);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(env + ": " + e.what());
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Indexes

CollaborativeIndex build_collaborative_index(const Fig& graph, std::string_view user_id, IndexMode mode,
                                             std::size_t cap, std::size_t history_cap,
                                             std::size_t predictions_per_user, const PredictionsFile* predictions) {
  TraversalOptions opts;
  opts.history_cap = history_cap;
  std::vector<PredictedLink> links;
  if (mode == IndexMode::kCooccurrence && graph.find_user(user_id)) {
    links = cooccurrence_predict(graph, user_id, predictions_per_user);
  } else if (mode == IndexMode::kExternal && predictions) {
    if (auto it = predictions->by_user.find(std::string(user_id)); it != predictions->by_user.end()) {
      links = links_from_predictions(graph, user_id, it->second);
    }
  }
  std::vector<RewriteCandidate> extra;
  if (!links.empty()) extra = augment_and_collect(graph, user_id, links, history_cap);
  return build_ranked_index(graph, user_id, cap, opts, extra);
}

std::vector<CollaborativeIndex> build_collaborative_indexes(const Fig& graph, IndexMode mode, std::size_t cap,
                                                            std::size_t history_cap, std::size_t predictions_per_user,
                                                            const PredictionsFile* predictions) {
  std::vector<CollaborativeIndex> out;
  out.reserve(graph.num_users());
  for (const auto& u : graph.users()) {
    out.push_back(build_collaborative_index(graph, u, mode, cap, history_cap, predictions_per_user, predictions));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Engine

RewriteEngine::RewriteEngine(std::shared_ptr<const Fig> graph, const std::vector<CollaborativeIndex>& collaborative,
                             EngineOptions options)
    : graph_(std::move(graph)),
      options_(options),
      encoder_(std::make_shared<HashingEncoder>(options.encoder)),
      cache_(encoder_),
      extractor_(*graph_) {
  if (options_.retrieval_k < 1) throw std::invalid_argument("retrieval_k must be >= 1");
  std::unordered_map<std::string, const CollaborativeIndex*> by_user;
  for (const auto& idx : collaborative) by_user[idx.user_id] = &idx;

  for (const auto& u : graph_->users()) {
    auto& entries = users_[u];
    entries.candidates = build_user_history_index(*graph_, u, options_.history_cap).entries;
    if (auto it = by_user.find(u); it != by_user.end()) {
      const auto& c = it->second->entries;
      entries.candidates.insert(entries.candidates.end(), c.begin(), c.end());
    }
    entries.embeddings.reserve(entries.candidates.size());
    for (const auto& c : entries.candidates) entries.embeddings.push_back(&cache_.get(normalize_utterance(c.utterance)));
  }
}

std::vector<RetrievalHit> RewriteEngine::retrieve_hits(const std::string& user_id, std::string_view query) const {
  const auto norm = normalize_utterance(query);
  if (norm.empty()) return {};
  auto it = users_.find(user_id);
  if (it == users_.end()) return {};
  PersonalizedIndex index{user_id, {}};
  const auto& u = it->second;
  index.entries.reserve(u.candidates.size());
  for (std::size_t i = 0; i < u.candidates.size(); ++i) {
    if (normalize_utterance(u.candidates[i].effective_text()) == norm) continue;
    index.entries.push_back({u.candidates[i], u.embeddings[i]});
  }
  if (index.entries.empty()) return {};
  return retrieve(encoder_->encode(norm), index, options_.retrieval_k);
}

std::vector<FeatureVector> RewriteEngine::features(const std::string& user_id, std::string_view query,
                                                   const std::vector<RetrievalHit>& hits) const {
  std::vector<FeatureVector> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(extractor_.extract(query, h, user_id));
  return out;
}

RewriteResult RewriteEngine::rewrite(const std::string& user_id, std::string_view query, const WeightVector& weights,
                                     double threshold) const {
  RewriteResult r;
  r.hits = retrieve_hits(user_id, query);
  r.features = features(user_id, query, r.hits);
  r.decision = decide(r.hits, r.features, weights, threshold);
  return r;
}

SystemAnswer ScoredSystem::answer(const std::string& user_id, const std::string& query) const {
  const auto r = engine_.rewrite(user_id, query, weights_, threshold_);
  SystemAnswer a;
  a.score = r.decision.score;
  if (r.decision.triggered) {
    a.triggered = true;
    a.rewrite = *r.decision.rewrite;
    a.entity_id = r.decision.candidate->source_entity_id;
  }
  return a;
}

std::vector<LabeledExample> labeled_examples(const RewriteEngine& engine, const std::vector<OpportunityPair>& pairs,
                                             const std::vector<GuardrailCase>& guardrail) {
  std::vector<LabeledExample> out;
  for (const auto& p : pairs) {
    const auto hits = engine.retrieve_hits(p.user_id, p.defective_utterance);
    const auto feats = engine.features(p.user_id, p.defective_utterance, hits);
    for (std::size_t i = 0; i < hits.size(); ++i) {
      SystemAnswer a{true, hits[i].candidate.effective_text(), hits[i].candidate.source_entity_id, 0.0};
      out.push_back({feats[i], rewrite_correct(a, p)});
    }
  }
  for (const auto& g : guardrail) {
    const auto hits = engine.retrieve_hits(g.user_id, g.utterance);
    const auto feats = engine.features(g.user_id, g.utterance, hits);
    for (const auto& f : feats) out.push_back({f, false});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

struct Periods {
  std::int64_t train_cut;
  std::int64_t history_end;
  std::int64_t eval_end;
};

Periods periods(const PipelineConfig& c) {
  const std::int64_t h = history_end(c.world);
  return {h - kSecondsPerWeek, h, h + static_cast<std::int64_t>(c.world.weeks_eval) * kSecondsPerWeek};
}

std::vector<LogRecord> slice(const std::vector<LogRecord>& records, std::int64_t from, std::int64_t to) {
  std::vector<LogRecord> out;
  for (const auto& r : records) {
    if (r.timestamp >= from && r.timestamp < to) out.push_back(r);
  }
  return out;
}

std::set<std::string> users_of(const std::vector<OpportunityPair>& pairs, const std::vector<GuardrailCase>& guard) {
  std::set<std::string> out;
  for (const auto& p : pairs) out.insert(p.user_id);
  for (const auto& g : guard) out.insert(g.user_id);
  return out;
}

std::vector<CollaborativeIndex> indexes_for(const Fig& graph, const std::set<std::string>& users, IndexMode mode,
                                            std::size_t cap, const PipelineConfig& c) {
  std::vector<CollaborativeIndex> out;
  for (const auto& u : users) {
    if (!graph.find_user(u)) continue;
    out.push_back(build_collaborative_index(graph, u, mode, cap, c.history_cap, c.predictions_per_user));
  }
  return out;
}

EngineOptions engine_options(const PipelineConfig& c) {
  EngineOptions o;
  o.history_cap = c.history_cap;
  o.encoder = {c.embedding_dim, c.hash_seed};
  o.retrieval_k = c.retrieval_k;
  return o;
}

void assert_after(const std::vector<OpportunityPair>& pairs, std::int64_t cut, const char* what) {
  for (const auto& p : pairs) {
    if (p.timestamp < cut) throw std::logic_error(std::string(what) + ": pair precedes the end of its history window");
  }
}

std::size_t largest_cap(const CoverageOptions& o) {
  std::size_t m = 1;
  for (auto c : o.caps) m = std::max(m, c);
  return m;
}

CoverageOptions coverage_options(const PipelineConfig& c) {
  CoverageOptions opts;
  opts.max_hop = c.max_hop;
  opts.history_cap = c.history_cap;
  return opts;
}

// Traversal and co-occurrence indexes at `cap` for the given users.
std::vector<RankedIndexSet> ranked_sets(const Fig& graph, const std::set<std::string>& users, std::size_t cap,
                                        const PipelineConfig& c) {
  std::vector<RankedIndexSet> sets;
  for (auto mode : {IndexMode::kTraversal, IndexMode::kCooccurrence}) {
    RankedIndexSet s{std::string(to_string(mode)), {}};
    for (auto& idx : indexes_for(graph, users, mode, cap, c)) s.by_user[idx.user_id] = std::move(idx.entries);
    sets.push_back(std::move(s));
  }
  return sets;
}

// Prefixes of a ranked set; equal to building at the smaller cap.
std::vector<CollaborativeIndex> truncated(const RankedIndexSet& set, std::size_t cap) {
  std::vector<CollaborativeIndex> out;
  out.reserve(set.by_user.size());
  for (const auto& [user, entries] : set.by_user) {
    CollaborativeIndex idx{user, cap, {}};
    idx.entries.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(std::min(cap, entries.size())));
    out.push_back(std::move(idx));
  }
  return out;
}

std::vector<EvalInteraction> unseen_for(const std::vector<LogRecord>& records, const PipelineConfig& c,
                                        const Fig& graph, const std::vector<OpportunityPair>& eval_pairs,
                                        const Periods& p) {
  const auto eval_records = slice(records, p.history_end, p.eval_end);
  return unseen_interactions(eval_interactions(eval_records, eval_pairs), graph, c.history_cap);
}

}  // namespace

CoverageReport run_coverage(const std::vector<LogRecord>& records, const PipelineConfig& config,
                            std::shared_ptr<const Fig> history_graph) {
  config.validate();
  const auto p = periods(config);
  if (!history_graph) {
    history_graph = std::make_shared<const Fig>(build_graph(
        slice(records, std::numeric_limits<std::int64_t>::min(), p.history_end), GraphOptions{config.defect_threshold}));
  }
  const Fig& graph = *history_graph;
  const auto pairs = mine_opportunity_pairs(slice(records, p.history_end, p.eval_end),
                                            MiningOptions{config.max_gap_seconds, config.edit_threshold});
  assert_after(pairs, p.history_end, "coverage");
  const auto unseen = unseen_for(records, config, graph, pairs, p);
  std::set<std::string> users;
  for (const auto& i : unseen) users.insert(i.user_id);
  const auto opts = coverage_options(config);
  return coverage_report(graph, unseen, ranked_sets(graph, users, largest_cap(opts), config), opts);
}

ExperimentReport run_experiment(const std::vector<LogRecord>& records, const PipelineConfig& config,
                                std::shared_ptr<const Fig> history_graph,
                                const std::vector<CollaborativeIndex>* engine_indexes) {
  config.validate();
  const auto p = periods(config);
  const MiningOptions mining{config.max_gap_seconds, config.edit_threshold};
  const GraphOptions graph_opts{config.defect_threshold};
  const auto cap = config.collaborative_cap();
  const auto mode = config.index_mode == IndexMode::kExternal ? IndexMode::kCooccurrence : config.index_mode;
  constexpr auto kMin = std::numeric_limits<std::int64_t>::min();

  ExperimentReport report;
  report.history_end = p.history_end;

  // Training period.
  std::vector<LabeledExample> examples;
  {
    auto graph = std::make_shared<const Fig>(build_graph(slice(records, kMin, p.train_cut), graph_opts));
    const auto week = slice(records, p.train_cut, p.history_end);
    const auto pairs = mine_opportunity_pairs(week, mining);
    assert_after(pairs, p.train_cut, "training");
    const auto guard = build_guardrail_set(week, config.guardrail_size, config.guardrail_seed + 1);
    const RewriteEngine engine(graph, indexes_for(*graph, users_of(pairs, guard), mode, cap, config),
                               engine_options(config));
    examples = labeled_examples(engine, pairs, guard);
  }
  report.train_examples = examples.size();
  for (const auto& e : examples) report.train_positives += e.label ? 1 : 0;

  TrainOptions topts;
  topts.learning_rate = config.learning_rate;
  topts.epochs = config.epochs;
  topts.l2 = config.l2;
  std::vector<std::pair<std::string, FeatureMask>> scorers = {{"similarity_only", similarity_only()},
                                                              {"full", all_features()}};
  for (auto& [name, mask] : scorers) {
    topts.mask = mask;
    auto trained = train_scorer(examples, topts);
    report.scorers.push_back({name, std::move(trained.weights), std::move(trained.loss_trace), {}});
  }

  // Evaluation period. One ranked list per user and flavour serves both the
  // engine (as a prefix) and the coverage tables.
  auto graph = history_graph ? std::move(history_graph)
                             : std::make_shared<const Fig>(build_graph(slice(records, kMin, p.history_end), graph_opts));
  const auto eval_records = slice(records, p.history_end, p.eval_end);
  const auto pairs = mine_opportunity_pairs(eval_records, mining);
  assert_after(pairs, p.history_end, "evaluation");
  auto [seen, unseen] = split_seen_unseen(pairs, *graph, config.history_cap);
  report.eval_pairs_seen = seen.size();
  report.eval_pairs_unseen = unseen.size();
  const auto guard = build_guardrail_set(eval_records, config.guardrail_size, config.guardrail_seed);
  const auto unseen_interactions = unseen_for(records, config, *graph, pairs, p);

  auto users = users_of(pairs, guard);
  for (const auto& i : unseen_interactions) users.insert(i.user_id);
  const auto copts = coverage_options(config);
  const auto sets = ranked_sets(*graph, users, std::max(largest_cap(copts), cap), config);
  const auto& engine_set = mode == IndexMode::kTraversal ? sets[0] : sets[1];
  const RewriteEngine engine(graph, engine_indexes ? *engine_indexes : truncated(engine_set, cap),
                             engine_options(config));
  const std::vector<std::pair<std::string, std::vector<OpportunityPair>>> eval_sets = {
      {"all", pairs}, {"seen", seen}, {"unseen", unseen}};
  for (auto& s : report.scorers) {
    const ScoredSystem system(engine, s.weights, config.trigger_threshold);
    s.metrics = evaluate(system, eval_sets, guard);
  }

  report.coverage = coverage_report(*graph, unseen_interactions, sets, copts);
  return report;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string lpad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

nlohmann::json set_json(const std::string& scorer, const SetMetrics& m) {
  nlohmann::json j;
  j["record"] = "metrics";
  j["scorer"] = scorer;
  j["set"] = m.name;
  j["total"] = m.total;
  j["triggered"] = m.triggered;
  j["correct"] = m.correct;
  if (auto p = m.precision_at_1()) {
    j["precision_at_1"] = *p;
  } else {
    j["precision_at_1"] = nullptr;
  }
  j["trigger_rate"] = m.trigger_rate();
  return j;
}

}  // namespace

void write_metrics_table(std::ostream& out, const ExperimentReport& r) {
  out << "history_end " << r.history_end << '\n';
  out << "training examples " << r.train_examples << " (positives " << r.train_positives << ")\n";
  out << "evaluation pairs seen " << r.eval_pairs_seen << ", unseen " << r.eval_pairs_unseen << "\n\n";
  out << pad("scorer", 17) << pad("set", 11) << lpad("total", 7) << lpad("triggered", 11) << lpad("correct", 9)
      << lpad("p@1", 9) << lpad("trigger", 9) << '\n';
  for (const auto& s : r.scorers) {
    auto row = [&](const SetMetrics& m) {
      const auto p = m.precision_at_1();
      out << pad(s.name, 17) << pad(m.name, 11) << lpad(std::to_string(m.total), 7)
          << lpad(std::to_string(m.triggered), 11) << lpad(m.name == "guardrail" ? "-" : std::to_string(m.correct), 9)
          << lpad(m.name == "guardrail" ? "-" : (p ? fixed(*p) : "n/a"), 9) << lpad(fixed(m.trigger_rate()), 9)
          << '\n';
    };
    for (const auto& m : s.metrics.opportunity) row(m);
    row(s.metrics.guardrail);
  }
  out << '\n';
  for (const auto& s : r.scorers) {
    out << "false trigger rate " << pad(s.name, 17) << fixed(s.metrics.false_trigger_rate()) << '\n';
  }
}

void write_coverage_table(std::ostream& out, const CoverageReport& r) {
  out << "unseen interaction coverage by hop\n";
  out << lpad("hop", 4) << lpad("entity", 10) << lpad("query", 10) << lpad("entity_def", 12) << lpad("query_def", 12)
      << lpad("total", 8) << lpad("defective", 11) << '\n';
  for (const auto& h : r.hops) {
    out << lpad(std::to_string(h.hop), 4) << lpad(fixed(h.entity_level.fraction()), 10)
        << lpad(fixed(h.query_level.fraction()), 10) << lpad(fixed(h.entity_level_defective.fraction()), 12)
        << lpad(fixed(h.query_level_defective.fraction()), 12) << lpad(std::to_string(h.query_level.total), 8)
        << lpad(std::to_string(h.query_level_defective.total), 11) << '\n';
  }
  out << "\nunseen interaction coverage by index cap\n";
  out << pad("index", 14) << lpad("cap", 5) << "  " << pad("domain", 7) << lpad("covered", 9) << lpad("total", 8)
      << lpad("fraction", 10) << '\n';
  for (const auto& c : r.caps) {
    out << pad(c.index, 14) << lpad(std::to_string(c.cap), 5) << "  " << pad(c.domain, 7)
        << lpad(std::to_string(c.coverage.covered), 9) << lpad(std::to_string(c.coverage.total), 8)
        << lpad(fixed(c.coverage.fraction()), 10) << '\n';
  }
}

void write_metrics_jsonl(std::ostream& out, const ExperimentReport& r) {
  nlohmann::json head;
  head["record"] = "experiment";
  head["history_end"] = r.history_end;
  head["train_examples"] = r.train_examples;
  head["train_positives"] = r.train_positives;
  head["eval_pairs_seen"] = r.eval_pairs_seen;
  head["eval_pairs_unseen"] = r.eval_pairs_unseen;
  out << head.dump() << '\n';
  for (const auto& s : r.scorers) {
    for (const auto& m : s.metrics.opportunity) out << set_json(s.name, m).dump() << '\n';
    auto g = set_json(s.name, s.metrics.guardrail);
    g["false_trigger_rate"] = s.metrics.false_trigger_rate();
    out << g.dump() << '\n';
  }
}

void write_coverage_jsonl(std::ostream& out, const CoverageReport& r) {
  auto frac = [](const CoverageFraction& f) {
    return nlohmann::json{{"covered", f.covered}, {"total", f.total}, {"fraction", f.fraction()}};
  };
  for (const auto& h : r.hops) {
    nlohmann::json j;
    j["record"] = "hop_coverage";
    j["hop"] = h.hop;
    j["entity_level"] = frac(h.entity_level);
    j["query_level"] = frac(h.query_level);
    j["entity_level_defective"] = frac(h.entity_level_defective);
    j["query_level_defective"] = frac(h.query_level_defective);
    out << j.dump() << '\n';
  }
  for (const auto& c : r.caps) {
    nlohmann::json j;
    j["record"] = "cap_coverage";
    j["index"] = c.index;
    j["cap"] = c.cap;
    j["domain"] = c.domain;
    j["coverage"] = frac(c.coverage);
    out << j.dump() << '\n';
  }
}

}  // namespace cqr
