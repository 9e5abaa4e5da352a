#include <doctest.h>

#include <map>

#include "cqr/eval.h"
#include "cqr/text.h"
#include "fixtures.h"
#include "oracles.h"

using namespace cqr;
using fixture::Rec;

namespace {

class TableSystem final : public RewriteSystem {
 public:
  std::map<std::pair<std::string, std::string>, SystemAnswer> table;
  SystemAnswer answer(const std::string& user_id, const std::string& query) const override {
    auto it = table.find({user_id, query});
    return it == table.end() ? SystemAnswer{} : it->second;
  }
};

OpportunityPair pair_for(const std::string& user, const std::string& bad, const std::string& label,
                         const std::string& entity) {
  OpportunityPair p;
  p.user_id = user;
  p.defective_utterance = bad;
  p.rewrite_label = label;
  p.label_entity_id = entity;
  return p;
}

}  // namespace

TEST_SUITE("eval_harness") {
  TEST_CASE("a defective turn followed by its rephrase is mined") {
    const auto recs = fixture::make_all({{"u", "cake", "play is it cake", EntityType::kVideo, 0.9, 100},
                                         {"u", "cake", "play is it cake by Netflix", EntityType::kVideo, 0.0, 130}});
    const auto pairs = mine_opportunity_pairs(recs);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].defective_utterance == "play is it cake");
    CHECK(pairs[0].rewrite_label == "play is it cake by netflix");
    CHECK(pairs[0].label_entity_id == "cake");
    CHECK(pairs[0].timestamp == 100);
  }

  TEST_CASE("no pair without a defect, across a long gap, or to an unrelated turn") {
    CHECK(mine_opportunity_pairs(fixture::make_all({{"u", "a", "play jazz", EntityType::kGenre, 0.0, 1},
                                                    {"u", "a", "play jazz music", EntityType::kGenre, 0.0, 5}}))
              .empty());
    const double d = normalized_edit_distance("play is it cake", "what's the weather");
    CHECK(d > 0.5);
    CHECK(mine_opportunity_pairs(fixture::make_all({{"u", "a", "play is it cake", EntityType::kVideo, 0.9, 1},
                                                    {"u", "w", "what's the weather", EntityType::kCity, 0.0, 5}}))
              .empty());
    CHECK(mine_opportunity_pairs(fixture::make_all({{"u", "a", "play jazz", EntityType::kGenre, 0.9, 1},
                                                    {"u", "a", "play jazz", EntityType::kGenre, 0.0, 200}}))
              .empty());
    // Different sessions do not pair.
    CHECK(mine_opportunity_pairs(fixture::make_all(
                                     {{"u", "a", "play jazz", EntityType::kGenre, 0.9, 1, std::nullopt, "s1"},
                                      {"u", "a", "play jazz", EntityType::kGenre, 0.0, 5, std::nullopt, "s2"}}))
              .empty());
  }

  TEST_CASE("mining ignores input order") {
    WorldConfig wc;
    wc.num_users = 40;
    wc.num_clusters = 4;
    wc.weeks_history = 4;
    auto recs = generate_logs(generate_world(wc)).records;
    const auto a = mine_opportunity_pairs(recs);
    std::reverse(recs.begin(), recs.end());
    CHECK(mine_opportunity_pairs(recs) == a);
    CHECK_FALSE(a.empty());
  }

  TEST_CASE("seen means present in the user's own history") {
    const auto g = build_graph(fixture::make_all({{"u", "a", "play jazz", EntityType::kGenre},
                                                  {"v", "b", "play blues", EntityType::kGenre}}));
    const auto [seen, unseen] = split_seen_unseen({pair_for("u", "play jas", "play jazz", "a"),
                                                   pair_for("u", "play bluse", "play blues", "b"),
                                                   pair_for("u", "play rok", "play rock", "c")},
                                                  g);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].rewrite_label == "play jazz");
    CHECK(seen[0].seen);
    REQUIRE(unseen.size() == 2);
    CHECK(unseen[0].rewrite_label == "play blues");  // only in another user's history
    CHECK(unseen[1].rewrite_label == "play rock");
  }

  TEST_CASE("guardrail sampling") {
    CHECK(build_guardrail_set(fixture::make_all({{"u", "a", "play x", EntityType::kSong, 0.9},
                                                 {"v", "a", "play y", EntityType::kSong, 0.7}}),
                              10, 1)
              .empty());
    const auto recs = oracle::random_records(3);
    const auto a = build_guardrail_set(recs, 15, 7);
    CHECK(a.size() == 15);
    CHECK(build_guardrail_set(recs, 15, 7) == a);
    std::set<std::pair<std::string, std::string>> universe;
    for (const auto& r : recs) {
      if (r.defect_score <= 0.5 && !r.rewrite_target) universe.insert({r.user_id, normalize_utterance(r.utterance)});
    }
    for (const auto& c : a) CHECK(universe.count({c.user_id, c.utterance}) == 1);
    CHECK(build_guardrail_set(recs, 0, 7).size() == universe.size());
  }

  TEST_CASE("metrics arithmetic") {
    TableSystem sys;
    std::vector<OpportunityPair> pairs;
    for (int i = 0; i < 10; ++i) {
      const auto q = "q" + std::to_string(i);
      pairs.push_back(pair_for("u", q, "label " + std::to_string(i), "e" + std::to_string(i)));
      if (i < 5) sys.table[{"u", q}] = {true, "rewrite", i < 4 ? "e" + std::to_string(i) : "wrong", 0.9};
    }
    const auto m = evaluate_opportunities(sys, "set", pairs);
    CHECK(m.total == 10);
    CHECK(m.triggered == 5);
    CHECK(m.correct == 4);
    CHECK(*m.precision_at_1() == doctest::Approx(0.8));
    CHECK(m.trigger_rate() == doctest::Approx(0.5));

    const auto r = evaluate(sys, {{"set", pairs}}, {{"u", "nothing", "e"}, {"v", "quiet", "e"}});
    CHECK(r.false_trigger_rate() == 0.0);
    CHECK_FALSE(SetMetrics{}.precision_at_1().has_value());
  }

  TEST_CASE("metrics equal a hand tally on twenty cases") {
    TableSystem sys;
    std::vector<OpportunityPair> pairs;
    std::vector<GuardrailCase> guard;
    // Cases 0-11: triggers on even i; correct by entity when i % 4 == 0,
    // correct by text fallback when i == 6, otherwise wrong.
    for (int i = 0; i < 12; ++i) {
      const auto q = "q" + std::to_string(i);
      auto p = pair_for("u", q, "play thing " + std::to_string(i), i == 6 ? "" : "e" + std::to_string(i));
      pairs.push_back(p);
      if (i % 2) continue;
      SystemAnswer a{true, i == 6 ? "Play Thing 6" : "other", i % 4 == 0 ? p.label_entity_id : "x", 0.9};
      if (i == 6) a.entity_id = "zzz";
      sys.table[{"u", q}] = a;
    }
    // Cases 12-19: guardrail, triggers on 13 and 17.
    for (int i = 12; i < 20; ++i) {
      guard.push_back({"g", "safe " + std::to_string(i), "e"});
      if (i == 13 || i == 17) sys.table[{"g", "safe " + std::to_string(i)}] = {true, "oops", "e", 0.95};
    }
    const auto r = evaluate(sys, {{"opp", pairs}}, guard);
    REQUIRE(r.opportunity.size() == 1);
    CHECK(r.opportunity[0].total == 12);
    CHECK(r.opportunity[0].triggered == 6);  // 0 2 4 6 8 10
    CHECK(r.opportunity[0].correct == 4);    // 0 4 8 by entity, 6 by text
    CHECK(r.guardrail.total == 8);
    CHECK(r.guardrail.triggered == 2);
    CHECK(r.false_trigger_rate() == doctest::Approx(0.25));
  }

  TEST_CASE("coverage: a label three hops away") {
    // X - a - Y - b; X later uses b, which Y already uses.
    const auto g = build_graph(fixture::make_all({{"X", "a", "play a"}, {"Y", "a", "play a"}, {"Y", "b", "play b"}}));
    const std::vector<EvalInteraction> unseen{{"X", "play b", "b", Domain::kMusic, true}};
    const auto r = coverage_report(g, unseen, {});
    REQUIRE(r.hops.size() == 5);
    for (const auto& h : r.hops) {
      const bool expect = h.hop >= 3;
      CHECK(h.entity_level.covered == (expect ? 1u : 0u));
      CHECK(h.query_level.covered == (expect ? 1u : 0u));
      CHECK(h.query_level_defective.covered == (expect ? 1u : 0u));
    }
    CHECK(oracle::bfs_entities(g, "X", 2).count("b") == 0);
    CHECK(oracle::bfs_entities(g, "X", 3).count("b") == 1);
  }

  TEST_CASE("coverage is monotone in hops and zero at hop one for unseen interactions") {
    for (std::uint64_t seed = 20; seed < 40; ++seed) {
      const auto recs = oracle::random_records(seed);
      std::vector<LogRecord> hist;
      std::vector<LogRecord> later;
      for (std::size_t i = 0; i < recs.size(); ++i) (i % 5 == 0 ? later : hist).push_back(recs[i]);
      const auto g = build_graph(hist);
      const auto unseen = unseen_interactions(eval_interactions(later, {}), g);
      const auto r = coverage_report(g, unseen, {});
      CHECK(r.hops[0].query_level.covered == 0);
      for (std::size_t n = 1; n < r.hops.size(); ++n) {
        CHECK(r.hops[n].query_level.covered >= r.hops[n - 1].query_level.covered);
        CHECK(r.hops[n].entity_level.covered >= r.hops[n - 1].entity_level.covered);
      }
    }
  }

  TEST_CASE("cap coverage looks at the index prefix") {
    const auto g = build_graph(fixture::make_all({{"X", "a", "play a"}}));
    RankedIndexSet set{"traversal", {}};
    for (int i = 0; i < 150; ++i) {
      RewriteCandidate c;
      c.utterance = "play " + std::to_string(i);
      set.by_user["X"].push_back(c);
    }
    const std::vector<EvalInteraction> unseen{{"X", "play 50", "e", Domain::kMusic, false},
                                              {"X", "play 120", "e", Domain::kVideo, false},
                                              {"X", "play zzz", "e", Domain::kMusic, false}};
    const auto r = coverage_report(g, unseen, {set});
    auto find = [&](std::size_t cap, const std::string& d) {
      for (const auto& c : r.caps) {
        if (c.cap == cap && c.domain == d) return c.coverage;
      }
      FAIL("missing cap row");
      return CoverageFraction{};
    };
    CHECK(find(100, "all").covered == 1);
    CHECK(find(200, "all").covered == 2);
    CHECK(find(200, "all").total == 3);
    CHECK(find(200, "video").covered == 1);
    CHECK(find(100, "music").total == 2);
  }

  TEST_CASE("eval interactions keep successful, non-rewritten turns once") {
    const auto recs = fixture::make_all({{"u", "a", "play a", EntityType::kSong, 0.0, 5},
                                         {"u", "a", "Play A", EntityType::kSong, 0.0, 3},
                                         {"u", "b", "play b", EntityType::kSong, 0.9, 4},
                                         {"u", "c", "play c", EntityType::kSong, 0.0, 6, std::string("play see")}});
    const auto out = eval_interactions(recs, {pair_for("u", "play aa", "play a", "a")});
    REQUIRE(out.size() == 1);
    CHECK(out[0].text == "play a");
    CHECK(out[0].defective);
  }
}
