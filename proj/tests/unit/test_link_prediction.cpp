#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "cqr/link_prediction.h"
#include "fixtures.h"
#include "oracles.h"

using namespace cqr;
using fixture::Rec;

namespace {

std::vector<std::string> ids(const std::vector<PredictedLink>& links) {
  std::vector<std::string> out;
  for (const auto& l : links) out.push_back(l.entity_id);
  return out;
}

}  // namespace

TEST_SUITE("link_prediction") {
  TEST_CASE("co-occurrence ranks by shared users") {
    const auto g = build_graph(fixture::make_all({{"U", "e1", "play one"},
                                                  {"A", "e1", "play one"},
                                                  {"A", "e2", "play two"},
                                                  {"B", "e1", "play one"},
                                                  {"B", "e2", "play two"},
                                                  {"C", "e1", "play one"},
                                                  {"C", "e3", "play three"}}));
    const auto three = cooccurrence_predict(g, "U", 3);
    CHECK(ids(three) == std::vector<std::string>{"e2", "e3"});
    CHECK(three[0].rank == 1);
    CHECK(three[1].rank == 2);
    const auto one = cooccurrence_predict(g, "U", 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == three[0]);
    CHECK(cooccurrence_predict(g, "A", 5).size() == 1);  // only e3 is new to A
  }

  TEST_CASE("a user adjacent to everything gets no predictions") {
    const auto g = build_graph(fixture::make_all({{"U", "e1", "play one"}, {"U", "e2", "play two"}, {"V", "e1", "play one"}}));
    CHECK(cooccurrence_predict(g, "U", 10).empty());
  }

  TEST_CASE("k = 1 is the head of k = 3 on random graphs") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto g = build_graph(oracle::random_records(seed));
      for (const auto& u : g.users()) {
        const auto a = cooccurrence_predict(g, u, 1);
        const auto b = cooccurrence_predict(g, u, 3);
        REQUIRE(a.size() <= 1);
        if (!a.empty()) CHECK(a[0] == b.at(0));
      }
    }
  }

  TEST_CASE("grounding: exact, fuzzy and unmatched") {
    const auto g = build_graph(fixture::make_all(
        {{"u", "gad", "play guys and dolls", EntityType::kVideo, 0.0, 1, std::nullopt, "s", "guys and dolls", Domain::kVideo},
         {"u", "som", "play the sound of music", EntityType::kVideo, 0.0, 1, std::nullopt, "s", "the sound of music",
          Domain::kVideo}}));
    const auto r = ground_entities(g, {"Guys and Dolls", "zzzz unknown title", "the sound of music deluxe"});
    REQUIRE(r.size() == 3);
    CHECK(r[0].second == std::optional<std::string>("gad"));
    CHECK_FALSE(r[1].second.has_value());
    CHECK(r[2].second == std::optional<std::string>("som"));
    CHECK(token_set_jaccard("the sound of music deluxe", "the sound of music") == doctest::Approx(0.8));

    GroundingOptions music_only;
    music_only.domain = Domain::kMusic;
    CHECK_FALSE(ground_entities(g, {"guys and dolls"}, music_only)[0].second.has_value());
  }

  TEST_CASE("a predicted entity brings in its peers' queries") {
    const auto g = build_graph(fixture::make_all({{"X", "hamilton", "play hamilton"},
                                                  {"Y", "hamilton", "play hamilton"},
                                                  {"Y", "gad", "play guys and dolls"},
                                                  {"X", "lonely", "play lonely"}}));
    const auto c = augment_and_collect(g, "X", {{"X", "gad", LinkSource::kExternal, 1}});
    REQUIRE(c.size() == 1);
    CHECK(c[0].utterance == "play guys and dolls");
    CHECK(c[0].hop == 2);
    CHECK(c[0].source_user_id == "Y");
    // Adjacent or unknown entities contribute nothing.
    CHECK(augment_and_collect(g, "X", {{"X", "lonely", LinkSource::kExternal, 1}}).empty());
    CHECK(augment_and_collect(g, "X", {{"X", "nope", LinkSource::kExternal, 1}}).empty());
  }

  TEST_CASE("augmented candidates equal enumeration over (entity, peer) pairs") {
    oracle::RandomGraphShape small_shape;
    small_shape.max_users = 8;
    small_shape.max_entities = 12;
    for (std::uint64_t seed = 500; seed < 540; ++seed) {
      const auto g = build_graph(oracle::random_records(seed, small_shape));
      for (const auto& u : g.users()) {
        const auto x = *g.find_user(u);
        std::vector<PredictedLink> links;
        for (const auto& e : g.entities()) links.push_back({std::string(u), e.id, LinkSource::kCooccurrence, links.size() + 1});

        std::set<std::string> history;
        for (const auto& h : oracle::history_index(g, std::string(u), kDefaultHistoryCap)) history.insert(h.utterance);
        std::vector<RewriteCandidate> want;
        for (NodeIndex a = 0; a < g.num_entities(); ++a) {
          if (oracle::find_edge_linear(g, x, a)) continue;
          std::int64_t aff = 0;
          for (const auto& e : g.edges()) {
            if (e.entity == a) aff += e.signals.impression;
          }
          for (const auto& e : g.edges()) {
            if (e.entity != a) continue;
            const auto ps = oracle::pair_stats(g, x, e.user);
            for (const auto& q : e.queries) {
              if (history.count(q.utterance)) continue;
              want.push_back({q.utterance, q.rewrite_target, g.user_id(e.user), g.entity(a).id, g.entity(a).cls(), 2,
                              q.signals, {ps.paths, ps.path_impressions, ps.degree_difference, ps.jaccard_distance, aff}});
            }
          }
        }
        CHECK(oracle::sorted(augment_and_collect(g, u, links)) == oracle::sorted(want));
      }
    }
  }

  TEST_CASE("fine-tune examples") {
    CHECK(finetune_instruction(Domain::kVideo) == "Recommend 10 other movies based on the user's watching history.");
    CHECK(finetune_instruction(Domain::kMusic) == "Recommend ten other songs based on the user's listening history.");
    CHECK_THROWS_AS(finetune_instruction(Domain::kOther), std::invalid_argument);

    const std::int64_t week = kSecondsPerWeek;
    const auto records = fixture::make_all(
        {{"u", "jolene", "play jolene", EntityType::kSong, 0.0, 0, std::nullopt, "s", "Jolene by Dolly Patron"},
         {"u", "fancy", "play fancy", EntityType::kSong, 0.0, 10 * week, std::nullopt, "s", "Fancy by Reba McEntire"},
         {"v", "jolene", "play jolene", EntityType::kSong, 0.0, 1, std::nullopt, "s", "Jolene by Dolly Patron"}});
    const auto ex = export_finetune_examples(records, {26 * week, 4 * week});
    REQUIRE(ex.size() == 1);  // v has nothing in the label window
    CHECK(ex[0].user_id == "u");
    CHECK(ex[0].input == "The user listened to songs \"Jolene by Dolly Patron\".");
    CHECK(ex[0].label == "\"Fancy by Reba McEntire\"");

    std::ostringstream out;
    write_finetune_jsonl(out, ex);
    const auto j = nlohmann::json::parse(out.str());
    CHECK(j["instruction"] == ex[0].instruction);
    CHECK(j["input"] == ex[0].input);
    CHECK(j["label"] == ex[0].label);
  }

  TEST_CASE("fine-tune labels never repeat inputs") {
    WorldConfig wc;
    wc.num_users = 60;
    wc.num_clusters = 4;
    wc.weeks_history = 8;
    const auto logs = generate_logs(generate_world(wc));
    const auto ex = export_finetune_examples(logs.records);
    REQUIRE_FALSE(ex.empty());
    for (const auto& e : ex) {
      // Names are quoted and comma-separated; compare the quoted pieces.
      auto pieces = [](const std::string& s) {
        std::set<std::string> out;
        for (std::size_t i = s.find('"'); i != std::string::npos;) {
          const auto j = s.find('"', i + 1);
          out.insert(s.substr(i + 1, j - i - 1));
          i = s.find('"', j + 1);
        }
        return out;
      };
      for (const auto& name : pieces(e.label)) CHECK(pieces(e.input).count(name) == 0);
    }
  }

  TEST_CASE("request and response interchange round trips") {
    const std::vector<PredictionRequest> reqs{{"u1", Domain::kMusic, {"Take Me Home, Country Roads", "Jolene"}},
                                              {"u2", Domain::kVideo, {"Pink Floyd - The Wall"}}};
    std::stringstream buf;
    write_predictions_request(buf, reqs);
    CHECK(read_predictions_request(buf) == reqs);

    fixture::TempDir dir("pred");
    write_predictions_request(dir.path() / "req.jsonl", reqs);

    std::vector<std::string> ten;
    for (int i = 0; i < 10; ++i) ten.push_back("Title, part " + std::to_string(i));
    std::stringstream one;
    write_predictions_response(one, {{"u1", {Domain::kMusic, ten}}});
    const auto f = read_predictions_file(one);
    CHECK(f.rejects.empty());
    REQUIRE(f.by_user.size() == 1);
    CHECK(f.by_user.at("u1").at(0).names == ten);
  }

  TEST_CASE("interleaved response lines keep per-user order; bad lines are rejected") {
    std::stringstream in;
    in << R"({"user_id":"u1","domain":"music","predictions":["a","b"]})" << '\n'
       << R"({"user_id":"u2","domain":"video","predictions":["x"]})" << '\n'
       << "not json\n"
       << R"({"user_id":"u1","domain":"video","predictions":["c"]})" << '\n'
       << R"({"user_id":"u1","domain":"sports","predictions":["c"]})" << '\n';
    const auto f = read_predictions_file(in);
    CHECK(f.rejects.size() == 2);
    CHECK(f.rejects[0].line_number == 3);
    REQUIRE(f.by_user.at("u1").size() == 2);
    CHECK(f.by_user.at("u1")[0] == PredictedNames{Domain::kMusic, {"a", "b"}});
    CHECK(f.by_user.at("u1")[1] == PredictedNames{Domain::kVideo, {"c"}});
    CHECK(f.by_user.at("u2").size() == 1);
  }

  TEST_CASE("predictions ground into ranked links without duplicates or known entities") {
    const auto g = build_graph(fixture::make_all(
        {{"X", "wall", "play the wall", EntityType::kVideo, 0.0, 1, std::nullopt, "s", "The Wall", Domain::kVideo},
         {"Y", "gad", "play guys and dolls", EntityType::kVideo, 0.0, 1, std::nullopt, "s", "Guys and Dolls",
          Domain::kVideo},
         {"Y", "ok", "play oklahoma", EntityType::kVideo, 0.0, 1, std::nullopt, "s", "Oklahoma", Domain::kVideo}}));
    const auto links = links_from_predictions(
        g, "X", {{Domain::kVideo, {"the wall", "Guys and Dolls", "unknown", "guys and dolls", "Oklahoma"}}});
    REQUIRE(links.size() == 2);
    CHECK(links[0].entity_id == "gad");
    CHECK(links[0].rank == 1);
    CHECK(links[1].entity_id == "ok");
    CHECK(links[1].rank == 2);
    CHECK(links[0].source == LinkSource::kExternal);
  }

  TEST_CASE("requests list music and video history by impression") {
    const auto g = build_graph(fixture::make_all({{"X", "a", "play a", EntityType::kSong, 0.0, 1, std::nullopt, "s", "Alpha"},
                                                  {"X", "b", "play b", EntityType::kSong, 0.0, 2, std::nullopt, "s", "Beta"},
                                                  {"X", "b", "play b", EntityType::kSong, 0.0, 3, std::nullopt, "s", "Beta"},
                                                  {"X", "g", "play jazz", EntityType::kGenre, 0.0, 4, std::nullopt, "s",
                                                   "jazz", Domain::kOther}}));
    const auto reqs = build_prediction_requests(g);
    REQUIRE(reqs.size() == 1);
    CHECK(reqs[0].domain == Domain::kMusic);
    CHECK(reqs[0].history == std::vector<std::string>{"Beta", "Alpha"});
  }
}
