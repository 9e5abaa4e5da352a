#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cqr/affinity.h"
#include "cqr/ranking.h"
#include "fixtures.h"
#include "oracles.h"

using namespace cqr;
using fixture::Rec;

namespace {

RetrievalHit hit_of(RewriteCandidate c, double sim) { return {std::move(c), sim}; }

std::vector<LabeledExample> toy_examples() {
  std::vector<LabeledExample> out;
  SplitMix64 rng(8);
  for (int i = 0; i < 60; ++i) {
    LabeledExample ex;
    const double sim = rng.uniform();
    const double barge = rng.uniform();
    ex.features.set(Feature::kL1Similarity, sim);
    ex.features.set(Feature::kBargeInRate, barge);
    ex.label = sim - 0.5 * barge > 0.3;
    if (std::abs(sim - 0.5 * barge - 0.3) < 0.05) continue;  // keep a margin
    out.push_back(ex);
  }
  return out;
}

}  // namespace

TEST_SUITE("ranking_l2") {
  TEST_CASE("own-history hits carry identity affinity values") {
    const auto g = build_graph(fixture::make_all({{"X", "e1", "play jazz", EntityType::kGenre}}));
    const auto h = build_user_history_index(g, "X").entries.at(0);
    const auto f = extract_features(g, "play jazz", hit_of(h, 1.0), "X");
    CHECK(f.get(Feature::kHop) == 1.0);
    CHECK(f.get(Feature::kUniquePathCount) == 0.0);
    CHECK(f.get(Feature::kNeighborhoodJaccardDistance) == 0.0);
    CHECK_FALSE(f.has(Feature::kNeighborhoodJaccardDistance));
    CHECK_FALSE(f.has(Feature::kUniquePathCount));
    CHECK(f.get(Feature::kL1Similarity) == 1.0);
    CHECK(f.get(Feature::kUserImpression) == 1.0);
  }

  TEST_CASE("neighborhood jaccard distance of a peer candidate") {
    const auto g = build_graph(fixture::make_all({{"X", "e1", "play one", EntityType::kGenre},
                                                  {"X", "e2", "play two", EntityType::kGenre},
                                                  {"X", "e3", "play three", EntityType::kGenre},
                                                  {"Y", "e2", "play some two", EntityType::kGenre},
                                                  {"Y", "e3", "play three", EntityType::kGenre},
                                                  {"Y", "e4", "play four", EntityType::kGenre}}));
    const auto cands = collect_candidates(g, "X");
    REQUIRE(cands.size() == 1);
    CHECK(cands[0].utterance == "play some two");
    const auto f = extract_features(g, "play two", hit_of(cands[0], 0.7), "X");
    CHECK(f.get(Feature::kNeighborhoodJaccardDistance) == doctest::Approx(0.5));
    CHECK(f.has(Feature::kNeighborhoodJaccardDistance));
    CHECK(f.get(Feature::kHop) == 2.0);
    CHECK(f.get(Feature::kDegreeDifference) == 0.0);
  }

  TEST_CASE("entity name similarity on the pink / pink floyd pair") {
    const auto g = build_graph(fixture::make_all(
        {{"X", "pink", "play songs by pink", EntityType::kArtist, 0.0, 1, std::nullopt, "s", "Pink"},
         {"Y", "pinkfloyd", "play songs by pink floyd", EntityType::kArtist, 0.0, 1, std::nullopt, "s", "Pink Floyd"}}));
    const FeatureExtractor fx(g);
    REQUIRE(fx.query_entity("play songs by pink").has_value());
    CHECK(g.entity(*fx.query_entity("play songs by pink")).id == "pink");
    CHECK(g.entity(*fx.query_entity("play songs by pink floyd")).id == "pinkfloyd");

    RewriteCandidate swap{"play songs by pink floyd", std::nullopt, "Y", "pinkfloyd", EntityClass::kA, 3, {1, 0, 0, 0}, {}};
    RewriteCandidate same{"play songs by pink", std::nullopt, "X", "pink", EntityClass::kA, 1, {1, 0, 0, 0}, {}};
    const auto fs = fx.extract("play songs by pink", hit_of(swap, 0.8), "X");
    const auto fm = fx.extract("play songs by pink", hit_of(same, 0.8), "X");
    CHECK(fs.get(Feature::kEntityNameSimilarity) == doctest::Approx(0.5));
    CHECK(fm.get(Feature::kEntityNameSimilarity) == 1.0);
    CHECK(score(fm, default_weights()) > score(fs, default_weights()));
  }

  TEST_CASE("score: logistic of zero and monotone in a positive weight") {
    FeatureVector zero;
    CHECK(score(zero, WeightVector{std::vector<double>(kModelDim, 0.0), 0.0}) == 0.5);
    auto w = default_weights();
    FeatureVector f;
    f.set(Feature::kL1Similarity, 0.8);
    double prev = score(f, w);
    for (double imp : {1.0, 2.0, 10.0, 100.0}) {
      f.set(Feature::kUserImpression, imp);
      const double s = score(f, w);
      CHECK(s > prev);
      prev = s;
    }
    CHECK_THROWS_AS(score(f, WeightVector{std::vector<double>(3, 0.0), 0.0}), std::invalid_argument);
  }

  TEST_CASE("score matches an independent implementation") {
    SplitMix64 rng(99);
    for (int i = 0; i < 1000; ++i) {
      const auto f = oracle::random_features(rng);
      const auto w = oracle::random_weights(rng, 0.5);
      CHECK(std::abs(score(f, w) - oracle::score(f, w)) <= 1e-9);
    }
  }

  TEST_CASE("count features are the documented eight") {
    std::size_t n = 0;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      CHECK(is_count_feature(static_cast<Feature>(i)) == oracle::counts_as_log(i));
      n += is_count_feature(static_cast<Feature>(i)) ? 1 : 0;
    }
    CHECK(n == 8);
  }

  TEST_CASE("masked features contribute nothing") {
    SplitMix64 rng(5);
    const auto f = oracle::random_features(rng);
    const auto x = model_input(f, similarity_only());
    const auto sim = static_cast<std::size_t>(Feature::kL1Similarity);
    for (std::size_t i = 0; i < kModelDim; ++i) {
      if (i == sim || i == kNumFeatures + sim) continue;
      CHECK(x[i] == 0.0);
    }
    CHECK(x[sim] == f.values[sim]);
  }

  TEST_CASE("training separates a separable toy set") {
    const auto ex = toy_examples();
    const auto r = train_scorer(ex, {});
    std::size_t right = 0;
    for (const auto& e : ex) right += (score(e.features, r.weights) >= 0.5) == e.label ? 1 : 0;
    CHECK(right == ex.size());
  }

  TEST_CASE("the loss trace never increases") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SplitMix64 rng(seed);
      std::vector<LabeledExample> ex;
      for (int i = 0; i < 200; ++i) ex.push_back({oracle::random_features(rng), rng.chance(0.3)});
      ex[0].label = true;
      ex[1].label = false;
      TrainOptions o;
      o.epochs = 100;
      o.learning_rate = 5.0;  // large on purpose: backtracking must keep the trace monotone
      const auto r = train_scorer(ex, o);
      REQUIRE(r.loss_trace.size() == 100);
      for (std::size_t i = 1; i < r.loss_trace.size(); ++i) CHECK(r.loss_trace[i] <= r.loss_trace[i - 1]);
    }
  }

  TEST_CASE("example order does not change the weights") {
    SplitMix64 rng(12);
    std::vector<LabeledExample> ex;
    for (int i = 0; i < 150; ++i) ex.push_back({oracle::random_features(rng), rng.chance(0.4)});
    const auto a = train_scorer(ex).weights;
    std::reverse(ex.begin(), ex.end());
    std::rotate(ex.begin(), ex.begin() + 37, ex.end());
    const auto b = train_scorer(ex).weights;
    CHECK(a == b);
  }

  TEST_CASE("training needs both classes") {
    std::vector<LabeledExample> ex(3);
    CHECK_THROWS_AS(train_scorer(ex), std::invalid_argument);
  }

  TEST_CASE("decide triggers at the threshold") {
    // With only a bias, every hit scores logistic(bias).
    auto w = WeightVector{std::vector<double>(kModelDim, 0.0), std::log(0.9 / 0.1)};
    std::vector<RetrievalHit> hits{hit_of({"play a", std::nullopt, "u", "e", EntityClass::kA, 1, {}, {}}, 0.5)};
    std::vector<FeatureVector> fs(1);
    auto d = decide(hits, fs, w, 0.8);
    CHECK(d.score == doctest::Approx(0.9));
    CHECK(d.triggered);
    CHECK(d.rewrite == std::optional<std::string>("play a"));
    w.bias = std::log(0.7 / 0.3);
    d = decide(hits, fs, w, 0.8);
    CHECK(d.score == doctest::Approx(0.7));
    CHECK_FALSE(d.triggered);
    CHECK_FALSE(d.rewrite.has_value());
    CHECK(d.candidate.has_value());
    CHECK_FALSE(decide({}, {}, w, 0.8).candidate.has_value());
    CHECK_THROWS_AS(decide(hits, {}, w, 0.8), std::invalid_argument);
  }

  TEST_CASE("decide picks the brute-force maximum") {
    SplitMix64 rng(4);
    for (int t = 0; t < 500; ++t) {
      const auto w = oracle::random_weights(rng, 0.3);
      std::vector<RetrievalHit> hits;
      std::vector<FeatureVector> fs;
      const auto n = 1 + rng.below(8);
      for (std::uint64_t i = 0; i < n; ++i) {
        // Repeat feature vectors often so that score ties occur.
        fs.push_back(rng.chance(0.4) && !fs.empty() ? fs[rng.below(fs.size())] : oracle::random_features(rng));
        RewriteCandidate c{"utt " + std::to_string(rng.below(3)), std::nullopt, "u", "e", EntityClass::kA, 1, {}, {}};
        if (rng.chance(0.4)) c.rewrite_target = "target " + std::to_string(rng.below(3));
        hits.push_back({c, static_cast<double>(rng.below(3)) / 2.0});
      }
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i) {
        const double si = score(fs[i], w);
        const double sb = score(fs[best], w);
        if (si > sb) {
          best = i;
        } else if (si == sb) {
          const auto& a = hits[i];
          const auto& b = hits[best];
          if (a.similarity != b.similarity) {
            if (a.similarity > b.similarity) best = i;
          } else if (a.candidate.effective_text() != b.candidate.effective_text()) {
            if (a.candidate.effective_text() < b.candidate.effective_text()) best = i;
          } else if (a.candidate.utterance < b.candidate.utterance) {
            best = i;
          }
        }
      }
      const auto d = decide(hits, fs, w, 0.8);
      REQUIRE(d.winner.has_value());
      CHECK(*d.winner == best);
      CHECK(d.score == score(fs[best], w));
    }
  }

  TEST_CASE("weights file round trip") {
    SplitMix64 rng(1);
    const auto w = oracle::random_weights(rng, 3.0);
    std::stringstream buf;
    save_weights(buf, w);
    CHECK(load_weights(buf) == w);
    fixture::TempDir dir("w");
    save_weights_file(dir.path() / "w.txt", default_weights());
    CHECK(load_weights_file(dir.path() / "w.txt") == default_weights());
    std::istringstream junk("nonsense\n");
    CHECK_THROWS(load_weights(junk));
  }

  TEST_CASE("default weights reward similarity and penalize defects") {
    const auto w = default_weights();
    CHECK(w.bias == -4.0);
    CHECK(w.weights[static_cast<std::size_t>(Feature::kL1Similarity)] == 6.0);
    CHECK(w.weights[static_cast<std::size_t>(Feature::kGlobalDefectRate)] < 0.0);
    CHECK(w.weights[static_cast<std::size_t>(Feature::kUserDefectRate)] < 0.0);
    CHECK(w.weights[static_cast<std::size_t>(Feature::kBargeInRate)] < 0.0);
    CHECK(w.weights[static_cast<std::size_t>(Feature::kTerminationRate)] < 0.0);
  }
}
