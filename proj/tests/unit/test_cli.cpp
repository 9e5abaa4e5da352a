#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cqr/log_io.h"
#include "cqr/stages.h"
#include "fixtures.h"

using namespace cqr;
using fixture::Rec;

namespace {

PipelineConfig config_in(const fixture::TempDir& dir) {
  PipelineConfig c;
  c.work_dir = dir.path();
  return c.resolved();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Y shares three songs with X and once rephrased "play easy cake".
std::vector<LogRecord> cake_log() {
  const std::int64_t t = WorldConfig{}.start_timestamp + 100;
  std::vector<Rec> recs;
  for (const char* user : {"X", "Y"}) {
    for (const char* song : {"s1", "s2", "s3"}) recs.push_back({user, song, std::string("play ") + song, EntityType::kSong, 0.0, t});
  }
  Rec r{"Y", "cake", "play easy cake", EntityType::kVideo, 0.0, t, std::string("play is it cake on netflix")};
  r.name = "is it cake";
  r.domain = Domain::kVideo;
  recs.push_back(r);
  return fixture::make_all(recs);
}

}  // namespace

TEST_SUITE("cli_app") {
  TEST_CASE("config file keys, comments and errors") {
    std::istringstream in("# comment\nwork_dir = /tmp/x\nworld.seed = 9\nretrieval_k=4\n\nindex_mode = traversal\n");
    const auto c = parse_config(in);
    CHECK(c.work_dir == "/tmp/x");
    CHECK(c.world.seed == 9);
    CHECK(c.retrieval_k == 4);
    CHECK(c.index_mode == IndexMode::kTraversal);
    CHECK(c.collaborative_cap() == c.traversal_cap);

    std::istringstream unknown("bogus = 1\n");
    CHECK_THROWS_AS(parse_config(unknown), std::invalid_argument);
    std::istringstream bad("retrieval_k = many\n");
    CHECK_THROWS_AS(parse_config(bad), std::invalid_argument);
    std::istringstream no_eq("retrieval_k\n");
    CHECK_THROWS_AS(parse_config(no_eq), std::invalid_argument);
    CHECK_THROWS(load_config_file("/nonexistent/cqr.conf"));
  }

  TEST_CASE("every config item round trips") {
    PipelineConfig a;
    a.world.seed = 5;
    a.trigger_threshold = 0.7;
    a.index_mode = IndexMode::kExternal;
    PipelineConfig b;
    for (const auto& [k, v] : config_items(a)) CHECK(set_config_item(b, k, v));
    CHECK(config_items(b) == config_items(a));
  }

  TEST_CASE("environment variables override file values") {
    ::setenv("CQR_WORLD_SEED", "77", 1);
    ::setenv("CQR_RETRIEVAL_K", "3", 1);
    PipelineConfig c;
    apply_env_overrides(c);
    ::unsetenv("CQR_WORLD_SEED");
    ::unsetenv("CQR_RETRIEVAL_K");
    CHECK(c.world.seed == 77);
    CHECK(c.retrieval_k == 3);
  }

  TEST_CASE("validation rejects out-of-range values") {
    PipelineConfig c;
    c.trigger_threshold = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PipelineConfig{};
    c.retrieval_k = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PipelineConfig{};
    c.max_hop = 9;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK_NOTHROW(PipelineConfig{}.validate());
  }

  TEST_CASE("resolved paths live in the work directory") {
    PipelineConfig c;
    c.work_dir = "w";
    c.weights_path = "/elsewhere/w.txt";
    const auto r = c.resolved();
    CHECK(r.logs_path.parent_path() == "w");
    CHECK(r.graph_path.parent_path() == "w");
    CHECK(r.weights_path == "/elsewhere/w.txt");
  }

  TEST_CASE("stages report missing inputs") {
    fixture::TempDir dir("missing");
    const auto c = config_in(dir);
    CHECK_THROWS_AS(build_graph_stage(c), MissingArtifact);
    CHECK_THROWS_AS(build_index_stage(c, IndexMode::kTraversal, 100), MissingArtifact);
    CHECK_THROWS_AS(predict_links_stage(c, false), MissingArtifact);
    CHECK_THROWS_AS(evaluate_stage(c, true, false, ReportFormat::kTable), MissingArtifact);
    CHECK_THROWS_AS(RewriteService{c}, MissingArtifact);
    try {
      build_graph_stage(c);
    } catch (const MissingArtifact& e) {
      CHECK(e.path() == c.logs_path);
      CHECK(std::string(e.what()).find("synth") != std::string::npos);
    }
  }

  TEST_CASE("small world through every stage") {
    fixture::TempDir dir("stages");
    auto c = config_in(dir);
    c.world.num_users = 60;
    c.world.num_clusters = 4;
    c.world.weeks_history = 6;
    c.guardrail_size = 100;
    c.epochs = 50;
    CHECK_FALSE(synth_stage(c).empty());
    CHECK(std::filesystem::exists(c.logs_path));
    CHECK(std::filesystem::exists(c.work_dir / "world_manifest.txt"));
    build_graph_stage(c);
    CHECK(std::filesystem::exists(c.graph_path));
    predict_links_stage(c, false);
    CHECK(std::filesystem::exists(c.predictions_path));
    predict_links_stage(c, true);
    CHECK(std::filesystem::exists(c.work_dir / "prediction_requests.jsonl"));
    build_index_stage(c, IndexMode::kCooccurrence, 200);
    CHECK(std::filesystem::exists(c.index_path));
    export_finetune_stage(c);
    CHECK(std::filesystem::exists(c.work_dir / "finetune.jsonl"));

    const auto out = evaluate_stage(c, true, true, ReportFormat::kJsonl);
    // Metrics runs carry coverage too, so no separate coverage files appear.
    for (const char* f : {"metrics.txt", "metrics.jsonl"}) {
      CHECK(std::filesystem::exists(c.report_dir / f));
    }
    CHECK_FALSE(std::filesystem::exists(c.report_dir / "coverage.txt"));
    CHECK(std::filesystem::exists(c.weights_path));
    evaluate_stage(c, true, false, ReportFormat::kTable);
    CHECK(std::filesystem::exists(c.report_dir / "coverage.jsonl"));
    CHECK_THROWS_AS(evaluate_stage(c, false, false, ReportFormat::kTable), std::invalid_argument);
    std::istringstream lines(out.report);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      CHECK_NOTHROW(nlohmann::json::parse(line));
      ++n;
    }
    CHECK(n > 0);

    const RewriteService service(c);
    CHECK_FALSE(service.default_weights_used());
    const auto reply = service.answer("nobody", "play jazz");
    CHECK_FALSE(reply.triggered);
  }

  TEST_CASE("a misrecognized title is rewritten from a peer's rephrase") {
    fixture::TempDir dir("cake");
    auto c = config_in(dir);
    write_log_file(c.logs_path, cake_log());
    build_graph_stage(c);
    build_index_stage(c, IndexMode::kTraversal, 100);
    const RewriteService service(c);
    CHECK(service.default_weights_used());
    const auto reply = service.answer("X", "play easy cake");
    CHECK(reply.triggered);
    CHECK(reply.rewrite == "play is it cake on netflix");
    CHECK(reply.score >= c.trigger_threshold);

    const auto j = nlohmann::json::parse(reply_json(reply));
    CHECK(j["triggered"] == true);
    CHECK(j["rewrite"] == "play is it cake on netflix");
    CHECK(j["score"].get<double>() == reply.score);

    CHECK_FALSE(service.answer("X", "turn on the kitchen light").triggered);
  }

  TEST_CASE("rewrite request parsing") {
    const auto [u, q] = parse_rewrite_request(R"({"user_id": "X", "query": "play easy cake"})");
    CHECK(u == "X");
    CHECK(q == "play easy cake");
    CHECK_THROWS_AS(parse_rewrite_request("not json"), std::invalid_argument);
    CHECK_THROWS_AS(parse_rewrite_request(R"({"user_id": "X"})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_rewrite_request(R"({"user_id": 3, "query": "q"})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_rewrite_request(R"([1, 2])"), std::invalid_argument);
  }

  TEST_CASE("reply json when nothing triggers") {
    const auto j = nlohmann::json::parse(reply_json({false, "", 0.25}));
    CHECK(j["triggered"] == false);
    CHECK(j["score"] == 0.25);
  }

  TEST_CASE("stage outputs are byte-identical across runs") {
    fixture::TempDir a("det-a");
    fixture::TempDir b("det-b");
    for (auto* d : {&a, &b}) {
      auto c = config_in(*d);
      c.world.num_users = 30;
      c.world.num_clusters = 3;
      c.world.weeks_history = 4;
      synth_stage(c);
      build_graph_stage(c);
      build_index_stage(c, IndexMode::kTraversal, 100);
    }
    const auto ca = config_in(a);
    const auto cb = config_in(b);
    CHECK(slurp(ca.logs_path) == slurp(cb.logs_path));
    CHECK(slurp(ca.graph_path) == slurp(cb.graph_path));
    CHECK(slurp(ca.index_path) == slurp(cb.index_path));
  }
}
