#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "cqr/log_io.h"
#include "cqr/synth.h"
#include "cqr/text.h"
#include "fixtures.h"

using namespace cqr;

TEST_SUITE("text") {
  TEST_CASE("normalization lowercases, collapses and trims whitespace") {
    CHECK(normalize_utterance("  Play   Easy\tCake ") == "play easy cake");
    CHECK(normalize_utterance("") == "");
    CHECK(normalize_utterance(" \t ") == "");
    CHECK(is_normalized("play jazz"));
    CHECK_FALSE(is_normalized("Play jazz"));
    CHECK_FALSE(is_normalized("play  jazz"));
    CHECK(normalize_utterance(normalize_utterance(" A  b ")) == normalize_utterance(" A  b "));
  }

  TEST_CASE("token set jaccard") {
    CHECK(token_set_jaccard("the sound of music deluxe", "the sound of music") == doctest::Approx(0.8));
    CHECK(token_set_jaccard("pink", "pink floyd") == doctest::Approx(0.5));
    CHECK(token_set_jaccard("", "") == 1.0);
    CHECK(token_set_jaccard("a a b", "b") == doctest::Approx(0.5));
  }

  TEST_CASE("edit distance") {
    CHECK(edit_distance("kitten", "sitting") == 3);
    CHECK(edit_distance("", "abc") == 3);
    CHECK(normalized_edit_distance("", "") == 0.0);
    CHECK(normalized_edit_distance("play is it cake", "play is it cake by netflix") ==
          doctest::Approx(11.0 / 26.0));
  }

  TEST_CASE("doubles survive formatting exactly") {
    for (double v : {0.0, 0.1, 1.0 / 3.0, 1e-300, 12345.678901234567, -2.5,
                     std::numeric_limits<double>::denorm_min()}) {
      CHECK(parse_double(format_double(v)) == v);
    }
    CHECK_THROWS_AS(parse_double("abc"), std::invalid_argument);
    CHECK_THROWS_AS(parse_int("12x"), std::invalid_argument);
  }
}

TEST_SUITE("log_io") {
  TEST_CASE("empty input parses to nothing") {
    std::istringstream in("");
    const auto r = parse_log_stream(in);
    CHECK(r.records.empty());
    CHECK(r.rejects.empty());
  }

  TEST_CASE("one well-formed line round-trips exactly") {
    auto rec = fixture::make({"u1", "e1", "Play Easy Cake", EntityType::kVideo, 0.25, 1700000000,
                              std::string("play is it cake on netflix"), "sess9", "Is It Cake", Domain::kVideo});
    rec.barged_in = true;
    std::istringstream in(format_log_line(rec) + "\n");
    const auto r = parse_log_stream(in);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0] == rec);
    CHECK(r.rejects.empty());
  }

  TEST_CASE("line missing defect_score is rejected with its line number") {
    const auto good = fixture::make({"u1", "e1", "play jazz"});
    auto line = format_log_line(good);
    std::string bad = line;
    // Blank the ninth field (defect_score).
    std::size_t pos = 0;
    for (int i = 0; i < 8; ++i) pos = bad.find('\t', pos) + 1;
    bad.erase(pos, bad.find('\t', pos) - pos);
    std::istringstream in(line + "\n" + bad + "\n" + line + "\n");
    const auto r = parse_log_stream(in);
    CHECK(r.records.size() == 2);
    REQUIRE(r.rejects.size() == 1);
    CHECK(r.rejects[0].line_number == 2);
  }

  TEST_CASE("malformed fields are rejected, not fatal") {
    std::istringstream in("only\tthree\tfields\nu\tx\ts\tplay\te\tn\tsong\tmusic\t0.1\t0\t0\t\n");
    const auto r = parse_log_stream(in);
    CHECK(r.records.empty());
    CHECK(r.rejects.size() == 2);
  }

  TEST_CASE("file round trip over synthetic logs") {
    WorldConfig wc;
    wc.num_users = 30;
    wc.num_clusters = 3;
    wc.weeks_history = 3;
    const auto logs = generate_logs(generate_world(wc));
    fixture::TempDir dir("log");
    const auto path = dir.path() / "logs.tsv";
    write_log_file(path, logs.records);
    const auto back = parse_log_file(path);
    CHECK(back.rejects.empty());
    CHECK(back.records == logs.records);
    CHECK_THROWS_AS(parse_log_file(dir.path() / "absent.tsv"), std::runtime_error);
  }
}
