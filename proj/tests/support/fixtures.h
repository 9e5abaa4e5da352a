#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cqr/types.h"

namespace fixture {

struct Rec {
  std::string user;
  std::string entity;
  std::string utterance;
  cqr::EntityType type = cqr::EntityType::kSong;
  double defect = 0.0;
  std::int64_t ts = 1000;
  std::optional<std::string> target = std::nullopt;
  std::string session = "s";
  std::string name = {};
  cqr::Domain domain = cqr::Domain::kMusic;
};

inline cqr::LogRecord make(const Rec& r) {
  cqr::LogRecord out;
  out.user_id = r.user;
  out.timestamp = r.ts;
  out.session_id = r.session;
  out.utterance = r.utterance;
  out.entity_id = r.entity;
  out.entity_name = r.name.empty() ? r.entity : r.name;
  out.entity_type = r.type;
  out.domain = r.domain;
  out.defect_score = r.defect;
  out.rewrite_target = r.target;
  return out;
}

inline std::vector<cqr::LogRecord> make_all(const std::vector<Rec>& rs) {
  std::vector<cqr::LogRecord> out;
  for (const auto& r : rs) out.push_back(make(r));
  return out;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cqr_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
