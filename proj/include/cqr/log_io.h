#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cqr/types.h"

namespace cqr {

struct LineReject {
  std::size_t line_number = 0;  // 1-based
  std::string reason;
};

struct LogParseResult {
  std::vector<LogRecord> records;
  std::vector<LineReject> rejects;
};

// Tab-separated, one record per line:
//   user_id timestamp session_id utterance entity_id entity_name entity_type
//   domain defect_score barged_in(0/1) terminated(0/1) rewrite_target
// An empty rewrite_target field means "absent". Blank lines are skipped.
LogParseResult parse_log_stream(std::istream& in);
// Throws std::runtime_error when the file cannot be opened.
LogParseResult parse_log_file(const std::filesystem::path& path);

std::string format_log_line(const LogRecord& record);
void write_log_stream(std::ostream& out, const std::vector<LogRecord>& records);
void write_log_file(const std::filesystem::path& path, const std::vector<LogRecord>& records);

}  // namespace cqr
