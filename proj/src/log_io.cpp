#include "cqr/log_io.h"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "cqr/text.h"

namespace cqr {

namespace {

constexpr std::size_t kNumFields = 12;

bool parse_flag(std::string_view field, const char* name) {
  if (field == "0") return false;
  if (field == "1") return true;
  throw std::invalid_argument(std::string(name) + " must be 0 or 1");
}

LogRecord parse_line(std::string_view line) {
  const auto fields = split(line, '\t');
  if (fields.size() != kNumFields) {
    throw std::invalid_argument("expected " + std::to_string(kNumFields) + " fields, got " +
                                std::to_string(fields.size()));
  }
  LogRecord r;
  r.user_id = fields[0];
  if (r.user_id.empty()) throw std::invalid_argument("empty user_id");
  r.timestamp = parse_int(fields[1]);
  if (r.timestamp < 0) throw std::invalid_argument("negative timestamp");
  r.session_id = fields[2];
  r.utterance = fields[3];
  if (r.utterance.empty()) throw std::invalid_argument("empty utterance");
  r.entity_id = fields[4];
  if (r.entity_id.empty()) throw std::invalid_argument("empty entity_id");
  r.entity_name = fields[5];
  r.entity_type = parse_entity_type(fields[6]);
  r.domain = parse_domain(fields[7]);
  if (fields[8].empty()) throw std::invalid_argument("missing defect_score");
  r.defect_score = parse_double(fields[8]);
  if (!(r.defect_score >= 0.0 && r.defect_score <= 1.0)) {
    throw std::invalid_argument("defect_score outside [0,1]");
  }
  r.barged_in = parse_flag(fields[9], "barged_in");
  r.terminated = parse_flag(fields[10], "terminated");
  if (!fields[11].empty()) r.rewrite_target = std::string(fields[11]);
  return r;
}

}  // namespace

LogParseResult parse_log_stream(std::istream& in) {
  LogParseResult result;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      result.records.push_back(parse_line(line));
    } catch (const std::invalid_argument& e) {
      result.rejects.push_back({line_number, e.what()});
    }
  }
  return result;
}

LogParseResult parse_log_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log file " + path.string());
  return parse_log_stream(in);
}

std::string format_log_line(const LogRecord& r) {
  std::string out;
  out.reserve(128);
  auto field = [&out](std::string_view v) {
    out.append(v);
    out.push_back('\t');
  };
  field(r.user_id);
  field(std::to_string(r.timestamp));
  field(r.session_id);
  field(r.utterance);
  field(r.entity_id);
  field(r.entity_name);
  field(to_string(r.entity_type));
  field(to_string(r.domain));
  field(format_double(r.defect_score));
  field(r.barged_in ? "1" : "0");
  field(r.terminated ? "1" : "0");
  if (r.rewrite_target) out.append(*r.rewrite_target);
  return out;
}

void write_log_stream(std::ostream& out, const std::vector<LogRecord>& records) {
  for (const auto& r : records) out << format_log_line(r) << '\n';
}

void write_log_file(const std::filesystem::path& path, const std::vector<LogRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write log file " + path.string());
  write_log_stream(out, records);
}

}  // namespace cqr
