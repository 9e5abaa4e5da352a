#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cqr {

/// Lowercase (ASCII), collapse internal whitespace runs to one space, trim.
std::string normalize_utterance(std::string_view text);
/// True when normalize_utterance(text) == text.
bool is_normalized(std::string_view text);

/// Splits on single spaces. Input is expected to be normalized.
std::vector<std::string_view> tokens(std::string_view normalized);

/// |A ∩ B| / |A ∪ B| over distinct tokens of two normalized strings.
/// Two empty strings have similarity 1.
double token_set_jaccard(std::string_view a, std::string_view b);

/// Byte-level Levenshtein distance.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// edit_distance / max(|a|, |b|); 0 when both are empty.
double normalized_edit_distance(std::string_view a, std::string_view b);

/// Shortest representation that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep);

}  // namespace cqr
