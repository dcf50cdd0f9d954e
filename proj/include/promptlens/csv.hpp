#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace promptlens {

/// One parsed record and the 1-based line it starts on.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

/// Comma-separated text with RFC 4180 quoting: fields may be wrapped in double quotes,
/// doubled quotes escape a quote, quoted fields may span lines. CRLF and LF both end a
/// record; blank lines are skipped. A UTF-8 byte-order mark is ignored.
/// Throws ParseError (with the byte offset) on an unterminated quote or stray text after
/// a closing quote.
std::vector<CsvRow> parse_csv(std::string_view text);

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view value);

/// Joins fields with commas and terminates the record with "\n".
std::string csv_line(const std::vector<std::string>& fields);

}  // namespace promptlens
