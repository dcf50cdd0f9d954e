#include "promptlens/csv.hpp"

#include "promptlens/error.hpp"

namespace promptlens {

std::vector<CsvRow> parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  std::size_t line = 1;
  std::size_t pos = 0;
  bool row_has_content = false;
  row.line = line;

  const auto end_row = [&] {
    if (row_has_content) {
      row.fields.push_back(std::move(field));
      rows.push_back(std::move(row));
    }
    row = CsvRow{};
    field.clear();
    row_has_content = false;
  };

  while (pos < text.size()) {
    const char c = text[pos];
    if (c == '"' && field.empty()) {
      const std::size_t quote_at = pos;
      row_has_content = true;
      ++pos;
      bool closed = false;
      while (pos < text.size()) {
        if (text[pos] == '"') {
          if (pos + 1 < text.size() && text[pos + 1] == '"') {
            field.push_back('"');
            pos += 2;
            continue;
          }
          ++pos;
          closed = true;
          break;
        }
        if (text[pos] == '\n') ++line;
        field.push_back(text[pos++]);
      }
      if (!closed) {
        throw ParseError("unterminated quoted field starting at byte " + std::to_string(quote_at),
                         quote_at);
      }
      if (pos < text.size() && text[pos] != ',' && text[pos] != '\n' && text[pos] != '\r') {
        throw ParseError("unexpected text after closing quote at byte " + std::to_string(pos),
                         pos);
      }
      continue;
    }
    if (c == ',') {
      row.fields.push_back(std::move(field));
      field.clear();
      row_has_content = true;
      ++pos;
      continue;
    }
    if (c == '\r' || c == '\n') {
      end_row();
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      ++line;
      row.line = line;
      continue;
    }
    field.push_back(c);
    row_has_content = true;
    ++pos;
  }
  end_row();
  return rows;
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(value);
  std::string out = "\"";
  for (const char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k > 0) out.push_back(',');
    out += csv_field(fields[k]);
  }
  out.push_back('\n');
  return out;
}

}  // namespace promptlens
