#include "mtl/csv.hpp"

#include "mtl/error.hpp"

namespace mtl {

std::vector<CsvRecord> parse_csv(std::string_view text, char delimiter) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&](std::size_t next_line) {
    end_field();
    const bool blank_line = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank_line) records.push_back(std::move(current));
    current = CsvRecord{};
    current.line = next_line;
  };

  std::size_t i = 0;
  if (text.starts_with("\xEF\xBB\xBF")) i = 3;  // UTF-8 byte order mark
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      ++line;
      end_record(line);
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  require(!quoted, ErrorCode::kParse, "unterminated quoted field starting in record at line " +
                                          std::to_string(current.line));
  if (field_started || !field.empty() || !current.fields.empty()) end_record(line);
  return records;
}

std::string csv_escape(std::string_view field, char delimiter) {
  const bool needs_quotes = field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace mtl
