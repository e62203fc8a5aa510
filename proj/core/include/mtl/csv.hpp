#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mtl {

// RFC 4180 style reader: quoted fields may contain delimiters, doubled quotes
// and line breaks. Each record carries the 1-based line where it started.
struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRecord> parse_csv(std::string_view text, char delimiter = ',');

std::string csv_escape(std::string_view field, char delimiter = ',');

}  // namespace mtl
