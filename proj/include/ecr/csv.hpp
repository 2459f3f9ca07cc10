#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ecr {

using CsvRow = std::vector<std::string>;

// RFC 4180-style reader: quoted fields may contain commas, quotes ("") and
// newlines. Blank lines are skipped. Throws FormatError on an unterminated quote.
std::vector<CsvRow> parse_csv(std::string_view text);

std::string csv_field(const std::string& value);
std::string csv_line(const CsvRow& row);

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace ecr
