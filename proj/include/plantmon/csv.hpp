#pragma once

// Small RFC 4180 helpers and round-trip-exact number formatting.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace plantmon::csv {

// Quotes a cell when it contains a comma, quote, CR or LF.
std::string quote(std::string_view cell);

std::string join_row(const std::vector<std::string>& cells);

// Parses a whole document. Rows end at CRLF or LF; quoted cells may span
// lines. A trailing newline does not produce an empty row.
std::vector<std::vector<std::string>> parse(std::string_view text);

// Shortest decimal text that parses back to the same double.
std::string format_number(double v);
std::optional<double> parse_number(std::string_view s);

}  // namespace plantmon::csv
