#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tracefn::csv {

// RFC 4180 quoting: fields containing , " CR or LF are quoted.
std::string format_row(const std::vector<std::string>& fields);

// Parses a whole document. Quoted fields may span lines. A trailing newline
// does not produce an empty row.
std::vector<std::vector<std::string>> parse(std::string_view text);

// Shortest text that reads back to the same double.
std::string format_number(double value);

}  // namespace tracefn::csv
