#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cpijit::csv {

/// Splits one CSV record. Double-quoted fields may contain the delimiter and
/// doubled quotes; embedded newlines are not supported.
std::vector<std::string> split_record(std::string_view line, char delimiter = ',');

/// Reads the next nonblank line (CR stripped). Returns nullopt at end of stream.
std::optional<std::string> next_line(std::istream& in);

/// Quotes a field when it contains the delimiter, a quote, or a newline.
std::string escape(std::string_view field, char delimiter = ',');

std::string trim(std::string_view s);

}  // namespace cpijit::csv
