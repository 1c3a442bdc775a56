#pragma once

#include <string>
#include <vector>

namespace ranopt {

// Formats a double so that parsing the text recovers the exact bit pattern.
std::string g17(double v);

// Strict numeric parse; throws std::invalid_argument on trailing garbage.
double parse_double(const std::string& s);

std::string join_csv(const std::vector<std::string>& fields);

// Splits one line on commas. Fields in this project never contain commas or
// quotes, so no escaping layer is needed.
std::vector<std::string> split_csv_line(const std::string& line);

// Splits a document into non-empty lines and then into fields.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ranopt
