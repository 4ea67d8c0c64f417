#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace stpasec::util {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);

// Collapses every run of whitespace to a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// Replaces every "{name}" in `tmpl` with the mapped value; unknown slots are left as-is.
std::string substitute(std::string_view tmpl,
                       const std::vector<std::pair<std::string, std::string>>& values);

// Writes `content` to `path` through a sibling temp file and rename.
void write_file_atomic(const std::string& path, std::string_view content);
std::string read_file(const std::string& path);

// Filesystem-safe slug of an arbitrary string (lowercase, [a-z0-9-]).
std::string slugify(std::string_view s);

}  // namespace stpasec::util
