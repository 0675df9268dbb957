#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ontonorm {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// One entry per non-blank line, trimmed; lines whose first non-blank
// character is '#' are skipped.
std::vector<std::string> parse_line_list(std::string_view content);

std::string utc_timestamp();

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace ontonorm
