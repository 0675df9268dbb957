#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ontonorm {

std::string trim(std::string_view s);

// Trims and collapses every run of ASCII whitespace to a single space.
std::string collapse_whitespace(std::string_view s);

// Full Unicode case folding (ICU default folding). Invalid UTF-8 sequences
// are replaced by U+FFFD.
std::string case_fold(std::string_view s);

// Lookup key used for surface matching: case_fold(collapse_whitespace(s)).
std::string fold_key(std::string_view s);

std::vector<std::string> split(std::string_view s, char delim);

bool starts_with_icase(std::string_view s, std::string_view prefix);

// Normalized Levenshtein similarity in [0, 1] over bytes.
double edit_similarity(std::string_view a, std::string_view b);

}  // namespace ontonorm
