#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ontonorm {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // physical line where the record starts
};

// RFC 4180 reader: quoted fields may span lines and escape quotes by
// doubling. CRLF and LF line endings are accepted; a leading UTF-8 BOM is
// skipped. Throws ParseError on an unterminated quote or on characters
// following a closing quote.
class CsvReader {
 public:
  explicit CsvReader(std::string_view data, char delimiter = ',');

  std::optional<CsvRecord> next();

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  char delim_;
};

std::vector<CsvRecord> read_csv(std::string_view data, char delimiter = ',');

// Quotes a field only when it contains the delimiter, a quote or a newline.
std::string csv_escape(std::string_view field, char delimiter = ',');

void append_csv_row(std::string& out, std::span<const std::string> fields, char delimiter = ',');

// Maps header names to column positions; throws ParseError naming the first
// missing column.
class CsvHeader {
 public:
  explicit CsvHeader(const CsvRecord& header);
  std::size_t require(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::size_t line_;
};

}  // namespace ontonorm
