#include "ontonorm/csv.hpp"

#include "ontonorm/error.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm {

CsvReader::CsvReader(std::string_view data, char delimiter) : data_(data), delim_(delimiter) {
  if (data_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
}

std::optional<CsvRecord> CsvReader::next() {
  if (pos_ >= data_.size()) return std::nullopt;

  CsvRecord rec;
  rec.line = line_;
  std::string field;
  bool quoted = false;
  bool after_quote = false;

  auto end_record = [&] {
    rec.fields.push_back(std::move(field));
    return rec;
  };

  while (pos_ < data_.size()) {
    char c = data_[pos_++];
    if (quoted) {
      if (c == '"') {
        if (pos_ < data_.size() && data_[pos_] == '"') {
          field.push_back('"');
          ++pos_;
        } else {
          quoted = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line_;
        field.push_back(c);
      }
      continue;
    }
    if (c == delim_) {
      rec.fields.push_back(std::move(field));
      field.clear();
      after_quote = false;
      continue;
    }
    if (c == '\r' && pos_ < data_.size() && data_[pos_] == '\n') continue;
    if (c == '\n') {
      ++line_;
      return end_record();
    }
    if (after_quote) throw ParseError("unexpected character after closing quote", rec.line);
    if (c == '"' && field.empty()) {
      quoted = true;
      continue;
    }
    field.push_back(c);
  }
  if (quoted) throw ParseError("unterminated quoted field", rec.line);
  return end_record();
}

std::vector<CsvRecord> read_csv(std::string_view data, char delimiter) {
  CsvReader reader(data, delimiter);
  std::vector<CsvRecord> out;
  while (auto rec = reader.next()) out.push_back(std::move(*rec));
  return out;
}

std::string csv_escape(std::string_view field, char delimiter) {
  bool needs = field.find_first_of(std::string{'"', '\n', '\r', delimiter}) != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void append_csv_row(std::string& out, std::span<const std::string> fields, char delimiter) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(delimiter);
    out += csv_escape(fields[i], delimiter);
  }
  out.push_back('\n');
}

CsvHeader::CsvHeader(const CsvRecord& header) : line_(header.line) {
  for (const auto& f : header.fields) names_.push_back(trim(f));
}

std::optional<std::size_t> CsvHeader::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::size_t CsvHeader::require(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw ParseError("missing required column '" + std::string(name) + "'", line_);
}

}  // namespace ontonorm
