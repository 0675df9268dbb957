#include "ontonorm/ontology.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "ontonorm/csv.hpp"
#include "ontonorm/error.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm {
namespace {

std::string_view last_segment(std::string_view s) {
  auto pos = s.find_last_of("/#");
  return pos == std::string_view::npos ? s : s.substr(pos + 1);
}

bool has_hp_prefix(std::string_view s) {
  return s.size() >= 3 && (s[0] == 'H' || s[0] == 'h') && (s[1] == 'P' || s[1] == 'p') &&
         (s[2] == ':' || s[2] == '_');
}

std::optional<std::string> canonicalize(std::string_view raw) {
  std::string t = trim(raw);
  std::string_view s = t;
  if (s.find("://") != std::string_view::npos) s = last_segment(s);
  if (!has_hp_prefix(s)) return std::nullopt;
  std::string_view digits = s.substr(3);
  if (digits.size() != 7) return std::nullopt;
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  return "HP:" + std::string(digits);
}

// Control whitespace inside a cell would break the tab-separated table.
std::string clean_surface(std::string_view s) {
  std::string out = trim(s);
  for (char& c : out)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return out;
}

}  // namespace

OntoId OntoId::parse(std::string_view raw) {
  auto c = canonicalize(raw);
  if (!c) throw InvalidIdError(std::string(raw));
  return OntoId(std::move(*c));
}

std::optional<OntoId> OntoId::try_parse(std::string_view raw) noexcept {
  try {
    auto c = canonicalize(raw);
    if (!c) return std::nullopt;
    return OntoId(std::move(*c));
  } catch (...) {
    return std::nullopt;
  }
}

std::string_view to_string(EntryKind kind) {
  return kind == EntryKind::PrimaryLabel ? "label" : "synonym";
}

ParsedOntology parse_ontology_csv(std::string_view bytes, const OntologyCsvOptions& options) {
  CsvReader reader(bytes);
  auto header_rec = reader.next();
  if (!header_rec) throw ParseError("empty ontology file", 0);
  CsvHeader header(*header_rec);
  const std::size_t id_col = header.require("Class ID");
  const std::size_t label_col = header.require("Preferred Label");
  const std::size_t syn_col = header.require("Synonyms");

  ParsedOntology out;
  std::unordered_set<std::string> seen;
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && trim(rec->fields[0]).empty()) continue;
    if (rec->fields.size() < header.size())
      throw ParseError("row has " + std::to_string(rec->fields.size()) + " fields, header has " +
                           std::to_string(header.size()),
                       rec->line);

    std::string class_id = trim(rec->fields[id_col]);
    std::string_view segment = last_segment(class_id);
    if (!has_hp_prefix(segment)) {
      ++out.skipped_non_hp;
      continue;
    }
    auto id = OntoId::try_parse(segment);
    if (!id) throw ParseError("malformed HP class id '" + class_id + "'", rec->line);
    if (!seen.insert(id->str()).second)
      throw ParseError("duplicate class id " + id->str(), rec->line);

    std::string label = clean_surface(rec->fields[label_col]);
    if (label.empty()) {
      ++out.skipped_unlabeled;
      continue;
    }
    if (options.exclude_obsolete && starts_with_icase(label, "obsolete ")) {
      ++out.skipped_obsolete;
      continue;
    }

    ConceptRecord concept_rec{*id, label, {}};
    const std::string& cell = rec->fields[syn_col];
    if (!trim(cell).empty()) {
      for (const auto& part : split(cell, options.synonym_delimiter)) {
        std::string syn = clean_surface(part);
        if (syn.empty() || syn == label) continue;
        if (std::find(concept_rec.synonyms.begin(), concept_rec.synonyms.end(), syn) !=
            concept_rec.synonyms.end())
          continue;
        concept_rec.synonyms.push_back(std::move(syn));
      }
    }
    out.concepts.push_back(std::move(concept_rec));
  }
  return out;
}

EntryTable EntryTable::build(std::vector<ConceptRecord> concepts) {
  if (concepts.empty()) throw PreconditionError("cannot build an entry table from zero concepts");
  EntryTable t;
  t.concepts_.reserve(concepts.size());
  for (auto& c : concepts) {
    c.label = trim(c.label);
    if (c.label.empty()) throw PreconditionError("concept " + c.id.str() + " has an empty label");
    std::vector<std::string> syns;
    for (auto& s : c.synonyms) {
      std::string v = trim(s);
      if (v.empty() || v == c.label || std::find(syns.begin(), syns.end(), v) != syns.end()) continue;
      syns.push_back(std::move(v));
    }
    c.synonyms = std::move(syns);
    if (!t.by_id_.emplace(c.id.str(), t.concepts_.size()).second)
      throw PreconditionError("duplicate concept id " + c.id.str());
    t.concepts_.push_back(std::move(c));
  }
  for (const auto& c : t.concepts_) {
    t.entries_.push_back({c.label, c.id, EntryKind::PrimaryLabel});
    for (const auto& s : c.synonyms) t.entries_.push_back({s, c.id, EntryKind::Synonym});
  }
  return t;
}

const ConceptRecord* EntryTable::find(const OntoId& id) const {
  auto it = by_id_.find(id.str());
  return it == by_id_.end() ? nullptr : &concepts_[it->second];
}

std::string serialize_entry_table(const EntryTable& table) {
  std::string out = "surface\tid\tkind\n";
  for (const auto& e : table.entries()) {
    out += e.surface;
    out += '\t';
    out += e.id.str();
    out += '\t';
    out += to_string(e.kind);
    out += '\n';
  }
  return out;
}

EntryTable parse_entry_table(std::string_view tsv) {
  auto lines = split(tsv, '\n');
  if (lines.empty() || trim(lines[0]) != "surface\tid\tkind")
    throw ParseError("entry table must start with header 'surface<TAB>id<TAB>kind'", 1);

  std::vector<ConceptRecord> concepts;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 3) throw ParseError("expected 3 tab-separated columns", i + 1);
    auto id = OntoId::try_parse(cols[1]);
    if (!id) throw ParseError("invalid id '" + cols[1] + "'", i + 1);
    if (cols[2] == "label") {
      concepts.push_back({*id, cols[0], {}});
    } else if (cols[2] == "synonym") {
      if (concepts.empty() || concepts.back().id != *id)
        throw ParseError("synonym row does not follow its concept's label", i + 1);
      concepts.back().synonyms.push_back(cols[0]);
    } else {
      throw ParseError("unknown kind '" + cols[2] + "'", i + 1);
    }
  }
  if (concepts.empty()) throw ParseError("entry table has no rows", 0);
  try {
    return EntryTable::build(std::move(concepts));
  } catch (const PreconditionError& e) {
    throw ParseError(e.what(), 0);
  }
}

}  // namespace ontonorm
