#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ontonorm {

// Canonical HPO identifier: "HP:" followed by exactly seven digits.
class OntoId {
 public:
  // Accepts HP:nnnnnnn, HP_nnnnnnn (any prefix case), and IRIs whose last
  // path segment is one of those. Throws InvalidIdError otherwise.
  static OntoId parse(std::string_view raw);
  static std::optional<OntoId> try_parse(std::string_view raw) noexcept;

  const std::string& str() const noexcept { return value_; }

  friend bool operator==(const OntoId&, const OntoId&) = default;
  friend auto operator<=>(const OntoId&, const OntoId&) = default;

 private:
  explicit OntoId(std::string canonical) : value_(std::move(canonical)) {}
  std::string value_;
};

inline OntoId normalize_id(std::string_view raw) { return OntoId::parse(raw); }

struct ConceptRecord {
  OntoId id;
  std::string label;
  std::vector<std::string> synonyms;
};

enum class EntryKind { PrimaryLabel, Synonym };

std::string_view to_string(EntryKind kind);

struct EntryTerm {
  std::string surface;
  OntoId id;
  EntryKind kind;

  friend bool operator==(const EntryTerm&, const EntryTerm&) = default;
};

struct OntologyCsvOptions {
  char synonym_delimiter = '|';
  bool exclude_obsolete = false;
};

struct ParsedOntology {
  std::vector<ConceptRecord> concepts;
  std::size_t skipped_non_hp = 0;
  std::size_t skipped_obsolete = 0;
  std::size_t skipped_unlabeled = 0;
};

// Parses a BioPortal class export (columns "Class ID", "Preferred Label",
// "Synonyms"). Rows whose class is not an HP term are skipped and counted.
ParsedOntology parse_ontology_csv(std::string_view bytes, const OntologyCsvOptions& options = {});

// Flat list of searchable surfaces: concepts in input order, each label
// followed by its synonyms. Immutable once built.
class EntryTable {
 public:
  // Throws PreconditionError on an empty concept list, duplicate ids or an
  // empty label. Synonyms are trimmed and deduplicated per concept.
  static EntryTable build(std::vector<ConceptRecord> concepts);

  std::span<const EntryTerm> entries() const noexcept { return entries_; }
  std::span<const ConceptRecord> concepts() const noexcept { return concepts_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const EntryTerm& operator[](std::size_t i) const { return entries_[i]; }

  const ConceptRecord* find(const OntoId& id) const;

 private:
  EntryTable() = default;
  std::vector<ConceptRecord> concepts_;
  std::vector<EntryTerm> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

inline EntryTable build_entry_table(std::vector<ConceptRecord> concepts) {
  return EntryTable::build(std::move(concepts));
}

// Tab-separated `surface<TAB>id<TAB>kind` with a header row; kind is
// "label" or "synonym".
std::string serialize_entry_table(const EntryTable& table);
EntryTable parse_entry_table(std::string_view tsv);

}  // namespace ontonorm

template <>
struct std::hash<ontonorm::OntoId> {
  std::size_t operator()(const ontonorm::OntoId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
