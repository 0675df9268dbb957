#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ontonorm/embed_store.hpp"
#include "ontonorm/ontology.hpp"

namespace ontonorm {

struct Candidate {
  std::string surface;
  OntoId id;
  double score = 0.0;
  std::size_t rank = 0;         // 1-based
  std::size_t entry_index = 0;  // row in the entry table

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

// Result order: score descending, then surface ascending, then id ascending
// (byte order); entry index breaks any remaining tie.
bool ranks_before(double score_a, std::string_view surface_a, const OntoId& id_a, std::size_t index_a,
                  double score_b, std::string_view surface_b, const OntoId& id_b, std::size_t index_b);

struct RetrievalOptions {
  // Keep only the best-ranked entry per concept.
  bool dedupe_by_id = false;
};

// Exact cosine search over an aligned entry table and embedding matrix.
// Immutable; queries may run concurrently.
class TermIndex {
 public:
  // Throws PreconditionError on an empty table and DimensionError when the
  // matrix row count differs from the table length.
  TermIndex(EntryTable table, EmbeddingMatrix matrix);

  const EntryTable& table() const noexcept { return table_; }
  const EmbeddingMatrix& matrix() const noexcept { return matrix_; }
  std::size_t size() const noexcept { return table_.size(); }
  std::size_t dim() const noexcept { return matrix_.dim(); }

  // Score of every row is dot(query, row) / |query|. k >= size returns all
  // rows, sorted.
  std::vector<Candidate> top_k(std::span<const float> query, std::size_t k,
                               const RetrievalOptions& options = {}) const;

  // Case-folded, whitespace-collapsed surface lookup. On collisions a
  // primary label wins, then the lowest id.
  std::optional<Candidate> exact_match(std::string_view raw_term) const;

  // Entry indices whose folded surface equals fold_key(raw).
  std::span<const std::size_t> lookup(std::string_view raw) const;

 private:
  EntryTable table_;
  EmbeddingMatrix matrix_;
  std::unordered_map<std::string, std::vector<std::size_t>> surface_lookup_;
};

inline TermIndex build_index(EntryTable table, EmbeddingMatrix matrix) {
  return TermIndex(std::move(table), std::move(matrix));
}

}  // namespace ontonorm
