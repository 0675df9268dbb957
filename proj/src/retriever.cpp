#include "ontonorm/retriever.hpp"

#include <algorithm>
#include <cmath>

#include "ontonorm/error.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm {

bool ranks_before(double score_a, std::string_view surface_a, const OntoId& id_a, std::size_t index_a,
                  double score_b, std::string_view surface_b, const OntoId& id_b, std::size_t index_b) {
  if (score_a != score_b) return score_a > score_b;
  if (int c = surface_a.compare(surface_b); c != 0) return c < 0;
  if (int c = id_a.str().compare(id_b.str()); c != 0) return c < 0;
  return index_a < index_b;
}

TermIndex::TermIndex(EntryTable table, EmbeddingMatrix matrix)
    : table_(std::move(table)), matrix_(std::move(matrix)) {
  if (table_.size() == 0) throw PreconditionError("cannot index an empty entry table");
  if (matrix_.rows() != table_.size())
    throw DimensionError("embedding matrix has " + std::to_string(matrix_.rows()) + " rows for " +
                         std::to_string(table_.size()) + " entries");
  for (std::size_t i = 0; i < table_.size(); ++i) surface_lookup_[fold_key(table_[i].surface)].push_back(i);
}

std::vector<Candidate> TermIndex::top_k(std::span<const float> query, std::size_t k,
                                        const RetrievalOptions& options) const {
  if (query.size() != matrix_.dim())
    throw DimensionError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                         std::to_string(matrix_.dim()));
  if (k == 0) throw PreconditionError("k must be at least 1");
  const double qnorm = l2_norm(query);
  if (!(qnorm > 0.0) || !std::isfinite(qnorm)) throw PreconditionError("query vector must be finite and non-zero");

  const std::size_t n = table_.size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = dot(query, matrix_.row(i)) / qnorm;

  auto before = [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], table_[a].surface, table_[a].id, a, scores[b], table_[b].surface, table_[b].id,
                        b);
  };

  std::vector<std::size_t> pool;
  if (options.dedupe_by_id) {
    std::unordered_map<std::string, std::size_t> best;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = best.try_emplace(table_[i].id.str(), i);
      if (!inserted && before(i, it->second)) it->second = i;
    }
    pool.reserve(best.size());
    for (const auto& [_, i] : best) pool.push_back(i);
  } else {
    pool.resize(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  }

  const std::size_t take = std::min(k, pool.size());
  std::vector<std::size_t> chosen;
  if (take == pool.size()) {
    chosen = std::move(pool);
    std::sort(chosen.begin(), chosen.end(), before);
  } else {
    // Bounded heap whose front is the worst of the current best `take`.
    chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    std::make_heap(chosen.begin(), chosen.end(), before);
    for (std::size_t p = take; p < pool.size(); ++p) {
      if (before(pool[p], chosen.front())) {
        std::pop_heap(chosen.begin(), chosen.end(), before);
        chosen.back() = pool[p];
        std::push_heap(chosen.begin(), chosen.end(), before);
      }
    }
    std::sort_heap(chosen.begin(), chosen.end(), before);
  }

  std::vector<Candidate> out;
  out.reserve(chosen.size());
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    std::size_t i = chosen[r];
    out.push_back({table_[i].surface, table_[i].id, scores[i], r + 1, i});
  }
  return out;
}

std::span<const std::size_t> TermIndex::lookup(std::string_view raw) const {
  auto it = surface_lookup_.find(fold_key(raw));
  if (it == surface_lookup_.end()) return {};
  return it->second;
}

std::optional<Candidate> TermIndex::exact_match(std::string_view raw_term) const {
  auto hits = lookup(raw_term);
  if (hits.empty()) return std::nullopt;
  std::size_t best = hits.front();
  for (std::size_t i : hits) {
    const auto& a = table_[i];
    const auto& b = table_[best];
    bool a_label = a.kind == EntryKind::PrimaryLabel;
    bool b_label = b.kind == EntryKind::PrimaryLabel;
    if (a_label != b_label) {
      if (a_label) best = i;
      continue;
    }
    if (a.id < b.id) best = i;
  }
  return Candidate{table_[best].surface, table_[best].id, 1.0, 1, best};
}

}  // namespace ontonorm
