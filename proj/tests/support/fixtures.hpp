#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ontonorm/embed_store.hpp"
#include "ontonorm/eval.hpp"
#include "ontonorm/retriever.hpp"

namespace ontonorm::testing {

std::filesystem::path source_dir();
std::string read_source_file(const std::string& relative);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

Vector random_vector(std::mt19937_64& rng, std::size_t dim);

// Entry table of about `n_entries` rows with repeated surfaces across
// concepts and repeated vectors, so score and surface ties are common.
struct RetrievalFixture {
  std::unique_ptr<TermIndex> index;
};
RetrievalFixture random_retrieval_fixture(std::mt19937_64& rng, std::size_t n_entries, std::size_t dim);

// Query vectors producing ties with specific rows of the fixture.
Vector random_query(std::mt19937_64& rng, const TermIndex& index);

// Terms are perturbed copies of entry vectors; gold points at the source
// concept. About 5% of gold records are malformed.
struct Corpus {
  std::unique_ptr<TermIndex> index;
  std::shared_ptr<ReplayProvider> queries;
  std::vector<std::string> terms;
  std::vector<Vector> term_vectors;
  std::vector<GoldRecord> gold;
};
Corpus make_corpus(std::size_t n_concepts, std::size_t n_terms, std::size_t dim, std::uint64_t seed,
                   double noise = 0.6);

// Single query direction; concept j sits at rank j + 1. Term i is the
// upper-cased label of the concept at ranks[i].
struct SweepFixture {
  std::unique_ptr<TermIndex> index;
  std::shared_ptr<ReplayProvider> queries;
  std::vector<std::string> terms;
  std::vector<GoldRecord> gold;
};
SweepFixture make_sweep_fixture(std::span<const std::size_t> ranks, std::size_t n_concepts = 80,
                                std::size_t dim = 16);

// `text,v0,...` replay CSV.
std::string replay_csv(std::span<const std::string> texts, std::span<const Vector> vectors);
std::string gold_csv(std::span<const GoldRecord> gold);

}  // namespace ontonorm::testing
