#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ontonorm/ontology.hpp"

namespace ontonorm {

using Vector = std::vector<float>;

// Dot product accumulated in double, in index order.
double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> v);

// dot(a, b) / (|a| |b|). Throws DimensionError on mismatched lengths and
// PreconditionError on a zero vector.
double cosine(std::span<const float> a, std::span<const float> b);

// Unit-length copy. Throws PreconditionError for zero or non-finite input.
Vector normalized(std::span<const float> v);

// Row-major unit vectors aligned 1:1 with an EntryTable.
class EmbeddingMatrix {
 public:
  // Validates and normalizes every row.
  static EmbeddingMatrix from_rows(std::span<const Vector> rows, std::string provenance);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return dim_ ? data_.size() / dim_ : 0; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  const std::string& provenance() const noexcept { return provenance_; }

 private:
  EmbeddingMatrix() = default;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::string provenance_;
};

// Embedding CSV: header `surface,id,v0,...,v{D-1}`, one row per entry in
// table order. Alignment is checked on (surface, id) row by row.
EmbeddingMatrix parse_embedding_csv(std::string_view csv, const EntryTable& table,
                                    std::string provenance);
EmbeddingMatrix load_embedding_file(const std::filesystem::path& path, const EntryTable& table);
std::string serialize_embedding_csv(const EntryTable& table, const EmbeddingMatrix& matrix);

// Produces one vector per input string, in input order, deterministically
// for a fixed model and string. Implementations are expected to mean-pool
// token embeddings (padding masked) with inputs truncated to 128 tokens.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<Vector> embed(std::span<const std::string> terms) = 0;
  virtual std::string id() const = 0;
  virtual std::size_t retries() const { return 0; }
};

// Serves precomputed vectors from a lookup keyed on whitespace-collapsed
// text. Read-only after construction.
class ReplayProvider : public EmbeddingProvider {
 public:
  explicit ReplayProvider(std::string provenance) : provenance_(std::move(provenance)) {}

  // CSV with header `text,v0,...` or the embedding-file layout
  // `surface,id,v0,...`. Later rows for the same text are ignored.
  static std::shared_ptr<ReplayProvider> from_csv(std::string_view csv, std::string provenance);
  static std::shared_ptr<ReplayProvider> from_file(const std::filesystem::path& path);
  static std::shared_ptr<ReplayProvider> from_matrix(const EntryTable& table, const EmbeddingMatrix& matrix);

  void add(std::string_view text, Vector v);
  std::size_t size() const noexcept { return vectors_.size(); }

  std::vector<Vector> embed(std::span<const std::string> terms) override;
  std::string id() const override { return "replay:" + provenance_; }

 private:
  std::string provenance_;
  std::unordered_map<std::string, Vector> vectors_;
};

struct HttpEmbeddingConfig {
  std::string base_url;
  std::string path = "/v1/embeddings";
  std::string model;
  std::string token;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int timeout_ms = 60000;
};

// POSTs {"model", "input": [...]} and reads {"data": [{"index", "embedding"}]}.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingConfig config) : config_(std::move(config)) {}

  std::vector<Vector> embed(std::span<const std::string> terms) override;
  std::string id() const override { return "http:" + config_.base_url + "#" + config_.model; }
  std::size_t retries() const override { return retries_.load(); }

 private:
  HttpEmbeddingConfig config_;
  std::atomic<std::size_t> retries_{0};
};

// Calls the provider and enforces the contract: one finite, non-zero vector
// per term with a common dimension. Returned vectors are unit length.
std::vector<Vector> embed_batch(EmbeddingProvider& provider, std::span<const std::string> terms);

}  // namespace ontonorm
