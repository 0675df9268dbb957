#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ontonorm/embed_store.hpp"
#include "ontonorm/llm_client.hpp"
#include "ontonorm/retriever.hpp"

namespace ontonorm {

inline constexpr int kResultsSchemaVersion = 1;
inline constexpr std::size_t kDefaultRagK = 20;

enum class ModeKind { EmbedOnly, LlmPlain, LlmRag };

struct NormalizationMode {
  ModeKind kind = ModeKind::EmbedOnly;
  std::size_t k = kDefaultRagK;  // used by LlmRag only

  static NormalizationMode embed_only() { return {ModeKind::EmbedOnly, 1}; }
  static NormalizationMode llm_plain() { return {ModeKind::LlmPlain, 0}; }
  // Throws PreconditionError unless 1 <= k <= 50.
  static NormalizationMode llm_rag(std::size_t k = kDefaultRagK);

  friend bool operator==(const NormalizationMode&, const NormalizationMode&) = default;
};

std::string_view to_string(ModeKind kind);
std::optional<ModeKind> parse_mode(std::string_view name);  // embed | llm | rag

enum class ResultFlag : std::uint8_t { OffList = 1, InvalidId = 2, NoOutput = 4, ExactMatch = 8 };

class ResultFlags {
 public:
  void set(ResultFlag f) { bits_ |= static_cast<std::uint8_t>(f); }
  bool has(ResultFlag f) const { return bits_ & static_cast<std::uint8_t>(f); }
  bool empty() const { return bits_ == 0; }
  std::vector<std::string> names() const;  // fixed order: exact_match, invalid_id, no_output, off_list
  static ResultFlags from_names(std::span<const std::string> names);
  friend bool operator==(const ResultFlags&, const ResultFlags&) = default;

 private:
  std::uint8_t bits_ = 0;
};

struct NormalizationResult {
  std::size_t index = 0;
  std::string input;
  std::optional<std::string> chosen_surface;
  std::optional<OntoId> chosen_id;
  NormalizationMode mode;
  std::vector<Candidate> candidates;
  std::optional<double> cosine_of_choice;
  ResultFlags flags;
  std::optional<std::string> raw_reply;
  std::optional<ParseStatus> parse_status;
  // Infrastructure failure (provider or transport). Not a model outcome.
  std::optional<std::string> error;

  friend bool operator==(const NormalizationResult&, const NormalizationResult&) = default;
};

struct RunConfig {
  NormalizationMode mode = NormalizationMode::embed_only();
  std::shared_ptr<EmbeddingProvider> provider;
  std::shared_ptr<ChatBackend> chat;
  std::string model;
  std::size_t concurrency = 4;
  bool exact_match_fast_path = false;
  bool dedupe_by_id = false;
  bool clamp_to_candidates = false;
  CandidateRendering rendering = CandidateRendering::LabelWithId;
  double temperature = 0.0;

  // Throws ConfigError when the mode's dependencies are missing.
  void validate(const TermIndex* index) const;
  // Settings that determine results; excludes concurrency.
  nlohmann::ordered_json identity() const;
  std::string hash() const;
};

// Trim plus internal whitespace collapse; case is preserved.
std::string preprocess_term(std::string_view term);

// Throws PreconditionError for an empty term; provider and transport
// failures propagate as ProviderError / TransportError.
NormalizationResult normalize_one(std::string_view term, const RunConfig& config, const TermIndex* index);

struct RunManifest {
  nlohmann::ordered_json config;
  std::string config_hash;
  std::string provider_id;
  std::string chat_id;
  std::string model;
  std::string started_at;
  std::string finished_at;
  std::size_t n_terms = 0;
  std::size_t n_errors = 0;
  std::size_t n_resumed = 0;
  std::size_t retries = 0;

  nlohmann::ordered_json to_json() const;
};

struct BatchOptions {
  // Append-only journal of completed results; reused entries with a matching
  // config hash are not recomputed.
  std::optional<std::filesystem::path> journal;
};

struct BatchOutput {
  std::vector<NormalizationResult> results;
  RunManifest manifest;
};

// Results come back in input order whatever the concurrency. Per-term
// infrastructure failures are recorded in `error`; ConfigError and
// AuthError abort the batch.
BatchOutput run_batch(std::span<const std::string> terms, const RunConfig& config, const TermIndex* index,
                      const BatchOptions& options = {});

nlohmann::ordered_json result_to_json(const NormalizationResult& result, const std::string& config_hash);
NormalizationResult result_from_json(const nlohmann::json& j);

std::string serialize_results(std::span<const NormalizationResult> results, const std::string& config_hash);
std::vector<NormalizationResult> parse_results(std::string_view jsonl);
std::vector<NormalizationResult> load_results(const std::filesystem::path& path);

std::vector<std::string> parse_terms(std::string_view content);

}  // namespace ontonorm
