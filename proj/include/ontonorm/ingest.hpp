#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "ontonorm/llm_client.hpp"

namespace ontonorm {

inline constexpr std::string_view kOmimKeyEnv = "ONTONORM_OMIM_KEY";

struct ClinicalDocument {
  std::string mim_number;  // exactly six digits
  std::string title;
  std::string clinical_features_text;
  std::string fetched_at;
};

nlohmann::ordered_json document_to_json(const ClinicalDocument& doc);
ClinicalDocument document_from_json(const nlohmann::json& j);
std::vector<ClinicalDocument> parse_documents(std::string_view jsonl);
std::string serialize_documents(std::span<const ClinicalDocument> docs);

bool is_mim_number(std::string_view s);

struct FetchSkip {
  std::string mim_number;
  std::string reason;
};

struct FetchOutcome {
  std::vector<ClinicalDocument> documents;
  std::vector<FetchSkip> skipped;
  std::size_t network_calls = 0;
};

struct OmimConfig {
  std::string base_url = "https://api.omim.org";
  std::string api_key;  // from ONTONORM_OMIM_KEY
  std::filesystem::path cache_dir;
  int max_retries = 3;
  int backoff_base_ms = 1000;
  int timeout_ms = 60000;
};

// Fetches the free-text clinicalFeatures section of each entry. Responses,
// including skips, are cached as <cache_dir>/<mim>.json, and cached entries
// are served without a request. The API key is only required once a
// request is needed; a missing or rejected key raises AuthError naming
// ONTONORM_OMIM_KEY, and quota exhaustion raises QuotaError.
FetchOutcome fetch_clinical_features(std::span<const std::string> mim_numbers, const OmimConfig& config);

// Reads one OMIM /api/entry JSON reply. Returns nullopt with `reason` set
// when the entry or its clinicalFeatures section is absent.
std::optional<ClinicalDocument> parse_omim_entry(std::string_view body, std::string_view mim_number,
                                                 std::string& reason);

struct ExtractedSigns {
  std::string mim_number;
  std::vector<std::string> signs;
};

// Signs from a {"Signs": [...]} reply: trimmed, whitespace-collapsed,
// deduplicated case-insensitively in first-seen order.
std::optional<std::vector<std::string>> parse_signs_reply(std::string_view raw);

// Retries an unparseable reply up to `attempts` total calls, then throws
// ExtractionError.
ExtractedSigns extract_signs(const ClinicalDocument& doc, ChatBackend& chat, const std::string& model,
                             int attempts = 3);

// Exact matching after case folding and whitespace collapse.
class ExclusionList {
 public:
  ExclusionList() = default;
  explicit ExclusionList(std::span<const std::string> patterns);
  static ExclusionList from_text(std::string_view content);

  bool contains(std::string_view term) const;
  std::size_t size() const noexcept { return keys_.size(); }

 private:
  std::unordered_set<std::string> keys_;
};

struct ExclusionResult {
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
};

ExclusionResult apply_exclusions(std::span<const std::string> signs, const ExclusionList& exclusions);

}  // namespace ontonorm
