#include "ontonorm/ingest.hpp"

#include <algorithm>

#include "http_util.hpp"
#include "ontonorm/error.hpp"
#include "ontonorm/io.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm {
namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::filesystem::path cache_path(const OmimConfig& config, const std::string& mim) {
  return config.cache_dir / (mim + ".json");
}

}  // namespace

bool is_mim_number(std::string_view s) {
  return s.size() == 6 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

nlohmann::ordered_json document_to_json(const ClinicalDocument& doc) {
  return ojson{{"mim_number", doc.mim_number},
               {"title", doc.title},
               {"clinical_features_text", doc.clinical_features_text},
               {"fetched_at", doc.fetched_at}};
}

ClinicalDocument document_from_json(const nlohmann::json& j) {
  try {
    ClinicalDocument d{j.at("mim_number").get<std::string>(), j.value("title", ""),
                       j.at("clinical_features_text").get<std::string>(), j.value("fetched_at", "")};
    if (!is_mim_number(d.mim_number)) throw ParseError("MIM number must be six digits: '" + d.mim_number + "'", 0);
    return d;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed clinical document: ") + e.what(), 0);
  }
}

std::vector<ClinicalDocument> parse_documents(std::string_view jsonl) {
  std::vector<ClinicalDocument> out;
  std::size_t line_no = 0;
  for (const auto& line : split(jsonl, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("document line is not JSON", line_no);
    try {
      out.push_back(document_from_json(j));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::string serialize_documents(std::span<const ClinicalDocument> docs) {
  std::string out;
  for (const auto& d : docs) out += document_to_json(d).dump() + "\n";
  return out;
}

std::optional<ClinicalDocument> parse_omim_entry(std::string_view body, std::string_view mim_number,
                                                 std::string& reason) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("OMIM reply is not JSON", false);
  const json* entry = nullptr;
  try {
    const auto& list = j.at("omim").at("entryList");
    if (list.empty()) {
      reason = "no entry";
      return std::nullopt;
    }
    entry = &list.at(0).at("entry");
  } catch (const json::exception&) {
    throw TransportError("OMIM reply lacks omim.entryList", false);
  }

  ClinicalDocument doc;
  doc.mim_number = std::string(mim_number);
  if (entry->contains("titles")) doc.title = entry->at("titles").value("preferredTitle", "");
  if (entry->contains("textSectionList")) {
    for (const auto& item : entry->at("textSectionList")) {
      const json& section = item.contains("textSection") ? item.at("textSection") : item;
      if (section.value("textSectionName", "") == "clinicalFeatures") {
        doc.clinical_features_text = section.value("textSectionContent", "");
        break;
      }
    }
  }
  if (trim(doc.clinical_features_text).empty()) {
    reason = "no clinicalFeatures section";
    return std::nullopt;
  }
  doc.fetched_at = utc_timestamp();
  return doc;
}

FetchOutcome fetch_clinical_features(std::span<const std::string> mim_numbers, const OmimConfig& config) {
  for (const auto& m : mim_numbers)
    if (!is_mim_number(m)) throw PreconditionError("MIM number must be six digits: '" + m + "'");
  if (config.cache_dir.empty()) throw ConfigError("OMIM fetch requires a cache directory");
  std::filesystem::create_directories(config.cache_dir);

  FetchOutcome out;
  for (const auto& mim : mim_numbers) {
    const auto path = cache_path(config, mim);
    if (std::filesystem::exists(path)) {
      auto j = json::parse(read_file(path), nullptr, false);
      if (!j.is_discarded() && j.is_object()) {
        if (j.contains("skip")) out.skipped.push_back({mim, j.at("skip").get<std::string>()});
        else out.documents.push_back(document_from_json(j));
        continue;
      }
    }

    if (config.api_key.empty())
      throw AuthError(std::string(kOmimKeyEnv) + " is not set; an OMIM API key is required to fetch " + mim, 0);
    detail::HttpCall call;
    call.base_url = config.base_url;
    call.path = "/api/entry?mimNumber=" + mim + "&include=text:clinicalFeatures&format=json";
    call.headers.emplace_back("ApiKey", config.api_key);
    detail::RetryPolicy policy;
    policy.max_retries = config.max_retries;
    policy.backoff_base_ms = config.backoff_base_ms;
    policy.timeout_ms = config.timeout_ms;
    policy.retry_rate_limited = false;

    detail::HttpReply reply;
    ++out.network_calls;
    try {
      reply = detail::send_with_retry(call, policy);
    } catch (const AuthError& e) {
      throw AuthError(std::string("OMIM rejected the key in ") + std::string(kOmimKeyEnv) + ": " + e.what(),
                      e.status());
    } catch (const TransportError& e) {
      if (e.status() == 409) throw QuotaError(std::string("OMIM quota exhausted: ") + e.what(), 409);
      throw;
    }

    std::string reason;
    if (auto doc = parse_omim_entry(reply.body, mim, reason)) {
      write_file_atomic(path, document_to_json(*doc).dump(2) + "\n");
      out.documents.push_back(std::move(*doc));
    } else {
      write_file_atomic(path, ojson{{"mim_number", mim}, {"skip", reason}}.dump(2) + "\n");
      out.skipped.push_back({mim, reason});
    }
  }
  return out;
}

std::optional<std::vector<std::string>> parse_signs_reply(std::string_view raw) {
  auto obj = parse_reply_object(raw);
  if (!obj) return std::nullopt;
  const json* arr = nullptr;
  for (auto it = obj->begin(); it != obj->end(); ++it)
    if (case_fold(trim(it.key())) == "signs") {
      arr = &*it;
      break;
    }
  if (!arr || !arr->is_array()) return std::nullopt;

  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& v : *arr) {
    if (!v.is_string()) continue;
    std::string s = collapse_whitespace(v.get<std::string>());
    if (s.empty() || !seen.insert(case_fold(s)).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

ExtractedSigns extract_signs(const ClinicalDocument& doc, ChatBackend& chat, const std::string& model,
                             int attempts) {
  const std::string prompt = build_extraction_prompt(doc.clinical_features_text);
  ChatContext ctx{ChatTask::Extract, doc.mim_number, {}, {}};
  std::string last;
  for (int a = 0; a < std::max(1, attempts); ++a) {
    last = chat.complete(make_chat_request(model, prompt), ctx);
    if (auto signs = parse_signs_reply(last)) return {doc.mim_number, std::move(*signs)};
  }
  throw ExtractionError("unparseable sign extraction reply for MIM " + doc.mim_number + ": '" +
                        last.substr(0, 200) + "'");
}

ExclusionList::ExclusionList(std::span<const std::string> patterns) {
  for (const auto& p : patterns) {
    std::string k = fold_key(p);
    if (!k.empty()) keys_.insert(std::move(k));
  }
}

ExclusionList ExclusionList::from_text(std::string_view content) {
  auto lines = parse_line_list(content);
  return ExclusionList(lines);
}

bool ExclusionList::contains(std::string_view term) const { return keys_.count(fold_key(term)) > 0; }

ExclusionResult apply_exclusions(std::span<const std::string> signs, const ExclusionList& exclusions) {
  ExclusionResult out;
  for (const auto& s : signs) (exclusions.contains(s) ? out.dropped : out.kept).push_back(s);
  return out;
}

}  // namespace ontonorm
