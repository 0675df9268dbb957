#include "ontonorm/llm_client.hpp"

#include <algorithm>
#include <cctype>
#include <nlohmann/json.hpp>
#include <regex>

#include "http_util.hpp"
#include "ontonorm/error.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm {
namespace detail {
extern const std::string_view kPlainPromptFile;
extern const std::string_view kRagPromptFile;
extern const std::string_view kExtractPromptFile;
extern const std::string_view kJudgePromptFile;
}  // namespace detail

namespace {

using nlohmann::json;

constexpr std::string_view kTermSlot = "{term}";
constexpr std::string_view kCandidateSlot = "{candidate}";
constexpr std::string_view kMatchesSlot = "[match_1...match_20]";

std::string_view strip_final_newline(std::string_view s) {
  if (!s.empty() && s.back() == '\n') s.remove_suffix(1);
  return s;
}

std::string fill_slot(std::string_view tmpl, std::string_view slot, std::string_view value) {
  auto pos = tmpl.find(slot);
  if (pos == std::string_view::npos) throw Error("prompt template lacks slot " + std::string(slot));
  std::string out;
  out.reserve(tmpl.size() + value.size());
  out.append(tmpl.substr(0, pos));
  out.append(value);
  out.append(tmpl.substr(pos + slot.size()));
  return out;
}

std::string require_text(std::string_view s, const char* what) {
  std::string t = trim(s);
  if (t.empty()) throw PreconditionError(std::string(what) + " must be non-empty");
  return t;
}

std::string key_shape(std::string_view key) {
  std::string k;
  for (char c : key) {
    char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    k.push_back(l == '_' || l == '-' ? ' ' : l);
  }
  return collapse_whitespace(k);
}

std::string value_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

// Curly quotes, as printed in published prompt examples, and trailing commas.
std::string repair_json_text(std::string s) {
  static const std::pair<std::string_view, std::string_view> kQuotes[] = {
      {"\xE2\x80\x9C", "\""}, {"\xE2\x80\x9D", "\""}, {"\xE2\x80\x98", "'"}, {"\xE2\x80\x99", "'"}};
  for (auto [from, to] : kQuotes) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
      s.replace(pos, from.size(), to);
  }
  s = std::regex_replace(s, std::regex(R"(,\s*([}\]]))"), "$1");
  return s;
}

std::optional<json> parse_object(std::string_view raw, bool& repaired) {
  repaired = false;
  if (auto obj = extract_first_json_object(raw)) {
    json j = json::parse(*obj, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  std::string fixed = repair_json_text(std::string(raw));
  if (auto obj = extract_first_json_object(fixed)) {
    json j = json::parse(*obj, nullptr, false);
    if (!j.is_discarded() && j.is_object()) {
      repaired = true;
      return j;
    }
  }
  return std::nullopt;
}

// Canonical key first, then its case/underscore variants, then aliases in
// order. `exact` reports whether the
// canonical spelling was used.
const json* find_key(const json& obj, std::string_view canonical, std::initializer_list<std::string_view> shapes,
                     bool& exact) {
  exact = false;
  if (auto it = obj.find(std::string(canonical)); it != obj.end()) {
    exact = true;
    return &*it;
  }
  const std::string own = key_shape(canonical);
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (key_shape(it.key()) == own) return &*it;
  for (std::string_view shape : shapes)
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (key_shape(it.key()) == shape) return &*it;
  return nullptr;
}

}  // namespace

std::string_view plain_prompt_template() { return strip_final_newline(detail::kPlainPromptFile); }
std::string_view rag_prompt_template() { return strip_final_newline(detail::kRagPromptFile); }
std::string_view extraction_prompt_template() { return strip_final_newline(detail::kExtractPromptFile); }
std::string_view judge_prompt_template() { return strip_final_newline(detail::kJudgePromptFile); }

std::string build_plain_prompt(std::string_view term) {
  return fill_slot(plain_prompt_template(), kTermSlot, require_text(term, "term"));
}

std::string build_rag_prompt(std::string_view term, std::span<const Candidate> candidates,
                             CandidateRendering rendering) {
  std::string t = require_text(term, "term");
  if (candidates.empty()) throw PreconditionError("RAG prompt needs at least one candidate");
  if (candidates.size() > kMaxRagCandidates)
    throw PreconditionError("RAG prompt accepts at most " + std::to_string(kMaxRagCandidates) + " candidates, got " +
                            std::to_string(candidates.size()));
  std::string list = "[";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i) list += ", ";
    std::string item = candidates[i].surface;
    if (rendering == CandidateRendering::LabelWithId) item += " (" + candidates[i].id.str() + ")";
    list += json(item).dump();
  }
  list += "]";
  return fill_slot(fill_slot(rag_prompt_template(), kTermSlot, t), kMatchesSlot, list);
}

std::string build_extraction_prompt(std::string_view clinical_text) {
  std::string t = require_text(clinical_text, "clinical text");
  json input = {{"clinical Features", t}};
  std::string out(extraction_prompt_template());
  out += "\n";
  out += input.dump();
  return out;
}

std::string build_judge_prompt(std::string_view term, std::string_view candidate_surface) {
  return fill_slot(fill_slot(judge_prompt_template(), kTermSlot, require_text(term, "term")), kCandidateSlot,
              require_text(candidate_surface, "candidate"));
}

ChatRequest make_chat_request(std::string model, std::string prompt, double temperature) {
  ChatRequest r;
  r.model = std::move(model);
  r.messages.push_back({"user", std::move(prompt)});
  r.temperature = temperature;
  return r;
}

std::string chat_complete(const EndpointConfig& endpoint, const ChatRequest& request,
                          std::atomic<std::size_t>* retries) {
  if (request.messages.size() != 1 || request.messages.front().role != "user")
    throw PreconditionError("chat request must carry exactly one user message");
  if (endpoint.base_url.empty()) throw ConfigError("LLM base URL is not configured");
  if (request.model.empty()) throw ConfigError("LLM model name is not configured");

  json body = {{"model", request.model},
               {"messages", json::array({{{"role", "user"}, {"content", request.messages.front().content}}})},
               {"temperature", request.temperature}};
  detail::HttpCall call;
  call.base_url = endpoint.base_url;
  call.path = endpoint.path;
  call.body = body.dump();
  if (!endpoint.token.empty()) call.headers.emplace_back("Authorization", "Bearer " + endpoint.token);
  detail::RetryPolicy policy;
  policy.max_retries = endpoint.max_retries;
  policy.backoff_base_ms = endpoint.backoff_base_ms;
  policy.max_backoff_ms = endpoint.max_backoff_ms;
  policy.timeout_ms = endpoint.timeout_ms;

  auto reply = detail::send_with_retry(call, policy, retries);
  json j = json::parse(reply.body, nullptr, false);
  if (j.is_discarded()) throw TransportError("chat reply is not JSON", false, reply.status);
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception&) {
    throw TransportError("chat reply lacks choices[0].message.content", false, reply.status);
  }
}

std::string HttpChatClient::complete(const ChatRequest& request, const ChatContext&) {
  return chat_complete(endpoint_, request, &retries_);
}

std::optional<MockPolicyKind> parse_mock_policy(std::string_view name) {
  if (name == "first-candidate") return MockPolicyKind::FirstCandidate;
  if (name == "highest-cosine") return MockPolicyKind::HighestCosine;
  if (name == "exact-surface") return MockPolicyKind::ExactSurfaceElseHighestCosine;
  if (name == "fixed-table") return MockPolicyKind::FixedTable;
  return std::nullopt;
}

std::string_view to_string(MockPolicyKind kind) {
  switch (kind) {
    case MockPolicyKind::FirstCandidate: return "first-candidate";
    case MockPolicyKind::HighestCosine: return "highest-cosine";
    case MockPolicyKind::ExactSurfaceElseHighestCosine: return "exact-surface";
    case MockPolicyKind::FixedTable: return "fixed-table";
  }
  return "unknown";
}

std::string make_link_reply(std::string_view best_match, std::string_view id) {
  json j = {{"best_match", std::string(best_match)}, {"hpo_id", std::string(id)}};
  return j.dump();
}

std::string MockChat::complete(const ChatRequest&, const ChatContext& ctx) {
  const bool table = policy_.kind == MockPolicyKind::FixedTable;
  switch (ctx.task) {
    case ChatTask::Judge: {
      if (table) {
        auto it = policy_.table.find(std::string(ctx.term) + "\t" + std::string(ctx.candidate_surface));
        return it == policy_.table.end() ? std::string() : it->second;
      }
      bool same = fold_key(ctx.term) == fold_key(ctx.candidate_surface);
      return json{{"equivalent", same}}.dump();
    }
    case ChatTask::Extract: {
      if (table) {
        auto it = policy_.table.find(std::string(ctx.term));
        return it == policy_.table.end() ? std::string() : it->second;
      }
      return R"({"Signs": []})";
    }
    case ChatTask::Link: break;
  }

  if (table) {
    auto it = policy_.table.find(std::string(ctx.term));
    return it == policy_.table.end() ? std::string("I am unable to normalize this term.") : it->second;
  }
  if (ctx.candidates.empty()) return "{}";

  const Candidate* pick = nullptr;
  auto highest = [&] {
    const Candidate* best = &ctx.candidates.front();
    for (const auto& c : ctx.candidates)
      if (c.score > best->score || (c.score == best->score && c.rank < best->rank)) best = &c;
    return best;
  };
  switch (policy_.kind) {
    case MockPolicyKind::FirstCandidate: pick = &ctx.candidates.front(); break;
    case MockPolicyKind::HighestCosine: pick = highest(); break;
    case MockPolicyKind::ExactSurfaceElseHighestCosine: {
      const std::string key = fold_key(ctx.term);
      for (const auto& c : ctx.candidates)
        if (fold_key(c.surface) == key) {
          pick = &c;
          break;
        }
      if (!pick) pick = highest();
      break;
    }
    case MockPolicyKind::FixedTable: break;
  }
  return make_link_reply(pick->surface, pick->id.str());
}

std::string_view to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::Clean: return "clean";
    case ParseStatus::RepairedKeys: return "repaired_keys";
    case ParseStatus::InvalidId: return "invalid_id";
    case ParseStatus::Unparseable: return "unparseable";
  }
  return "unknown";
}

std::optional<std::string> extract_first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) return std::string(text.substr(start, i - start + 1));
    }
  }
  return std::nullopt;
}

std::optional<nlohmann::json> parse_reply_object(std::string_view raw, bool* repaired) {
  bool r = false;
  auto obj = parse_object(raw, r);
  if (repaired) *repaired = r;
  return obj;
}

LinkReply parse_link_reply(std::string_view raw) noexcept {
  LinkReply out;
  try {
    out.raw_text = std::string(raw);
    bool repaired = false;
    auto obj = parse_object(raw, repaired);
    if (!obj) return out;

    bool match_exact = false;
    bool id_exact = false;
    const json* match = find_key(*obj, "best_match", {"best match", "term"}, match_exact);
    const json* id = find_key(*obj, "hpo_id", {"hpo id", "id"}, id_exact);
    if (!match || !id) return out;

    out.best_match = trim(value_text(*match));
    out.raw_id = trim(value_text(*id));
    if (out.best_match.empty()) return out;

    out.id = OntoId::try_parse(out.raw_id);
    if (!out.id) out.status = ParseStatus::InvalidId;
    else if (match_exact && id_exact && !repaired) out.status = ParseStatus::Clean;
    else out.status = ParseStatus::RepairedKeys;
  } catch (...) {
    out.id.reset();
    out.status = ParseStatus::Unparseable;
  }
  return out;
}

std::optional<bool> parse_judge_reply(std::string_view raw) {
  auto word = [](std::string s) -> std::optional<bool> {
    std::string k = key_shape(s);
    while (!k.empty() && (k.back() == '.' || k.back() == '!')) k.pop_back();
    if (k == "yes" || k == "true" || k == "equivalent" || k == "1") return true;
    if (k == "no" || k == "false" || k == "not equivalent" || k == "non equivalent" || k == "0") return false;
    return std::nullopt;
  };
  bool repaired = false;
  if (auto obj = parse_object(raw, repaired)) {
    bool exact = false;
    const json* v = find_key(*obj, "equivalent", {"is equivalent", "equivalence", "judgment", "answer"}, exact);
    if (!v) return std::nullopt;
    if (v->is_boolean()) return v->get<bool>();
    if (v->is_string()) return word(v->get<std::string>());
    return std::nullopt;
  }
  return word(trim(raw));
}

}  // namespace ontonorm
