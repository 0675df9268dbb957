#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ontonorm/ontology.hpp"
#include "ontonorm/retriever.hpp"

namespace ontonorm {

// Bumped whenever any file under prompts/ changes.
inline constexpr std::string_view kPromptTemplateVersion = "1";

inline constexpr std::size_t kMaxRagCandidates = 50;

// Raw templates as shipped in prompts/*.txt (one trailing newline removed).
std::string_view plain_prompt_template();
std::string_view rag_prompt_template();
std::string_view extraction_prompt_template();
std::string_view judge_prompt_template();

enum class CandidateRendering {
  LabelWithId,  // "Depigmented fundus (HP:nnnnnnn)"
  LabelOnly,
};

std::string build_plain_prompt(std::string_view term);

// Replaces the `[match_1...match_20]` placeholder with a JSON list of the
// candidates in rank order. Requires 1..50 candidates.
std::string build_rag_prompt(std::string_view term, std::span<const Candidate> candidates,
                             CandidateRendering rendering = CandidateRendering::LabelWithId);

// Appends the input object {"clinical Features": text} after the template.
std::string build_extraction_prompt(std::string_view clinical_text);

std::string build_judge_prompt(std::string_view term, std::string_view candidate_surface);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

ChatRequest make_chat_request(std::string model, std::string prompt, double temperature = 0.0);

enum class ChatTask { Link, Judge, Extract };

// Structured view of what a prompt asks. Remote backends ignore it; the mock
// answers from it.
struct ChatContext {
  ChatTask task = ChatTask::Link;
  std::string_view term;
  std::span<const Candidate> candidates;
  std::string_view candidate_surface;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request, const ChatContext& context) = 0;
  virtual std::string id() const = 0;
  virtual std::size_t retries() const { return 0; }
};

struct EndpointConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string token;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_backoff_ms = 30000;
  int timeout_ms = 120000;
};

// POSTs an OpenAI-compatible chat completion and returns the assistant
// message content. Retries are added to *retries when given.
std::string chat_complete(const EndpointConfig& endpoint, const ChatRequest& request,
                          std::atomic<std::size_t>* retries = nullptr);

class HttpChatClient : public ChatBackend {
 public:
  explicit HttpChatClient(EndpointConfig endpoint) : endpoint_(std::move(endpoint)) {}
  std::string complete(const ChatRequest& request, const ChatContext& context) override;
  std::string id() const override { return "http:" + endpoint_.base_url; }
  std::size_t retries() const override { return retries_.load(); }

 private:
  EndpointConfig endpoint_;
  std::atomic<std::size_t> retries_{0};
};

enum class MockPolicyKind { FirstCandidate, HighestCosine, ExactSurfaceElseHighestCosine, FixedTable };

struct MockPolicy {
  MockPolicyKind kind = MockPolicyKind::HighestCosine;
  // FixedTable: raw reply text keyed by term (link), by "term\tcandidate"
  // (judge) or by MIM number (extract). Missing keys produce an
  // unusable reply.
  std::map<std::string, std::string> table;
};

std::optional<MockPolicyKind> parse_mock_policy(std::string_view name);
std::string_view to_string(MockPolicyKind kind);

// Deterministic offline backend. Link replies use the RAG reply format;
// policies other than FixedTable judge equivalence by folded surface
// equality and extract no signs.
class MockChat : public ChatBackend {
 public:
  explicit MockChat(MockPolicy policy) : policy_(std::move(policy)) {}
  std::string complete(const ChatRequest& request, const ChatContext& context) override;
  std::string id() const override { return "mock:" + std::string(to_string(policy_.kind)); }

 private:
  MockPolicy policy_;
};

std::string make_link_reply(std::string_view best_match, std::string_view id);

enum class ParseStatus { Clean, RepairedKeys, InvalidId, Unparseable };

std::string_view to_string(ParseStatus status);

struct LinkReply {
  std::string best_match;
  std::optional<OntoId> id;
  std::string raw_id;
  ParseStatus status = ParseStatus::Unparseable;
  std::string raw_text;
};

// First balanced {...} in the text, skipping braces inside strings.
std::optional<std::string> extract_first_json_object(std::string_view text);

// First JSON object in a model reply, retrying once after repairing curly
// quotes and trailing commas. `repaired` reports whether the retry was used.
std::optional<nlohmann::json> parse_reply_object(std::string_view raw, bool* repaired = nullptr);

// Never throws. Clean means canonical keys ("best_match", "hpo_id") and a
// valid id; any key alias or textual repair yields RepairedKeys.
LinkReply parse_link_reply(std::string_view raw) noexcept;

// Accepts {"equivalent": bool} or a bare yes/no/true/false/equivalent/
// not equivalent answer.
std::optional<bool> parse_judge_reply(std::string_view raw);

}  // namespace ontonorm
