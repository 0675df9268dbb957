#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <set>

#include "fixtures.hpp"
#include "ontonorm/error.hpp"
#include "ontonorm/io.hpp"
#include "ontonorm/pipeline.hpp"

namespace ontonorm {
namespace {

// Returns canned replies and counts calls.
class ScriptedChat : public ChatBackend {
 public:
  explicit ScriptedChat(std::map<std::string, std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const ChatRequest& req, const ChatContext& ctx) override {
    ++calls;
    {
      std::lock_guard lock(mu_);
      prompts.push_back(req.messages.front().content);
    }
    auto it = replies_.find(std::string(ctx.term));
    if (it == replies_.end()) return "no idea";
    if (it->second == "!auth") throw AuthError("denied", 401);
    if (it->second == "!transport") throw TransportError("flaky", true, 503);
    return it->second;
  }
  std::string id() const override { return "scripted"; }
  std::atomic<int> calls{0};
  std::vector<std::string> prompts;

 private:
  std::mutex mu_;
  std::map<std::string, std::string> replies_;
};

struct Setup {
  std::unique_ptr<TermIndex> index;
  std::shared_ptr<ReplayProvider> provider;
};

// Entries: Alpha(1) [syn "alpha syn"], Beta(2), Gamma(3). Query vectors are
// chosen so "q-beta" ranks Beta, Alpha, ..., and "q-alpha" ranks Alpha first.
Setup setup() {
  auto table = EntryTable::build({{OntoId::parse("HP:0000001"), "Alpha", {"alpha syn"}},
                                  {OntoId::parse("HP:0000002"), "Beta", {}},
                                  {OntoId::parse("HP:0000003"), "Gamma", {}}});
  std::vector<Vector> rows = {{1, 0, 0}, {0.8f, 0.6f, 0}, {0.6f, 0.8f, 0}, {0, 0, 1}};
  Setup s;
  s.index = std::make_unique<TermIndex>(std::move(table), EmbeddingMatrix::from_rows(rows, "t"));
  s.provider = std::make_shared<ReplayProvider>("q");
  s.provider->add("q-beta", {0.5f, 1, 0});
  s.provider->add("q-alpha", {1, 0.1f, 0});
  s.provider->add("alpha", {0, 0, 1});
  return s;
}

RunConfig rag_config(const Setup& s, std::shared_ptr<ChatBackend> chat, std::size_t k = 3) {
  RunConfig c;
  c.mode = NormalizationMode::llm_rag(k);
  c.provider = s.provider;
  c.chat = std::move(chat);
  c.model = "m";
  return c;
}

TEST(Mode, KBounds) {
  EXPECT_THROW(NormalizationMode::llm_rag(0), PreconditionError);
  EXPECT_THROW(NormalizationMode::llm_rag(51), PreconditionError);
  EXPECT_EQ(NormalizationMode::llm_rag(50).k, 50u);
  EXPECT_EQ(NormalizationMode::llm_rag().k, 20u);
  EXPECT_EQ(parse_mode("rag"), ModeKind::LlmRag);
  EXPECT_FALSE(parse_mode("RAG"));
}

TEST(NormalizeOne, EmbedOnlyTakesArgmax) {
  auto s = setup();
  RunConfig c;
  c.provider = s.provider;
  auto r = normalize_one("  q-beta ", c, s.index.get());
  EXPECT_EQ(r.input, "  q-beta ");
  EXPECT_EQ(r.chosen_id->str(), "HP:0000002");
  EXPECT_EQ(r.candidates.size(), 1u);
  EXPECT_DOUBLE_EQ(*r.cosine_of_choice, r.candidates[0].score);
  EXPECT_TRUE(r.flags.empty());
  EXPECT_FALSE(r.parse_status);
}

TEST(NormalizeOne, RagOnListChoice) {
  auto s = setup();
  auto chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{
      {"q-beta", R"({"best_match": "Alpha", "hpo_id": "HP:0000001"})"}});
  auto r = normalize_one("q-beta", rag_config(s, chat), s.index.get());
  EXPECT_EQ(r.chosen_id->str(), "HP:0000001");
  EXPECT_EQ(r.parse_status, ParseStatus::Clean);
  EXPECT_TRUE(r.flags.empty());
  ASSERT_EQ(r.candidates.size(), 3u);
  EXPECT_EQ(r.candidates[0].surface, "Beta");
  const auto alpha = std::find_if(r.candidates.begin(), r.candidates.end(), [](auto& c) { return c.surface == "Alpha"; });
  EXPECT_DOUBLE_EQ(*r.cosine_of_choice, alpha->score);
  EXPECT_NE(chat->prompts.at(0).find("\"Beta (HP:0000002)\""), std::string::npos);
}

TEST(NormalizeOne, OffListFlaggedAndKeptUnlessClamped) {
  auto s = setup();
  auto chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{
      {"q-beta", R"({"best_match": "Gama", "hpo_id": "HP:0000009"})"}});
  auto cfg = rag_config(s, chat, 2);
  auto r = normalize_one("q-beta", cfg, s.index.get());
  EXPECT_TRUE(r.flags.has(ResultFlag::OffList));
  EXPECT_EQ(r.chosen_id->str(), "HP:0000009");
  EXPECT_FALSE(r.cosine_of_choice);

  cfg = rag_config(s, chat, 4);
  cfg.clamp_to_candidates = true;
  auto c = normalize_one("q-beta", cfg, s.index.get());
  EXPECT_TRUE(c.flags.has(ResultFlag::OffList));
  EXPECT_EQ(c.chosen_surface, "Gamma");
  EXPECT_EQ(c.chosen_id->str(), "HP:0000003");
  EXPECT_TRUE(c.cosine_of_choice);
}

TEST(NormalizeOne, InvalidIdAndNoOutput) {
  auto s = setup();
  auto chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{
      {"q-beta", R"({"best_match": "Beta", "hpo_id": "HP-2"})"}});
  auto r = normalize_one("q-beta", rag_config(s, chat), s.index.get());
  EXPECT_TRUE(r.flags.has(ResultFlag::InvalidId));
  EXPECT_FALSE(r.chosen_id);
  EXPECT_EQ(r.chosen_surface, "Beta");
  EXPECT_EQ(r.parse_status, ParseStatus::InvalidId);

  auto n = normalize_one("q-alpha", rag_config(s, chat), s.index.get());
  EXPECT_TRUE(n.flags.has(ResultFlag::NoOutput));
  EXPECT_FALSE(n.chosen_surface);
  EXPECT_EQ(n.raw_reply, "no idea");
}

TEST(NormalizeOne, PlainModeNeedsNoIndexAndNeverOffList) {
  auto chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{
      {"pale fundi", R"({"best_match": "Depigmented fundus", "HPO ID": "HP:0007894"})"}});
  RunConfig c;
  c.mode = NormalizationMode::llm_plain();
  c.chat = chat;
  c.model = "m";
  c.validate(nullptr);
  auto r = normalize_one("pale   fundi", c, nullptr);
  EXPECT_EQ(r.chosen_id->str(), "HP:0007894");
  EXPECT_EQ(r.parse_status, ParseStatus::RepairedKeys);
  EXPECT_TRUE(r.flags.empty());
  EXPECT_TRUE(r.candidates.empty());
  EXPECT_NE(chat->prompts.at(0).find("\"Term: pale fundi\""), std::string::npos);
}

TEST(NormalizeOne, ExactMatchFastPath) {
  auto s = setup();
  auto chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{});
  auto cfg = rag_config(s, chat);
  cfg.exact_match_fast_path = true;
  auto r = normalize_one("ALPHA  SYN", cfg, s.index.get());
  EXPECT_TRUE(r.flags.has(ResultFlag::ExactMatch));
  EXPECT_EQ(r.chosen_id->str(), "HP:0000001");
  EXPECT_EQ(r.chosen_surface, "alpha syn");
  EXPECT_EQ(chat->calls.load(), 0);

  cfg.exact_match_fast_path = false;
  auto slow = normalize_one("alpha", cfg, s.index.get());
  EXPECT_FALSE(slow.flags.has(ResultFlag::ExactMatch));
  EXPECT_EQ(chat->calls.load(), 1);
}

TEST(NormalizeOne, EmptyTermRejected) {
  auto s = setup();
  RunConfig c;
  c.provider = s.provider;
  EXPECT_THROW(normalize_one("   ", c, s.index.get()), PreconditionError);
}

TEST(RunConfig, ValidateNamesMissingDependency) {
  auto s = setup();
  RunConfig c;
  EXPECT_THROW(c.validate(s.index.get()), ConfigError);  // no provider
  c.provider = s.provider;
  EXPECT_THROW(c.validate(nullptr), ConfigError);
  c.validate(s.index.get());
  c.mode = NormalizationMode::llm_rag(5);
  EXPECT_THROW(c.validate(s.index.get()), ConfigError);
  c.chat = std::make_shared<MockChat>(MockPolicy{});
  c.concurrency = 0;
  EXPECT_THROW(c.validate(s.index.get()), ConfigError);
}

TEST(RunConfig, HashIgnoresConcurrencyOnly) {
  auto s = setup();
  auto chat = std::make_shared<MockChat>(MockPolicy{});
  auto a = rag_config(s, chat);
  auto b = a;
  b.concurrency = 16;
  EXPECT_EQ(a.hash(), b.hash());
  b.mode = NormalizationMode::llm_rag(2);
  EXPECT_NE(a.hash(), b.hash());
  b = a;
  b.dedupe_by_id = true;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Results, JsonRoundTrip) {
  auto s = setup();
  auto chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{
      {"q-beta", R"({"best_match": "Gamma", "hpo_id": "HP:0000003"})"},
      {"q-alpha", R"({"best_match": "Zeta", "hpo_id": "HP:0000042"})"}});
  auto cfg = rag_config(s, chat);
  std::vector<std::string> terms = {"q-beta", "q-alpha", "alpha", "missing"};
  auto out = run_batch(terms, cfg, s.index.get());
  ASSERT_EQ(out.results.size(), 4u);
  EXPECT_TRUE(out.results[3].error);
  EXPECT_EQ(out.manifest.n_errors, 1u);
  std::string text = serialize_results(out.results, out.manifest.config_hash);
  auto back = parse_results(text);
  ASSERT_EQ(back.size(), out.results.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], out.results[i]) << i;
  EXPECT_EQ(serialize_results(back, out.manifest.config_hash), text);
  EXPECT_THROW(parse_results("{\"schema\": 99}\n"), ParseError);
  EXPECT_THROW(parse_results("not json\n"), ParseError);
}

TEST(RunBatch, OrderedOutputAndPerTermErrors) {
  auto c = testing::make_corpus(40, 120, 16, 5);
  c.terms.push_back("not embedded");
  auto chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{{c.terms[7], "!transport"}});
  RunConfig cfg;
  cfg.mode = NormalizationMode::llm_rag(5);
  cfg.provider = c.queries;
  cfg.chat = chat;
  cfg.model = "m";
  cfg.concurrency = 6;
  auto out = run_batch(c.terms, cfg, c.index.get());
  ASSERT_EQ(out.results.size(), c.terms.size());
  for (std::size_t i = 0; i < c.terms.size(); ++i) {
    EXPECT_EQ(out.results[i].index, i);
    EXPECT_EQ(out.results[i].input, c.terms[i]);
  }
  EXPECT_TRUE(out.results[7].error);
  EXPECT_TRUE(out.results.back().error);
  EXPECT_EQ(out.manifest.n_errors, 2u);
  EXPECT_EQ(out.manifest.n_terms, c.terms.size());
}

TEST(RunBatch, AuthErrorAbortsBatch) {
  auto s = setup();
  auto chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{{"q-beta", "!auth"}});
  std::vector<std::string> terms = {"q-alpha", "q-beta"};
  EXPECT_THROW(run_batch(terms, rag_config(s, chat), s.index.get()), AuthError);
}

TEST(RunBatch, ResumesFromJournal) {
  auto c = testing::make_corpus(30, 50, 8, 9);
  testing::TempDir dir;
  auto journal = dir / "run.journal";
  RunConfig cfg;
  cfg.mode = NormalizationMode::llm_rag(4);
  cfg.provider = c.queries;
  cfg.model = "m";
  cfg.concurrency = 3;
  auto first_chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{});
  cfg.chat = first_chat;

  std::vector<std::string> head(c.terms.begin(), c.terms.begin() + 20);
  run_batch(head, cfg, c.index.get(), {journal});
  EXPECT_EQ(first_chat->calls.load(), 20);

  auto second_chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{});
  // Same id and settings, so the config hash matches.
  cfg.chat = second_chat;
  auto resumed = run_batch(c.terms, cfg, c.index.get(), {journal});
  EXPECT_EQ(resumed.manifest.n_resumed, 20u);
  EXPECT_EQ(second_chat->calls.load(), 30);

  auto fresh = run_batch(c.terms, cfg, c.index.get());
  EXPECT_EQ(serialize_results(resumed.results, "h"), serialize_results(fresh.results, "h"));

  // A different configuration ignores the journal.
  cfg.mode = NormalizationMode::llm_rag(2);
  auto other_chat = std::make_shared<ScriptedChat>(std::map<std::string, std::string>{});
  cfg.chat = other_chat;
  auto changed = run_batch(c.terms, cfg, c.index.get(), {journal});
  EXPECT_EQ(changed.manifest.n_resumed, 0u);
  EXPECT_EQ(other_chat->calls.load(), 50);
}

TEST(RunBatch, TornJournalLineIgnored) {
  auto s = setup();
  testing::TempDir dir;
  auto journal = dir / "j";
  RunConfig c;
  c.provider = s.provider;
  std::vector<std::string> terms = {"q-beta", "q-alpha"};
  run_batch(terms, c, s.index.get(), {journal});
  std::string content = read_file(journal);
  write_file_atomic(journal, content.substr(0, content.size() - 10));
  auto again = run_batch(terms, c, s.index.get(), {journal});
  EXPECT_EQ(again.manifest.n_resumed, 1u);
}

TEST(RunBatch, ConcurrencyDoesNotChangeResults) {
  auto c = testing::make_corpus(50, 200, 16, 77);
  RunConfig cfg;
  cfg.mode = NormalizationMode::llm_rag(10);
  cfg.provider = c.queries;
  cfg.chat = std::make_shared<MockChat>(MockPolicy{MockPolicyKind::ExactSurfaceElseHighestCosine, {}});
  cfg.model = "m";
  std::set<std::string> outputs;
  for (std::size_t n : {1u, 2u, 7u, 16u}) {
    cfg.concurrency = n;
    auto out = run_batch(c.terms, cfg, c.index.get());
    outputs.insert(serialize_results(out.results, out.manifest.config_hash));
  }
  EXPECT_EQ(outputs.size(), 1u);
}

TEST(Terms, ParseStripsBomAndComments) {
  EXPECT_EQ(parse_terms("\xEF\xBB\xBFpale fundi\n# note\n\n  ataxia \n"),
            (std::vector<std::string>{"pale fundi", "ataxia"}));
}

}  // namespace
}  // namespace ontonorm
