#include "ontonorm/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "ontonorm/error.hpp"
#include "ontonorm/io.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm {
namespace {

using ojson = nlohmann::ordered_json;

constexpr std::pair<ResultFlag, std::string_view> kFlagNames[] = {
    {ResultFlag::ExactMatch, "exact_match"},
    {ResultFlag::InvalidId, "invalid_id"},
    {ResultFlag::NoOutput, "no_output"},
    {ResultFlag::OffList, "off_list"},
};

const Candidate* find_candidate(std::span<const Candidate> cands, const OntoId& id, std::string_view surface) {
  const Candidate* by_id = nullptr;
  const std::string key = fold_key(surface);
  for (const auto& c : cands) {
    if (c.id != id) continue;
    if (fold_key(c.surface) == key) return &c;
    if (!by_id) by_id = &c;
  }
  return by_id;
}

const Candidate& closest_surface(std::span<const Candidate> cands, std::string_view surface) {
  const std::string key = fold_key(surface);
  const Candidate* best = &cands.front();
  double best_sim = -1.0;
  for (const auto& c : cands) {
    double sim = edit_similarity(key, fold_key(c.surface));
    if (sim > best_sim) {
      best_sim = sim;
      best = &c;
    }
  }
  return *best;
}

void apply_reply(NormalizationResult& r, std::string reply_text, const RunConfig& config) {
  LinkReply reply = parse_link_reply(reply_text);
  r.raw_reply = std::move(reply_text);
  r.parse_status = reply.status;

  switch (reply.status) {
    case ParseStatus::Unparseable:
      r.flags.set(ResultFlag::NoOutput);
      return;
    case ParseStatus::InvalidId:
      r.flags.set(ResultFlag::InvalidId);
      r.chosen_surface = reply.best_match;
      break;
    case ParseStatus::Clean:
    case ParseStatus::RepairedKeys:
      r.chosen_surface = reply.best_match;
      r.chosen_id = reply.id;
      break;
  }

  if (r.mode.kind != ModeKind::LlmRag) return;
  if (r.chosen_id) {
    if (const Candidate* c = find_candidate(r.candidates, *r.chosen_id, *r.chosen_surface)) {
      r.cosine_of_choice = c->score;
      return;
    }
    r.flags.set(ResultFlag::OffList);
  }
  if (config.clamp_to_candidates) {
    const Candidate& c = closest_surface(r.candidates, *r.chosen_surface);
    r.chosen_surface = c.surface;
    r.chosen_id = c.id;
    r.cosine_of_choice = c.score;
  }
}

Vector embed_one(EmbeddingProvider& provider, const std::string& term) {
  std::string one[] = {term};
  return embed_batch(provider, one).front();
}

}  // namespace

NormalizationMode NormalizationMode::llm_rag(std::size_t k) {
  if (k < 1 || k > kMaxRagCandidates)
    throw PreconditionError("k must be within 1.." + std::to_string(kMaxRagCandidates) + ", got " +
                            std::to_string(k));
  return {ModeKind::LlmRag, k};
}

std::string_view to_string(ModeKind kind) {
  switch (kind) {
    case ModeKind::EmbedOnly: return "embed";
    case ModeKind::LlmPlain: return "llm";
    case ModeKind::LlmRag: return "rag";
  }
  return "unknown";
}

std::optional<ModeKind> parse_mode(std::string_view name) {
  if (name == "embed") return ModeKind::EmbedOnly;
  if (name == "llm") return ModeKind::LlmPlain;
  if (name == "rag") return ModeKind::LlmRag;
  return std::nullopt;
}

std::vector<std::string> ResultFlags::names() const {
  std::vector<std::string> out;
  for (auto [flag, name] : kFlagNames)
    if (has(flag)) out.emplace_back(name);
  return out;
}

ResultFlags ResultFlags::from_names(std::span<const std::string> names) {
  ResultFlags f;
  for (const auto& n : names) {
    bool known = false;
    for (auto [flag, name] : kFlagNames)
      if (n == name) {
        f.set(flag);
        known = true;
      }
    if (!known) throw ParseError("unknown result flag '" + n + "'", 0);
  }
  return f;
}

void RunConfig::validate(const TermIndex* index) const {
  const bool needs_index = mode.kind != ModeKind::LlmPlain;
  if (needs_index && !index) throw ConfigError(std::string(to_string(mode.kind)) + " mode requires a term index");
  if (needs_index && !provider)
    throw ConfigError(std::string(to_string(mode.kind)) + " mode requires an embedding provider");
  if (mode.kind != ModeKind::EmbedOnly && !chat)
    throw ConfigError(std::string(to_string(mode.kind)) + " mode requires an LLM endpoint or mock");
  if (mode.kind == ModeKind::LlmRag && (mode.k < 1 || mode.k > kMaxRagCandidates))
    throw ConfigError("k must be within 1..50");
  if (exact_match_fast_path && !index) throw ConfigError("exact-match fast path requires a term index");
  if (concurrency == 0) throw ConfigError("concurrency must be at least 1");
}

nlohmann::ordered_json RunConfig::identity() const {
  ojson j;
  j["schema"] = kResultsSchemaVersion;
  j["mode"] = to_string(mode.kind);
  j["k"] = mode.kind == ModeKind::LlmRag ? mode.k : (mode.kind == ModeKind::EmbedOnly ? 1 : 0);
  j["provider"] = provider ? provider->id() : "";
  j["chat"] = chat ? chat->id() : "";
  j["model"] = model;
  j["temperature"] = temperature;
  j["exact_match_fast_path"] = exact_match_fast_path;
  j["dedupe_by_id"] = dedupe_by_id;
  j["clamp_to_candidates"] = clamp_to_candidates;
  j["rendering"] = rendering == CandidateRendering::LabelWithId ? "label_with_id" : "label_only";
  j["prompt_version"] = kPromptTemplateVersion;
  return j;
}

std::string RunConfig::hash() const { return fnv1a_hex(identity().dump()); }

std::string preprocess_term(std::string_view term) { return collapse_whitespace(term); }

NormalizationResult normalize_one(std::string_view raw_term, const RunConfig& config, const TermIndex* index) {
  const std::string term = preprocess_term(raw_term);
  if (term.empty()) throw PreconditionError("term is empty after trimming");

  NormalizationResult r;
  r.input = std::string(raw_term);
  r.mode = config.mode;

  if (config.exact_match_fast_path && index) {
    if (auto hit = index->exact_match(term)) {
      r.chosen_surface = hit->surface;
      r.chosen_id = hit->id;
      r.cosine_of_choice = hit->score;
      r.flags.set(ResultFlag::ExactMatch);
      r.candidates.push_back(std::move(*hit));
      return r;
    }
  }

  const RetrievalOptions ropts{config.dedupe_by_id};
  switch (config.mode.kind) {
    case ModeKind::EmbedOnly: {
      if (!index || !config.provider) throw ConfigError("embed mode requires an index and a provider");
      Vector q = embed_one(*config.provider, term);
      r.candidates = index->top_k(q, 1, ropts);
      const Candidate& best = r.candidates.front();
      r.chosen_surface = best.surface;
      r.chosen_id = best.id;
      r.cosine_of_choice = best.score;
      return r;
    }
    case ModeKind::LlmPlain: {
      if (!config.chat) throw ConfigError("llm mode requires a chat backend");
      ChatContext ctx{ChatTask::Link, term, {}, {}};
      std::string reply =
          config.chat->complete(make_chat_request(config.model, build_plain_prompt(term), config.temperature), ctx);
      apply_reply(r, std::move(reply), config);
      return r;
    }
    case ModeKind::LlmRag: {
      if (!index || !config.provider || !config.chat)
        throw ConfigError("rag mode requires an index, a provider and a chat backend");
      Vector q = embed_one(*config.provider, term);
      r.candidates = index->top_k(q, config.mode.k, ropts);
      ChatContext ctx{ChatTask::Link, term, r.candidates, {}};
      std::string prompt = build_rag_prompt(term, r.candidates, config.rendering);
      std::string reply = config.chat->complete(make_chat_request(config.model, std::move(prompt), config.temperature), ctx);
      apply_reply(r, std::move(reply), config);
      return r;
    }
  }
  return r;
}

nlohmann::ordered_json RunManifest::to_json() const {
  ojson j;
  j["schema"] = kResultsSchemaVersion;
  j["config"] = config;
  j["config_hash"] = config_hash;
  j["provider"] = provider_id;
  j["chat"] = chat_id;
  j["model"] = model;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["n_terms"] = n_terms;
  j["n_errors"] = n_errors;
  j["n_resumed"] = n_resumed;
  j["retries"] = retries;
  return j;
}

nlohmann::ordered_json result_to_json(const NormalizationResult& r, const std::string& config_hash) {
  auto opt_str = [](const std::optional<std::string>& s) { return s ? ojson(*s) : ojson(nullptr); };
  ojson j;
  j["schema"] = kResultsSchemaVersion;
  j["index"] = r.index;
  j["input"] = r.input;
  j["mode"] = to_string(r.mode.kind);
  j["k"] = r.mode.k;
  j["chosen_surface"] = opt_str(r.chosen_surface);
  j["chosen_id"] = r.chosen_id ? ojson(r.chosen_id->str()) : ojson(nullptr);
  j["cosine_of_choice"] = r.cosine_of_choice ? ojson(*r.cosine_of_choice) : ojson(nullptr);
  j["flags"] = r.flags.names();
  ojson cands = ojson::array();
  for (const auto& c : r.candidates)
    cands.push_back({{"rank", c.rank}, {"surface", c.surface}, {"id", c.id.str()}, {"score", c.score}, {"entry", c.entry_index}});
  j["candidates"] = std::move(cands);
  j["parse_status"] = r.parse_status ? ojson(to_string(*r.parse_status)) : ojson(nullptr);
  j["raw_reply"] = opt_str(r.raw_reply);
  j["error"] = opt_str(r.error);
  j["config_hash"] = config_hash;
  return j;
}

NormalizationResult result_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<int>() != kResultsSchemaVersion)
      throw ParseError("unsupported results schema " + j.at("schema").dump(), 0);
    NormalizationResult r;
    r.index = j.at("index").get<std::size_t>();
    r.input = j.at("input").get<std::string>();
    auto mode = parse_mode(j.at("mode").get<std::string>());
    if (!mode) throw ParseError("unknown mode " + j.at("mode").dump(), 0);
    r.mode = {*mode, j.at("k").get<std::size_t>()};
    auto opt_str = [&](const char* key) -> std::optional<std::string> {
      const auto& v = j.at(key);
      if (v.is_null()) return std::nullopt;
      return v.get<std::string>();
    };
    r.chosen_surface = opt_str("chosen_surface");
    if (auto id = opt_str("chosen_id")) r.chosen_id = OntoId::parse(*id);
    if (!j.at("cosine_of_choice").is_null()) r.cosine_of_choice = j.at("cosine_of_choice").get<double>();
    r.flags = ResultFlags::from_names(j.at("flags").get<std::vector<std::string>>());
    for (const auto& c : j.at("candidates"))
      r.candidates.push_back({c.at("surface").get<std::string>(), OntoId::parse(c.at("id").get<std::string>()),
                              c.at("score").get<double>(), c.at("rank").get<std::size_t>(),
                              c.at("entry").get<std::size_t>()});
    if (auto ps = opt_str("parse_status")) {
      for (auto s : {ParseStatus::Clean, ParseStatus::RepairedKeys, ParseStatus::InvalidId, ParseStatus::Unparseable})
        if (to_string(s) == *ps) r.parse_status = s;
      if (!r.parse_status) throw ParseError("unknown parse status '" + *ps + "'", 0);
    }
    r.raw_reply = opt_str("raw_reply");
    r.error = opt_str("error");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed result record: ") + e.what(), 0);
  } catch (const InvalidIdError& e) {
    throw ParseError(std::string("malformed result record: ") + e.what(), 0);
  }
}

std::string serialize_results(std::span<const NormalizationResult> results, const std::string& config_hash) {
  std::string out;
  for (const auto& r : results) {
    out += result_to_json(r, config_hash).dump();
    out += '\n';
  }
  return out;
}

std::vector<NormalizationResult> parse_results(std::string_view jsonl) {
  std::vector<NormalizationResult> out;
  std::size_t line_no = 0;
  for (const auto& line : split(jsonl, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("results line is not JSON", line_no);
    try {
      out.push_back(result_from_json(j));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::vector<NormalizationResult> load_results(const std::filesystem::path& path) {
  return parse_results(read_file(path));
}

std::vector<std::string> parse_terms(std::string_view content) {
  std::string_view body = content;
  if (body.substr(0, 3) == "\xEF\xBB\xBF") body.remove_prefix(3);
  return parse_line_list(body);
}

BatchOutput run_batch(std::span<const std::string> terms, const RunConfig& config, const TermIndex* index,
                      const BatchOptions& options) {
  if (terms.empty()) throw PreconditionError("run_batch needs at least one term");
  config.validate(index);

  BatchOutput out;
  RunManifest& m = out.manifest;
  m.config = config.identity();
  m.config_hash = config.hash();
  m.provider_id = config.provider ? config.provider->id() : "";
  m.chat_id = config.chat ? config.chat->id() : "";
  m.model = config.model;
  m.started_at = utc_timestamp();
  m.n_terms = terms.size();
  const std::size_t retries_before = (config.chat ? config.chat->retries() : 0) +
                                     (config.provider ? config.provider->retries() : 0);

  std::vector<std::optional<NormalizationResult>> slots(terms.size());

  if (options.journal && std::filesystem::exists(*options.journal)) {
    for (const auto& line : split(read_file(*options.journal), '\n')) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || j.value("config_hash", "") != m.config_hash) continue;
      try {
        NormalizationResult r = result_from_json(j);
        if (r.index < terms.size() && r.input == terms[r.index] && !r.error && !slots[r.index]) {
          slots[r.index] = std::move(r);
          ++m.n_resumed;
        }
      } catch (const ParseError&) {
        // torn final line from an interrupted run
      }
    }
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (!slots[i]) pending.push_back(i);

  std::ofstream journal;
  if (options.journal) {
    journal.open(*options.journal, std::ios::app | std::ios::binary);
    if (!journal) throw Error("cannot open journal '" + options.journal->string() + "'");
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr fatal;

  auto worker = [&] {
    while (!abort.load()) {
      std::size_t p = next.fetch_add(1);
      if (p >= pending.size()) return;
      const std::size_t i = pending[p];
      NormalizationResult r;
      try {
        r = normalize_one(terms[i], config, index);
      } catch (const ConfigError&) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        abort = true;
        return;
      } catch (const AuthError&) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        abort = true;
        return;
      } catch (const std::exception& e) {
        r = NormalizationResult{};
        r.input = terms[i];
        r.mode = config.mode;
        r.error = e.what();
      }
      r.index = i;
      std::lock_guard lock(mu);
      if (journal.is_open()) {
        journal << result_to_json(r, m.config_hash).dump() << '\n';
        journal.flush();
      }
      slots[i] = std::move(r);
    }
  };

  const std::size_t n_threads = std::min(config.concurrency, pending.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  out.results.reserve(terms.size());
  for (auto& s : slots) {
    if (s->error) ++m.n_errors;
    out.results.push_back(std::move(*s));
  }
  m.retries = (config.chat ? config.chat->retries() : 0) + (config.provider ? config.provider->retries() : 0) -
              retries_before;
  m.finished_at = utc_timestamp();
  return out;
}

}  // namespace ontonorm
