#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ontonorm/embed_store.hpp"
#include "ontonorm/error.hpp"
#include "ontonorm/eval.hpp"
#include "ontonorm/ingest.hpp"
#include "ontonorm/io.hpp"
#include "ontonorm/llm_client.hpp"
#include "ontonorm/ontology.hpp"
#include "ontonorm/pipeline.hpp"
#include "ontonorm/retriever.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kLlmTokenEnv = "ONTONORM_LLM_TOKEN";
constexpr const char* kEmbedUrlEnv = "ONTONORM_EMBED_URL";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  std::string config;

  std::string ontology;
  std::string embeddings;
  std::string index;
  bool exclude_obsolete = false;
  std::string synonym_delimiter = "|";

  std::string terms;
  std::string gold;
  std::string query_embeddings;
  std::string embed_url;
  std::string embed_model;

  std::string mode = "embed";
  std::size_t k = kDefaultRagK;
  std::string ks = "1,5,10,20,50";
  std::string model;
  std::string base_url;
  std::string mock;
  std::string mock_table;
  double temperature = 0.0;
  std::size_t concurrency = 4;
  bool paper_faithful = false;
  bool dedupe_by_id = false;
  bool clamp_to_candidates = false;
  bool labels_only = false;
  bool fresh = false;

  std::vector<std::string> results;
  std::string judge = "reference";
  double threshold = 0.90;
  std::string verdicts;
  bool malformed_as_tn = false;
  std::string rag_results;
  std::string embed_results;
  std::string sheet;

  std::string mim_list;
  std::string cache_dir;
  std::string docs;
  std::string exclusions;
  std::string dropped_out;

  std::string out;
};

struct Command {
  CLI::App* app = nullptr;
  std::function<int(Settings&, std::ostream&, std::ostream&)> run;
};

struct Parser {
  std::unique_ptr<CLI::App> app;
  std::map<std::string, Command, std::less<>> commands;
};

// ---------------------------------------------------------------------------
// Flag groups

void add_index_flags(CLI::App* sub, Settings& s) {
  sub->add_option("--index", s.index, "Index directory written by build-index");
  sub->add_option("--ontology", s.ontology, "BioPortal HPO class CSV (alternative to --index)");
  sub->add_option("--embeddings", s.embeddings, "Entry embedding CSV aligned with --ontology");
  sub->add_flag("--exclude-obsolete", s.exclude_obsolete, "Drop obsolete classes when reading --ontology");
}

void add_provider_flags(CLI::App* sub, Settings& s) {
  sub->add_option("--query-embeddings", s.query_embeddings,
                  "Replay CSV of precomputed vectors (header text,v0,... or surface,id,v0,...)");
  sub->add_option("--embed-url", s.embed_url, "Embedding server base URL (env ONTONORM_EMBED_URL)");
  sub->add_option("--embed-model", s.embed_model, "Model name sent to the embedding server");
}

void add_chat_flags(CLI::App* sub, Settings& s) {
  sub->add_option("--model", s.model, "Chat model name for the remote endpoint");
  sub->add_option("--base-url", s.base_url,
                  "OpenAI-compatible endpoint base URL (token from env ONTONORM_LLM_TOKEN)");
  sub->add_option("--mock", s.mock, "Offline mock policy instead of a remote model")
      ->check(CLI::IsMember({"first-candidate", "highest-cosine", "exact-surface", "fixed-table"}));
  sub->add_option("--mock-table", s.mock_table, "JSON object of canned replies for --mock fixed-table");
  sub->add_option("--temperature", s.temperature, "Sampling temperature")->check(CLI::Range(0.0, 2.0));
}

void add_run_flags(CLI::App* sub, Settings& s) {
  sub->add_option("--concurrency", s.concurrency, "Terms processed in parallel")->check(CLI::Range(1, 256));
  sub->add_flag("--paper-faithful", s.paper_faithful,
                "Disable the exact-match fast path, id dedupe and clamping");
  sub->add_flag("--dedupe-by-id", s.dedupe_by_id, "Keep one candidate per concept");
  sub->add_flag("--clamp-to-candidates", s.clamp_to_candidates,
                "Replace off-list or invalid replies with the closest candidate");
  sub->add_flag("--labels-only", s.labels_only, "Render candidates without their ids");
}

void add_judge_flags(CLI::App* sub, Settings& s) {
  sub->add_option("--judge", s.judge, "Comma list of equivalence judges: reference,cosine,llm");
  sub->add_option("--threshold", s.threshold, "Cosine judge threshold in (0,1]");
  sub->add_option("--verdicts", s.verdicts, "Human verdicts JSON written by judge-import");
  sub->add_flag("--count-malformed-as-tn", s.malformed_as_tn, "Count excluded terms as true negatives");
}

Parser make_parser(Settings& s) {
  Parser p;
  p.app = std::make_unique<CLI::App>("Ontology term normalization with retrieval-augmented LLMs", "ontonorm");
  auto* app = p.app.get();
  app->require_subcommand(1);
  app->fallthrough();
  app->add_option("--config", s.config, "key = value settings file (flags > env > file > defaults)");

  auto add = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app->add_subcommand(name, desc);
    p.commands[name].app = sub;
    return sub;
  };

  CLI::App* sub = add("ingest-omim", "Fetch OMIM clinical features into a documents JSONL (key from env ONTONORM_OMIM_KEY)");
  sub->add_option("--mim-list", s.mim_list, "File with one six-digit MIM number per line");
  sub->add_option("--cache-dir", s.cache_dir, "Response cache directory");
  sub->add_option("--base-url", s.base_url, "OMIM API base URL");
  sub->add_option("--out", s.out, "Output documents JSONL");

  sub = add("extract", "Extract signs from documents into a terms file");
  sub->add_option("--docs", s.docs, "Documents JSONL from ingest-omim");
  add_chat_flags(sub, s);
  sub->add_option("--exclusions", s.exclusions, "Malformed-term exclusion list, one term per line");
  sub->add_option("--dropped-out", s.dropped_out, "Write excluded terms to this file");
  sub->add_option("--out", s.out, "Output terms file");

  sub = add("build-index", "Build the entry table and aligned embedding matrix");
  sub->add_option("--ontology", s.ontology, "BioPortal HPO class CSV");
  sub->add_option("--embeddings", s.embeddings, "Entry embedding CSV aligned with the entry table");
  sub->add_flag("--exclude-obsolete", s.exclude_obsolete, "Drop obsolete classes");
  sub->add_option("--synonym-delimiter", s.synonym_delimiter, "Synonym separator in the Synonyms column");
  sub->add_option("--out", s.out, "Output index directory");

  sub = add("normalize", "Normalize terms and write results JSON-lines");
  sub->add_option("--terms", s.terms, "Terms file, one per line");
  sub->add_option("--mode", s.mode, "embed | llm | rag")->check(CLI::IsMember({"embed", "llm", "rag"}));
  sub->add_option("--k", s.k, "Candidates shown in rag mode (1..50)")->check(CLI::Range(1, 50));
  add_index_flags(sub, s);
  add_provider_flags(sub, s);
  add_chat_flags(sub, s);
  add_run_flags(sub, s);
  sub->add_flag("--fresh", s.fresh, "Ignore an existing resume journal");
  sub->add_option("--out", s.out, "Output results JSONL (manifest written to <out>.manifest.json)");

  sub = add("evaluate", "Score results files against a gold standard");
  sub->add_option("--results", s.results, "Results file as name=path or path (repeatable)");
  sub->add_option("--gold", s.gold, "Gold CSV term,gold_id,gold_surface,malformed");
  add_index_flags(sub, s);
  add_provider_flags(sub, s);
  add_chat_flags(sub, s);
  add_judge_flags(sub, s);
  sub->add_option("--out", s.out, "Write metrics JSON here");

  sub = add("sweep", "Accuracy as a function of the candidate count k");
  sub->add_option("--ks", s.ks, "Comma list of ascending k values within 1..50");
  sub->add_option("--terms", s.terms, "Terms file, one per line");
  sub->add_option("--gold", s.gold, "Gold CSV term,gold_id,gold_surface,malformed");
  add_index_flags(sub, s);
  add_provider_flags(sub, s);
  add_chat_flags(sub, s);
  add_run_flags(sub, s);
  add_judge_flags(sub, s);
  sub->add_option("--out", s.out, "Output CSV k,accuracy,tp,fp,fn");

  sub = add("report", "Terms where the rag choice differs from the cosine argmax");
  sub->add_option("--rag-results", s.rag_results, "Results JSONL of a rag run");
  sub->add_option("--embed-results", s.embed_results, "Results JSONL of an embed run on the same terms");
  sub->add_option("--gold", s.gold, "Optional gold CSV to mark correctness");
  sub->add_option("--out", s.out, "Output TSV (stdout when omitted)");

  sub = add("judge-export", "Write a review sheet of pending equivalence decisions");
  sub->add_option("--results", s.results, "Results file as name=path or path (repeatable)");
  sub->add_option("--gold", s.gold, "Optional gold CSV; malformed terms are left out");
  add_provider_flags(sub, s);
  add_chat_flags(sub, s);
  sub->add_option("--out", s.out, "Output review sheet CSV");

  sub = add("judge-import", "Convert a filled review sheet into verdicts JSON");
  sub->add_option("--sheet", s.sheet, "Filled review sheet CSV");
  sub->add_option("--results", s.results, "Results the sheet was exported from (repeatable)");
  sub->add_option("--out", s.out, "Output verdicts JSON");

  return p;
}

// ---------------------------------------------------------------------------
// Precedence: flags > environment > config file > defaults

std::string key_shape(std::string_view name) {
  std::string out;
  for (char c : name) out.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::optional<std::string> env_value(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

std::vector<CLI::ConfigItem> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  CLI::ConfigTOML reader;
  std::vector<CLI::ConfigItem> items;
  for (auto& item : reader.from_config(in))
    if (item.name != "++" && item.name != "--") items.push_back(std::move(item));
  return items;
}

void apply_fallbacks(const Parser& parser, CLI::App& sub, const std::vector<CLI::ConfigItem>& config) {
  static const std::map<std::string, const char*> kEnvFlags = {{"embed-url", kEmbedUrlEnv}};
  static const std::set<std::string> kSecretKeys = {"token", "api-key", "llm-token", "omim-key", "apikey"};

  std::set<std::string> known;
  for (const auto& [name, cmd] : parser.commands)
    for (const CLI::Option* opt : cmd.app->get_options()) known.insert(opt->get_single_name());
  for (const auto& item : config) {
    std::string key = key_shape(item.name);
    if (kSecretKeys.count(key))
      throw UsageError("config key '" + item.name + "': secrets are read only from the environment");
    if (item.parents.size() > 1 || (item.parents.size() == 1 && !parser.commands.count(item.parents[0])))
      throw UsageError("config key '" + item.fullname() + "' is not in a known section");
    if (!known.count(key)) throw UsageError("unknown config key '" + item.fullname() + "'");
  }

  for (CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || opt->count() > 0) continue;
    std::vector<std::string> values;
    if (auto it = kEnvFlags.find(name); it != kEnvFlags.end()) {
      if (auto v = env_value(it->second)) values.push_back(*v);
    }
    if (values.empty()) {
      // Section entries override top-level ones.
      for (const auto& item : config) {
        if (key_shape(item.name) != name) continue;
        bool in_section = item.parents.size() == 1 && item.parents[0] == sub.get_name();
        if (!item.parents.empty() && !in_section) continue;
        if (values.empty() || in_section) values = item.inputs;
      }
    }
    if (values.empty()) continue;
    for (auto& v : values) opt->add_result(v);
    opt->run_callback();
  }
}

// ---------------------------------------------------------------------------
// Shared helpers

void require_flag(const std::string& value, std::string_view flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

void require_readable(const std::string& path, std::string_view flag) {
  if (!path.empty() && !fs::exists(path))
    throw UsageError(std::string(flag) + ": no such file '" + path + "'");
}

void check_index_flags(const Settings& s, bool required) {
  if (!s.index.empty() && (!s.ontology.empty() || !s.embeddings.empty()))
    throw UsageError("--index cannot be combined with --ontology/--embeddings");
  if (s.index.empty() && s.ontology.empty() != s.embeddings.empty())
    throw UsageError("--ontology and --embeddings must be given together");
  if (required && s.index.empty() && s.ontology.empty())
    throw UsageError("an index is required: --index or --ontology with --embeddings");
  require_readable(s.index, "--index");
  require_readable(s.ontology, "--ontology");
  require_readable(s.embeddings, "--embeddings");
}

bool has_index(const Settings& s) { return !s.index.empty() || !s.ontology.empty(); }

bool has_chat(const Settings& s) { return !s.mock.empty() || !s.model.empty(); }

void check_chat_flags(const Settings& s, bool required) {
  if (!s.mock.empty() && (!s.model.empty() || !s.base_url.empty()))
    throw UsageError("--mock cannot be combined with --model/--base-url");
  if (!s.mock_table.empty() && s.mock != "fixed-table") throw UsageError("--mock-table requires --mock fixed-table");
  if (s.mock == "fixed-table" && s.mock_table.empty()) throw UsageError("--mock fixed-table requires --mock-table");
  if (!s.base_url.empty() && s.model.empty()) throw UsageError("--base-url requires --model");
  if (required && !has_chat(s)) throw UsageError("a chat backend is required: --model or --mock");
  require_readable(s.mock_table, "--mock-table");
}

void check_provider_flags(const Settings& s) {
  if (!s.query_embeddings.empty() && !s.embed_url.empty())
    throw UsageError("--query-embeddings cannot be combined with --embed-url");
  if (!s.embed_url.empty() && s.embed_model.empty()) throw UsageError("--embed-url requires --embed-model");
  require_readable(s.query_embeddings, "--query-embeddings");
}

void check_run_flags(const Settings& s) {
  if (s.paper_faithful && (s.dedupe_by_id || s.clamp_to_candidates))
    throw UsageError("--paper-faithful cannot be combined with --dedupe-by-id or --clamp-to-candidates");
}

struct JudgeChoice {
  bool reference = false;
  bool cosine = false;
  bool llm = false;
};

JudgeChoice check_judge_flags(const Settings& s) {
  JudgeChoice j;
  for (const auto& part : split(s.judge, ',')) {
    std::string name = trim(part);
    if (name == "reference") j.reference = true;
    else if (name == "cosine") j.cosine = true;
    else if (name == "llm") j.llm = true;
    else throw UsageError("--judge: unknown judge '" + name + "'");
  }
  if (!(s.threshold > 0.0 && s.threshold <= 1.0)) throw UsageError("--threshold must be in (0,1]");
  if (j.llm && !has_chat(s)) throw UsageError("--judge llm requires --model or --mock");
  if (j.cosine && s.query_embeddings.empty() && s.embed_url.empty())
    throw UsageError("--judge cosine requires --query-embeddings or --embed-url");
  require_readable(s.verdicts, "--verdicts");
  return j;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  for (const auto& part : split(text, ',')) {
    std::string t = trim(part);
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (t.empty() || pos != t.size()) throw UsageError("--ks: '" + t + "' is not an integer");
    if (v < 1 || v > kMaxRagCandidates) throw UsageError("--ks: k must be within 1..50");
    if (!ks.empty() && v <= ks.back()) throw UsageError("--ks must be strictly ascending");
    ks.push_back(v);
  }
  if (ks.empty()) throw UsageError("--ks is empty");
  return ks;
}

struct NamedPath {
  std::string name;
  std::string path;
};

std::vector<NamedPath> parse_named_results(const std::vector<std::string>& specs) {
  std::vector<NamedPath> out;
  std::set<std::string> seen;
  for (const auto& spec : specs) {
    NamedPath np;
    auto eq = spec.find('=');
    if (eq == std::string::npos) {
      np.path = spec;
      np.name = fs::path(spec).stem().string();
    } else {
      np.name = spec.substr(0, eq);
      np.path = spec.substr(eq + 1);
    }
    if (np.name.empty() || np.path.empty()) throw UsageError("--results: expected name=path, got '" + spec + "'");
    if (!seen.insert(np.name).second) throw UsageError("--results: duplicate name '" + np.name + "'");
    require_readable(np.path, "--results");
    out.push_back(std::move(np));
  }
  return out;
}

OntologyCsvOptions ontology_options(const Settings& s) {
  if (s.synonym_delimiter.size() != 1) throw UsageError("--synonym-delimiter must be a single character");
  OntologyCsvOptions o;
  o.synonym_delimiter = s.synonym_delimiter[0];
  o.exclude_obsolete = s.exclude_obsolete;
  return o;
}

EntryTable table_from_ontology(const Settings& s, std::ostream& err) {
  ParsedOntology parsed = parse_ontology_csv(read_file(s.ontology), ontology_options(s));
  err << "ontology: " << parsed.concepts.size() << " concepts (" << parsed.skipped_non_hp << " non-HP, "
      << parsed.skipped_obsolete << " obsolete, " << parsed.skipped_unlabeled << " unlabeled skipped)\n";
  return build_entry_table(std::move(parsed.concepts));
}

std::unique_ptr<TermIndex> load_index(const Settings& s, std::ostream& err) {
  if (!s.index.empty()) {
    fs::path dir(s.index);
    EntryTable table = parse_entry_table(read_file(dir / "entries.tsv"));
    EmbeddingMatrix matrix = load_embedding_file(dir / "embeddings.csv", table);
    return std::make_unique<TermIndex>(std::move(table), std::move(matrix));
  }
  EntryTable table = table_from_ontology(s, err);
  EmbeddingMatrix matrix = load_embedding_file(s.embeddings, table);
  return std::make_unique<TermIndex>(std::move(table), std::move(matrix));
}

// Replay vectors from --query-embeddings plus the index surfaces, or an HTTP
// embedding server.
std::shared_ptr<EmbeddingProvider> make_provider(const Settings& s, const TermIndex* index) {
  if (!s.embed_url.empty()) {
    HttpEmbeddingConfig cfg;
    cfg.base_url = s.embed_url;
    cfg.model = s.embed_model;
    if (auto token = env_value(kLlmTokenEnv)) cfg.token = *token;
    return std::make_shared<HttpEmbeddingProvider>(std::move(cfg));
  }
  std::shared_ptr<ReplayProvider> replay;
  if (!s.query_embeddings.empty()) replay = ReplayProvider::from_file(s.query_embeddings);
  if (index) {
    if (!replay) return ReplayProvider::from_matrix(index->table(), index->matrix());
    for (std::size_t i = 0; i < index->size(); ++i) {
      auto row = index->matrix().row(i);
      replay->add(index->table()[i].surface, Vector(row.begin(), row.end()));
    }
  }
  return replay;
}

std::map<std::string, std::string> load_mock_table(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("--mock-table: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("--mock-table: expected a JSON object");
  std::map<std::string, std::string> table;
  for (auto it = j.begin(); it != j.end(); ++it)
    table[it.key()] = it->is_string() ? it->get<std::string>() : it->dump();
  return table;
}

std::shared_ptr<ChatBackend> make_chat(const Settings& s) {
  if (!s.mock.empty()) {
    MockPolicy policy;
    policy.kind = *parse_mock_policy(s.mock);
    if (!s.mock_table.empty()) policy.table = load_mock_table(s.mock_table);
    return std::make_shared<MockChat>(std::move(policy));
  }
  if (s.model.empty()) return nullptr;
  EndpointConfig endpoint;
  if (!s.base_url.empty()) endpoint.base_url = s.base_url;
  if (auto token = env_value(kLlmTokenEnv)) endpoint.token = *token;
  return std::make_shared<HttpChatClient>(std::move(endpoint));
}

std::string chat_model(const Settings& s) { return s.model.empty() ? std::string("mock") : s.model; }

RunConfig make_run_config(const Settings& s, NormalizationMode mode, std::shared_ptr<EmbeddingProvider> provider,
                          std::shared_ptr<ChatBackend> chat) {
  RunConfig cfg;
  cfg.mode = mode;
  cfg.provider = std::move(provider);
  cfg.chat = std::move(chat);
  cfg.model = chat_model(s);
  cfg.concurrency = s.concurrency;
  cfg.exact_match_fast_path = !s.paper_faithful;
  cfg.dedupe_by_id = s.dedupe_by_id;
  cfg.clamp_to_candidates = s.clamp_to_candidates;
  cfg.rendering = s.labels_only ? CandidateRendering::LabelOnly : CandidateRendering::LabelWithId;
  cfg.temperature = s.temperature;
  return cfg;
}

std::vector<std::string> load_terms(const std::string& path) {
  auto terms = parse_terms(read_file(path));
  if (terms.empty()) throw Error("terms file '" + path + "' has no terms");
  return terms;
}

void write_manifest(const fs::path& out, const RunManifest& manifest) {
  write_file_atomic(out.string() + ".manifest.json", manifest.to_json().dump(2) + "\n");
}

struct Judges {
  JudgeSettings settings;
  std::shared_ptr<EmbeddingProvider> provider;
  std::shared_ptr<ChatBackend> chat;
  HumanVerdicts human;
};

void setup_judges(Judges& j, const JudgeChoice& choice, const Settings& s, const TermIndex* index) {
  j.settings.use_reference = choice.reference;
  j.settings.table = index ? &index->table() : nullptr;
  j.settings.cosine_threshold = s.threshold;
  if (choice.cosine) {
    j.provider = make_provider(s, index);
    j.settings.cosine_provider = j.provider.get();
  }
  if (choice.llm) {
    j.chat = make_chat(s);
    j.settings.llm = j.chat.get();
    j.settings.llm_model = chat_model(s);
  }
  if (!s.verdicts.empty()) {
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(read_file(s.verdicts));
    } catch (const nlohmann::json::exception& e) {
      throw Error("--verdicts: " + std::string(e.what()));
    }
    j.human = verdicts_from_json(v);
    j.settings.human = &j.human;
  }
  if (!choice.reference && !choice.cosine && !choice.llm && s.verdicts.empty())
    throw UsageError("no equivalence judge selected");
}

// ---------------------------------------------------------------------------
// Commands

int run_ingest(Settings& s, std::ostream&, std::ostream& err) {
  require_flag(s.mim_list, "--mim-list");
  require_flag(s.cache_dir, "--cache-dir");
  require_flag(s.out, "--out");
  require_readable(s.mim_list, "--mim-list");

  std::vector<std::string> mims = parse_line_list(read_file(s.mim_list));
  for (const auto& m : mims)
    if (!is_mim_number(m)) throw Error("--mim-list: '" + m + "' is not a six-digit MIM number");
  OmimConfig cfg;
  if (!s.base_url.empty()) cfg.base_url = s.base_url;
  if (auto key = env_value(kOmimKeyEnv.data())) cfg.api_key = *key;
  cfg.cache_dir = s.cache_dir;
  FetchOutcome outcome = fetch_clinical_features(mims, cfg);
  for (const auto& skip : outcome.skipped) err << "skipped " << skip.mim_number << ": " << skip.reason << "\n";
  write_file_atomic(s.out, serialize_documents(outcome.documents));
  err << "ingest-omim: " << outcome.documents.size() << " documents, " << outcome.skipped.size() << " skipped, "
      << outcome.network_calls << " requests -> " << s.out << "\n";
  return kOk;
}

int run_extract(Settings& s, std::ostream&, std::ostream& err) {
  require_flag(s.docs, "--docs");
  require_flag(s.out, "--out");
  require_readable(s.docs, "--docs");
  require_readable(s.exclusions, "--exclusions");
  check_chat_flags(s, true);

  auto docs = parse_documents(read_file(s.docs));
  ExclusionList exclusions;
  if (!s.exclusions.empty()) exclusions = ExclusionList::from_text(read_file(s.exclusions));
  auto chat = make_chat(s);
  const std::string model = chat_model(s);

  std::vector<std::string> kept;
  std::vector<std::string> dropped;
  std::set<std::string> seen;
  for (const auto& doc : docs) {
    if (trim(doc.clinical_features_text).empty()) {
      err << "skipped " << doc.mim_number << ": empty clinical features\n";
      continue;
    }
    ExtractedSigns signs = extract_signs(doc, *chat, model);
    ExclusionResult r = apply_exclusions(signs.signs, exclusions);
    for (auto& t : r.kept)
      if (seen.insert(preprocess_term(t)).second) kept.push_back(std::move(t));
    for (auto& t : r.dropped) dropped.push_back(std::move(t));
  }
  std::string body;
  for (const auto& t : kept) body += t + "\n";
  write_file_atomic(s.out, body);
  if (!s.dropped_out.empty()) {
    std::string d;
    for (const auto& t : dropped) d += t + "\n";
    write_file_atomic(s.dropped_out, d);
  }
  err << "extract: " << kept.size() << " terms kept, " << dropped.size() << " excluded -> " << s.out << "\n";
  return kOk;
}

int run_build_index(Settings& s, std::ostream&, std::ostream& err) {
  require_flag(s.ontology, "--ontology");
  require_flag(s.embeddings, "--embeddings");
  require_flag(s.out, "--out");
  require_readable(s.ontology, "--ontology");
  require_readable(s.embeddings, "--embeddings");
  ontology_options(s);

  EntryTable table = table_from_ontology(s, err);
  EmbeddingMatrix matrix = load_embedding_file(s.embeddings, table);
  TermIndex index(std::move(table), std::move(matrix));

  fs::path dir(s.out);
  fs::create_directories(dir);
  write_file_atomic(dir / "entries.tsv", serialize_entry_table(index.table()));
  write_file_atomic(dir / "embeddings.csv", serialize_embedding_csv(index.table(), index.matrix()));
  nlohmann::ordered_json manifest;
  manifest["concepts"] = index.table().concepts().size();
  manifest["entries"] = index.size();
  manifest["dim"] = index.dim();
  manifest["ontology"] = s.ontology;
  manifest["embeddings"] = s.embeddings;
  manifest["provenance"] = index.matrix().provenance();
  manifest["built_at"] = utc_timestamp();
  write_file_atomic(dir / "index.json", manifest.dump(2) + "\n");
  err << "build-index: " << index.table().concepts().size() << " concepts, " << index.size() << " entries, dim "
      << index.dim() << " -> " << s.out << "\n";
  return kOk;
}

int run_normalize(Settings& s, std::ostream&, std::ostream& err) {
  require_flag(s.terms, "--terms");
  require_flag(s.out, "--out");
  require_readable(s.terms, "--terms");
  ModeKind kind = *parse_mode(s.mode);
  if (kind != ModeKind::LlmRag && s.k != kDefaultRagK) throw UsageError("--k applies to --mode rag only");
  check_index_flags(s, kind != ModeKind::LlmPlain);
  check_provider_flags(s);
  check_chat_flags(s, kind != ModeKind::EmbedOnly);
  check_run_flags(s);

  NormalizationMode mode = kind == ModeKind::EmbedOnly ? NormalizationMode::embed_only()
                           : kind == ModeKind::LlmPlain ? NormalizationMode::llm_plain()
                                                        : NormalizationMode::llm_rag(s.k);
  auto terms = load_terms(s.terms);
  std::unique_ptr<TermIndex> index;
  if (has_index(s)) index = load_index(s, err);
  std::shared_ptr<EmbeddingProvider> provider;
  if (kind != ModeKind::LlmPlain || !s.query_embeddings.empty() || !s.embed_url.empty())
    provider = make_provider(s, index.get());
  std::shared_ptr<ChatBackend> chat;
  if (kind != ModeKind::EmbedOnly) chat = make_chat(s);
  RunConfig cfg = make_run_config(s, mode, provider, chat);
  cfg.exact_match_fast_path = cfg.exact_match_fast_path && index != nullptr;
  cfg.validate(index.get());

  fs::path out(s.out);
  BatchOptions options;
  options.journal = fs::path(s.out + ".journal");
  if (s.fresh) fs::remove(*options.journal);
  BatchOutput batch = run_batch(terms, cfg, index.get(), options);
  write_file_atomic(out, serialize_results(batch.results, batch.manifest.config_hash));
  write_manifest(out, batch.manifest);
  fs::remove(*options.journal);
  err << "normalize: " << batch.manifest.n_terms << " terms (" << batch.manifest.n_errors << " errors, "
      << batch.manifest.n_resumed << " resumed) -> " << s.out << "\n";
  return batch.manifest.n_errors == 0 ? kOk : kDataError;
}

int run_evaluate(Settings& s, std::ostream& out, std::ostream& err) {
  if (s.results.empty()) throw UsageError("--results is required");
  require_flag(s.gold, "--gold");
  require_readable(s.gold, "--gold");
  auto named = parse_named_results(s.results);
  check_index_flags(s, false);
  check_provider_flags(s);
  check_chat_flags(s, false);
  JudgeChoice choice = check_judge_flags(s);

  auto gold = load_gold_file(s.gold);
  std::unique_ptr<TermIndex> index;
  if (has_index(s)) index = load_index(s, err);
  Judges judges;
  setup_judges(judges, choice, s, index.get());

  ScoreOptions opts;
  opts.count_malformed_as_tn = s.malformed_as_tn;
  std::vector<MethodMetrics> rows;
  for (const auto& np : named) {
    auto results = load_results(np.path);
    ScoredRun run = score_run(results, gold, judges.settings, opts);
    if (run.unmatched_results > 0)
      err << np.name << ": " << run.unmatched_results << " results have no gold record\n";
    rows.push_back({np.name, compute_metrics(run.counts)});
  }
  out << metrics_table(rows);
  if (!s.out.empty()) write_file_atomic(s.out, metrics_json(rows).dump(2) + "\n");
  return kOk;
}

int run_sweep(Settings& s, std::ostream&, std::ostream& err) {
  require_flag(s.terms, "--terms");
  require_flag(s.gold, "--gold");
  require_flag(s.out, "--out");
  require_readable(s.terms, "--terms");
  require_readable(s.gold, "--gold");
  auto ks = parse_ks(s.ks);
  check_index_flags(s, true);
  check_provider_flags(s);
  check_chat_flags(s, true);
  check_run_flags(s);
  JudgeChoice choice = check_judge_flags(s);

  auto terms = load_terms(s.terms);
  auto gold = load_gold_file(s.gold);
  auto index = load_index(s, err);
  RunConfig cfg = make_run_config(s, NormalizationMode::llm_rag(ks.front()), make_provider(s, index.get()),
                                  make_chat(s));
  cfg.validate(index.get());
  Judges judges;
  setup_judges(judges, choice, s, index.get());
  ScoreOptions opts;
  opts.count_malformed_as_tn = s.malformed_as_tn;
  auto points = run_k_sweep(terms, gold, cfg, *index, ks, judges.settings, opts);
  write_file_atomic(s.out, sweep_csv(points));
  for (const auto& p : points) err << "k=" << p.k << " accuracy=" << p.accuracy << "\n";
  err << "sweep: " << points.size() << " points -> " << s.out << "\n";
  return kOk;
}

int run_report(Settings& s, std::ostream& out, std::ostream& err) {
  require_flag(s.rag_results, "--rag-results");
  require_flag(s.embed_results, "--embed-results");
  require_readable(s.rag_results, "--rag-results");
  require_readable(s.embed_results, "--embed-results");
  require_readable(s.gold, "--gold");

  auto rag = load_results(s.rag_results);
  auto embed = load_results(s.embed_results);
  std::vector<GoldRecord> gold;
  if (!s.gold.empty()) gold = load_gold_file(s.gold);
  auto rows = report_disagreements(rag, embed, gold);
  std::string tsv = disagreements_tsv(rows);
  if (s.out.empty()) out << tsv;
  else write_file_atomic(s.out, tsv);
  err << "report: " << rows.size() << " disagreements\n";
  return kOk;
}

std::vector<PairKey> result_pairs(const std::vector<NamedPath>& named, const std::vector<GoldRecord>* gold) {
  std::set<std::string> malformed;
  if (gold)
    for (const auto& g : *gold)
      if (g.malformed) malformed.insert(preprocess_term(g.term));
  std::vector<PairKey> pairs;
  std::set<PairKey> seen;
  for (const auto& np : named) {
    for (const auto& r : load_results(np.path)) {
      if (r.error || !r.chosen_surface || r.chosen_surface->empty()) continue;
      PairKey key{preprocess_term(r.input), preprocess_term(*r.chosen_surface)};
      if (malformed.count(key.first)) continue;
      if (seen.insert(key).second) pairs.push_back(std::move(key));
    }
  }
  return pairs;
}

int run_judge_export(Settings& s, std::ostream&, std::ostream& err) {
  if (s.results.empty()) throw UsageError("--results is required");
  require_flag(s.out, "--out");
  require_readable(s.gold, "--gold");
  auto named = parse_named_results(s.results);
  check_provider_flags(s);
  check_chat_flags(s, false);

  std::vector<GoldRecord> gold;
  if (!s.gold.empty()) gold = load_gold_file(s.gold);
  auto pairs = result_pairs(named, s.gold.empty() ? nullptr : &gold);
  std::shared_ptr<EmbeddingProvider> provider;
  if (!s.query_embeddings.empty() || !s.embed_url.empty()) provider = make_provider(s, nullptr);
  auto chat = make_chat(s);

  std::vector<ReviewRow> rows;
  for (const auto& [term, candidate] : pairs) {
    ReviewRow row{term, candidate, std::nullopt, std::nullopt, std::nullopt};
    if (provider) row.cosine = judge_cosine(term, candidate, s.threshold, *provider).first;
    if (chat) row.llm_verdict = judge_llm(term, candidate, *chat, chat_model(s));
    rows.push_back(std::move(row));
  }
  write_file_atomic(s.out, export_review_sheet(rows));
  err << "judge-export: " << rows.size() << " pairs -> " << s.out << "\n";
  return kOk;
}

int run_judge_import(Settings& s, std::ostream&, std::ostream& err) {
  require_flag(s.sheet, "--sheet");
  if (s.results.empty()) throw UsageError("--results is required");
  require_flag(s.out, "--out");
  require_readable(s.sheet, "--sheet");
  auto named = parse_named_results(s.results);

  auto pairs = result_pairs(named, nullptr);
  HumanVerdicts verdicts = import_review_sheet(read_file(s.sheet), pairs);
  write_file_atomic(s.out, verdicts_to_json(verdicts).dump(2) + "\n");
  err << "judge-import: " << verdicts.size() << " verdicts -> " << s.out << "\n";
  return kOk;
}

void bind_runners(Parser& p) {
  p.commands["ingest-omim"].run = run_ingest;
  p.commands["extract"].run = run_extract;
  p.commands["build-index"].run = run_build_index;
  p.commands["normalize"].run = run_normalize;
  p.commands["evaluate"].run = run_evaluate;
  p.commands["sweep"].run = run_sweep;
  p.commands["report"].run = run_report;
  p.commands["judge-export"].run = run_judge_export;
  p.commands["judge-import"].run = run_judge_import;
}

}  // namespace

int route(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  Settings s;
  Parser p = make_parser(s);
  bind_runners(p);
  CLI::App& app = *p.app;

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto& [name, cmd] : p.commands)
      if (cmd.app->parsed()) target = cmd.app;
    out << target->help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  Command* selected = nullptr;
  for (auto& [name, cmd] : p.commands)
    if (cmd.app->parsed()) selected = &cmd;

  try {
    std::vector<CLI::ConfigItem> config;
    if (!s.config.empty()) config = read_config_file(s.config);
    apply_fallbacks(p, *selected->app, config);
    return selected->run(s, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << selected->app->help();
    return kUsageError;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << selected->app->help();
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

std::vector<std::string> command_names() {
  Settings s;
  Parser p = make_parser(s);
  std::vector<std::string> names;
  for (const auto& [name, cmd] : p.commands) names.push_back(name);
  return names;
}

std::vector<std::string> declared_flags(std::string_view command) {
  Settings s;
  Parser p = make_parser(s);
  auto it = p.commands.find(command);
  if (it == p.commands.end()) throw std::invalid_argument("unknown command " + std::string(command));
  std::vector<std::string> flags;
  for (const CLI::Option* opt : it->second.app->get_options())
    for (const auto& l : opt->get_lnames()) flags.push_back("--" + l);
  return flags;
}

std::string help_text(std::string_view command) {
  Settings s;
  Parser p = make_parser(s);
  auto it = p.commands.find(command);
  if (it == p.commands.end()) throw std::invalid_argument("unknown command " + std::string(command));
  return it->second.app->help();
}

}  // namespace ontonorm::cli
