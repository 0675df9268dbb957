#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ontonorm/embed_store.hpp"
#include "ontonorm/llm_client.hpp"
#include "ontonorm/ontology.hpp"
#include "ontonorm/pipeline.hpp"

namespace ontonorm {

struct GoldRecord {
  std::string term;
  std::optional<OntoId> gold_id;  // absent only for malformed records
  std::string gold_surface;
  bool malformed = false;
};

// CSV `term,gold_id,gold_surface,malformed` with malformed in {0,1}.
std::vector<GoldRecord> parse_gold_csv(std::string_view csv);
std::vector<GoldRecord> load_gold_file(const std::filesystem::path& path);

// Precedence, highest first: Human, LlmJudge, CosineOnly, GoldReference.
enum class Tier { GoldReference, CosineOnly, LlmJudge, Human };

std::string_view to_string(Tier tier);

struct EquivalenceVerdict {
  std::optional<double> cosine_score;
  std::optional<bool> reference_verdict;
  std::optional<bool> cosine_verdict;
  std::optional<bool> llm_verdict;
  std::optional<bool> human_verdict;
  bool final = false;
  Tier tier_used = Tier::GoldReference;

  // Sets final/tier_used from the highest tier present. Throws
  // PreconditionError when no tier has a verdict.
  void resolve();
};

enum class Outcome { TP, FP, FN, Excluded };

std::string_view to_string(Outcome outcome);

// Excluded iff the gold record is malformed; FN iff the result carries
// NoOutput; TP iff the verdict is final-true and the chosen id equals the
// gold id; FP otherwise. Throws PreconditionError when the result and gold
// terms differ.
Outcome classify(const NormalizationResult& result, const GoldRecord& gold, const EquivalenceVerdict& verdict);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t n_scored = 0;

  void add(Outcome outcome, bool excluded_as_tn = false);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricsReport {
  ConfusionCounts counts;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // 0/0 cases report 0.0 with the matching flag set.
  bool accuracy_undefined = false;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

MetricsReport compute_metrics(const ConfusionCounts& counts);

// Half-up rounding to two decimals.
double round2(double x);

// Embeds both strings and compares cosine against the threshold.
std::pair<double, bool> judge_cosine(std::string_view term, std::string_view candidate_surface, double threshold,
                                     EmbeddingProvider& provider);

// Throws JudgeError when the reply is not a recognizable yes/no.
bool judge_llm(std::string_view term, std::string_view candidate_surface, ChatBackend& chat,
               const std::string& model);

struct ReviewRow {
  std::string term;
  std::string candidate;
  std::optional<double> cosine;
  std::optional<bool> llm_verdict;
  std::optional<bool> human_verdict;
};

using PairKey = std::pair<std::string, std::string>;
using HumanVerdicts = std::map<PairKey, bool>;

// CSV `term,candidate,cosine,llm_verdict,human_verdict` (human column blank).
std::string export_review_sheet(std::span<const ReviewRow> pending);

// Reads a filled sheet. Rows with a blank human_verdict are skipped; values
// accepted: yes/no, y/n, true/false, 1/0. Throws Error listing every
// (term, candidate) pair absent from `known`.
HumanVerdicts import_review_sheet(std::string_view csv, std::span<const PairKey> known);

nlohmann::ordered_json verdicts_to_json(const HumanVerdicts& verdicts);
HumanVerdicts verdicts_from_json(const nlohmann::json& j);

struct JudgeSettings {
  // Reference tier: the chosen surface names the gold concept.
  bool use_reference = true;
  const EntryTable* table = nullptr;
  EmbeddingProvider* cosine_provider = nullptr;
  double cosine_threshold = 0.90;
  ChatBackend* llm = nullptr;
  std::string llm_model;
  const HumanVerdicts* human = nullptr;
};

EquivalenceVerdict assess(const NormalizationResult& result, const GoldRecord& gold, const JudgeSettings& judges);

struct ScoreOptions {
  bool count_malformed_as_tn = false;
};

struct ScoredTerm {
  std::size_t result_index;
  Outcome outcome;
  EquivalenceVerdict verdict;
};

struct ScoredRun {
  ConfusionCounts counts;
  std::vector<ScoredTerm> terms;
  std::size_t unmatched_results = 0;  // results with no gold record
};

// Pairs results with gold records by preprocessed term and classifies each.
// Throws Error when any result carries an infrastructure error.
ScoredRun score_run(std::span<const NormalizationResult> results, std::span<const GoldRecord> gold,
                    const JudgeSettings& judges, const ScoreOptions& options = {});

struct SweepPoint {
  std::size_t k = 0;
  double accuracy = 0.0;
  ConfusionCounts counts;
};

// One LlmRag batch plus scoring per k. `ks` must be ascending within 1..50.
// base.mode is replaced per point.
std::vector<SweepPoint> run_k_sweep(std::span<const std::string> terms, std::span<const GoldRecord> gold,
                                    const RunConfig& base, const TermIndex& index, std::span<const std::size_t> ks,
                                    const JudgeSettings& judges, const ScoreOptions& options = {});

// Plot data: `k,accuracy,tp,fp,fn`.
std::string sweep_csv(std::span<const SweepPoint> points);

struct DisagreementRow {
  std::string term;
  std::string argmax_surface;
  std::string argmax_id;
  double argmax_cosine = 0.0;
  std::string chosen_surface;
  std::string chosen_id;
  std::optional<double> chosen_cosine;
  std::optional<double> delta;  // argmax_cosine - chosen_cosine
  std::optional<bool> argmax_correct;
  std::optional<bool> chosen_correct;
};

// Terms where the RAG choice differs from the cosine argmax. Throws Error
// when the two runs cover different terms.
std::vector<DisagreementRow> report_disagreements(std::span<const NormalizationResult> rag,
                                                  std::span<const NormalizationResult> embed_only,
                                                  std::span<const GoldRecord> gold);

std::string disagreements_tsv(std::span<const DisagreementRow> rows);

struct MethodMetrics {
  std::string method;
  MetricsReport report;
};

// Method, Accuracy, F1, Recall, Precision, N at two decimals.
std::string metrics_table(std::span<const MethodMetrics> rows);
nlohmann::ordered_json metrics_json(std::span<const MethodMetrics> rows);

}  // namespace ontonorm
