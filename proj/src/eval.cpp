#include "ontonorm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "ontonorm/csv.hpp"
#include "ontonorm/error.hpp"
#include "ontonorm/io.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm {
namespace {

using ojson = nlohmann::ordered_json;

std::optional<bool> parse_yes_no(std::string_view raw) {
  std::string v = case_fold(trim(raw));
  if (v.empty()) return std::nullopt;
  if (v == "yes" || v == "y" || v == "true" || v == "1") return true;
  if (v == "no" || v == "n" || v == "false" || v == "0") return false;
  throw ParseError("unrecognized verdict '" + std::string(raw) + "'", 0);
}

std::string fmt_double(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string fmt_full(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string opt_bool(const std::optional<bool>& b) { return b ? (*b ? "yes" : "no") : ""; }

bool names_gold_concept(const NormalizationResult& r, const GoldRecord& gold, const EntryTable* table) {
  if (!r.chosen_surface) return false;
  const std::string chosen = fold_key(*r.chosen_surface);
  if (!gold.gold_surface.empty() && chosen == fold_key(gold.gold_surface)) return true;
  if (!table || !gold.gold_id) return false;
  const ConceptRecord* c = table->find(*gold.gold_id);
  if (!c) return false;
  if (chosen == fold_key(c->label)) return true;
  return std::any_of(c->synonyms.begin(), c->synonyms.end(),
                     [&](const std::string& s) { return fold_key(s) == chosen; });
}

}  // namespace

std::vector<GoldRecord> parse_gold_csv(std::string_view csv) {
  CsvReader reader(csv);
  auto header_rec = reader.next();
  if (!header_rec) throw ParseError("empty gold file", 0);
  CsvHeader header(*header_rec);
  const auto term_col = header.require("term");
  const auto id_col = header.require("gold_id");
  const auto surface_col = header.require("gold_surface");
  const auto malformed_col = header.require("malformed");

  std::vector<GoldRecord> out;
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && trim(rec->fields[0]).empty()) continue;
    if (rec->fields.size() < header.size()) throw ParseError("gold row has too few fields", rec->line);
    GoldRecord g;
    g.term = trim(rec->fields[term_col]);
    if (g.term.empty()) throw ParseError("gold row has an empty term", rec->line);
    std::string m = trim(rec->fields[malformed_col]);
    if (m != "0" && m != "1") throw ParseError("malformed must be 0 or 1, got '" + m + "'", rec->line);
    g.malformed = m == "1";
    std::string id = trim(rec->fields[id_col]);
    if (!id.empty()) {
      g.gold_id = OntoId::try_parse(id);
      if (!g.gold_id) throw ParseError("invalid gold id '" + id + "'", rec->line);
    } else if (!g.malformed) {
      throw ParseError("gold id required for non-malformed term '" + g.term + "'", rec->line);
    }
    g.gold_surface = trim(rec->fields[surface_col]);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<GoldRecord> load_gold_file(const std::filesystem::path& path) { return parse_gold_csv(read_file(path)); }

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::GoldReference: return "reference";
    case Tier::CosineOnly: return "cosine";
    case Tier::LlmJudge: return "llm";
    case Tier::Human: return "human";
  }
  return "unknown";
}

void EquivalenceVerdict::resolve() {
  if (human_verdict) {
    final = *human_verdict;
    tier_used = Tier::Human;
  } else if (llm_verdict) {
    final = *llm_verdict;
    tier_used = Tier::LlmJudge;
  } else if (cosine_verdict) {
    final = *cosine_verdict;
    tier_used = Tier::CosineOnly;
  } else if (reference_verdict) {
    final = *reference_verdict;
    tier_used = Tier::GoldReference;
  } else {
    throw PreconditionError("equivalence verdict has no tier to resolve from");
  }
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::TP: return "TP";
    case Outcome::FP: return "FP";
    case Outcome::FN: return "FN";
    case Outcome::Excluded: return "excluded";
  }
  return "unknown";
}

Outcome classify(const NormalizationResult& result, const GoldRecord& gold, const EquivalenceVerdict& verdict) {
  if (preprocess_term(result.input) != preprocess_term(gold.term))
    throw PreconditionError("result term '" + result.input + "' does not match gold term '" + gold.term + "'");
  if (gold.malformed) return Outcome::Excluded;
  if (result.flags.has(ResultFlag::NoOutput)) return Outcome::FN;
  if (verdict.final && result.chosen_id && gold.gold_id && *result.chosen_id == *gold.gold_id) return Outcome::TP;
  return Outcome::FP;
}

void ConfusionCounts::add(Outcome outcome, bool excluded_as_tn) {
  switch (outcome) {
    case Outcome::TP: ++tp; ++n_scored; break;
    case Outcome::FP: ++fp; ++n_scored; break;
    case Outcome::FN: ++fn; ++n_scored; break;
    case Outcome::Excluded:
      if (excluded_as_tn) ++tn;
      break;
  }
}

MetricsReport compute_metrics(const ConfusionCounts& c) {
  MetricsReport m;
  m.counts = c;
  auto ratio = [](double num, double den, bool& undefined) {
    undefined = den == 0.0;
    return undefined ? 0.0 : num / den;
  };
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  const double tn = static_cast<double>(c.tn);
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn, m.accuracy_undefined);
  m.precision = ratio(tp, tp + fp, m.precision_undefined);
  m.recall = ratio(tp, tp + fn, m.recall_undefined);
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall, m.f1_undefined);
  return m;
}

double round2(double x) { return std::floor(x * 100.0 + 0.5 + 1e-9) / 100.0; }

std::pair<double, bool> judge_cosine(std::string_view term, std::string_view candidate_surface, double threshold,
                                     EmbeddingProvider& provider) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw PreconditionError("cosine threshold must be in (0, 1]");
  std::string pair[] = {preprocess_term(term), preprocess_term(candidate_surface)};
  auto v = embed_batch(provider, pair);
  double score = cosine(v[0], v[1]);
  return {score, score >= threshold};
}

bool judge_llm(std::string_view term, std::string_view candidate_surface, ChatBackend& chat,
               const std::string& model) {
  ChatContext ctx{ChatTask::Judge, term, {}, candidate_surface};
  std::string reply = chat.complete(make_chat_request(model, build_judge_prompt(term, candidate_surface)), ctx);
  auto verdict = parse_judge_reply(reply);
  if (!verdict)
    throw JudgeError("unparseable equivalence verdict for ('" + std::string(term) + "', '" +
                     std::string(candidate_surface) + "'): '" + reply + "'");
  return *verdict;
}

std::string export_review_sheet(std::span<const ReviewRow> pending) {
  std::string out = "term,candidate,cosine,llm_verdict,human_verdict\n";
  for (const auto& r : pending) {
    std::string cells[] = {r.term, r.candidate, r.cosine ? fmt_full(*r.cosine) : "", opt_bool(r.llm_verdict),
                           opt_bool(r.human_verdict)};
    append_csv_row(out, cells);
  }
  return out;
}

HumanVerdicts import_review_sheet(std::string_view csv, std::span<const PairKey> known) {
  std::set<PairKey> known_set;
  for (const auto& [t, c] : known) known_set.insert({preprocess_term(t), preprocess_term(c)});
  CsvReader reader(csv);
  auto header_rec = reader.next();
  if (!header_rec) throw ParseError("empty review sheet", 0);
  CsvHeader header(*header_rec);
  const auto term_col = header.require("term");
  const auto cand_col = header.require("candidate");
  const auto human_col = header.require("human_verdict");

  HumanVerdicts out;
  std::vector<std::string> unknown;
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && trim(rec->fields[0]).empty()) continue;
    if (rec->fields.size() < header.size()) throw ParseError("review row has too few fields", rec->line);
    PairKey key{preprocess_term(rec->fields[term_col]), preprocess_term(rec->fields[cand_col])};
    if (!known_set.count(key)) {
      unknown.push_back("(" + key.first + ", " + key.second + ")");
      continue;
    }
    std::optional<bool> v;
    try {
      v = parse_yes_no(rec->fields[human_col]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), rec->line);
    }
    if (v) out[key] = *v;
  }
  if (!unknown.empty()) {
    std::string msg = "review sheet names unknown pairs:";
    for (const auto& u : unknown) msg += " " + u;
    throw Error(msg);
  }
  return out;
}

nlohmann::ordered_json verdicts_to_json(const HumanVerdicts& verdicts) {
  ojson arr = ojson::array();
  for (const auto& [key, v] : verdicts) arr.push_back({{"term", key.first}, {"candidate", key.second}, {"human_verdict", v}});
  return ojson{{"schema", 1}, {"verdicts", std::move(arr)}};
}

HumanVerdicts verdicts_from_json(const nlohmann::json& j) {
  HumanVerdicts out;
  try {
    for (const auto& v : j.at("verdicts"))
      out[{v.at("term").get<std::string>(), v.at("candidate").get<std::string>()}] = v.at("human_verdict").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed verdicts file: ") + e.what(), 0);
  }
  return out;
}

EquivalenceVerdict assess(const NormalizationResult& result, const GoldRecord& gold, const JudgeSettings& judges) {
  EquivalenceVerdict v;
  if (gold.malformed || !result.chosen_surface || result.chosen_surface->empty()) {
    v.reference_verdict = false;
    v.resolve();
    return v;
  }
  const std::string& chosen = *result.chosen_surface;
  if (judges.use_reference) v.reference_verdict = names_gold_concept(result, gold, judges.table);
  if (judges.cosine_provider) {
    auto [score, ok] = judge_cosine(result.input, chosen, judges.cosine_threshold, *judges.cosine_provider);
    v.cosine_score = score;
    v.cosine_verdict = ok;
  }
  if (judges.llm) v.llm_verdict = judge_llm(result.input, chosen, *judges.llm, judges.llm_model);
  if (judges.human) {
    auto it = judges.human->find({preprocess_term(result.input), preprocess_term(chosen)});
    if (it != judges.human->end()) v.human_verdict = it->second;
  }
  v.resolve();
  return v;
}

ScoredRun score_run(std::span<const NormalizationResult> results, std::span<const GoldRecord> gold,
                    const JudgeSettings& judges, const ScoreOptions& options) {
  std::unordered_map<std::string, std::size_t> by_term;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto [it, inserted] = by_term.try_emplace(preprocess_term(gold[i].term), i);
    if (!inserted) {
      const GoldRecord& a = gold[it->second];
      if (a.gold_id != gold[i].gold_id || a.malformed != gold[i].malformed)
        throw Error("conflicting gold records for term '" + gold[i].term + "'");
    }
  }

  ScoredRun run;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.error)
      throw Error("result for '" + r.input + "' carries an infrastructure error (" + *r.error +
                  "); re-run normalization to fill it in");
    auto it = by_term.find(preprocess_term(r.input));
    if (it == by_term.end()) {
      ++run.unmatched_results;
      continue;
    }
    const GoldRecord& g = gold[it->second];
    EquivalenceVerdict v = assess(r, g, judges);
    Outcome o = classify(r, g, v);
    run.counts.add(o, options.count_malformed_as_tn);
    run.terms.push_back({i, o, std::move(v)});
  }
  return run;
}

std::vector<SweepPoint> run_k_sweep(std::span<const std::string> terms, std::span<const GoldRecord> gold,
                                    const RunConfig& base, const TermIndex& index, std::span<const std::size_t> ks,
                                    const JudgeSettings& judges, const ScoreOptions& options) {
  if (ks.empty()) throw PreconditionError("k sweep needs at least one k");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1 || ks[i] > kMaxRagCandidates) throw PreconditionError("every k must be within 1..50");
    if (i && ks[i] <= ks[i - 1]) throw PreconditionError("ks must be strictly ascending");
  }
  std::vector<SweepPoint> points;
  for (std::size_t k : ks) {
    RunConfig cfg = base;
    cfg.mode = NormalizationMode::llm_rag(k);
    BatchOutput batch = run_batch(terms, cfg, &index);
    ScoredRun scored = score_run(batch.results, gold, judges, options);
    points.push_back({k, compute_metrics(scored.counts).accuracy, scored.counts});
  }
  return points;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::string out = "k,accuracy,tp,fp,fn\n";
  for (const auto& p : points)
    out += std::to_string(p.k) + "," + fmt_full(p.accuracy) + "," + std::to_string(p.counts.tp) + "," +
           std::to_string(p.counts.fp) + "," + std::to_string(p.counts.fn) + "\n";
  return out;
}

std::vector<DisagreementRow> report_disagreements(std::span<const NormalizationResult> rag,
                                                  std::span<const NormalizationResult> embed_only,
                                                  std::span<const GoldRecord> gold) {
  std::multiset<std::string> rag_terms, embed_terms;
  for (const auto& r : rag) rag_terms.insert(preprocess_term(r.input));
  for (const auto& r : embed_only) embed_terms.insert(preprocess_term(r.input));
  if (rag_terms != embed_terms) throw Error("RAG and embed-only runs cover different term sets");

  std::unordered_map<std::string, const NormalizationResult*> embed_by_term;
  for (const auto& r : embed_only) embed_by_term.try_emplace(preprocess_term(r.input), &r);
  std::unordered_map<std::string, const GoldRecord*> gold_by_term;
  for (const auto& g : gold) gold_by_term.try_emplace(preprocess_term(g.term), &g);

  std::vector<DisagreementRow> rows;
  for (std::size_t i = 0; i < rag.size(); ++i) {
    const auto& r = rag[i];
    const std::string key = preprocess_term(r.input);
    const NormalizationResult& e =
        (rag.size() == embed_only.size() && preprocess_term(embed_only[i].input) == key) ? embed_only[i]
                                                                                           : *embed_by_term.at(key);
    if (r.error || e.error || !r.chosen_id || !r.chosen_surface || !e.chosen_id || !e.cosine_of_choice) continue;
    if (*r.chosen_id == *e.chosen_id && fold_key(*r.chosen_surface) == fold_key(*e.chosen_surface)) continue;

    DisagreementRow row;
    row.term = r.input;
    row.argmax_surface = *e.chosen_surface;
    row.argmax_id = e.chosen_id->str();
    row.argmax_cosine = *e.cosine_of_choice;
    row.chosen_surface = *r.chosen_surface;
    row.chosen_id = r.chosen_id->str();
    row.chosen_cosine = r.cosine_of_choice;
    if (row.chosen_cosine) row.delta = row.argmax_cosine - *row.chosen_cosine;
    if (auto g = gold_by_term.find(key); g != gold_by_term.end() && g->second->gold_id) {
      row.argmax_correct = *e.chosen_id == *g->second->gold_id;
      row.chosen_correct = *r.chosen_id == *g->second->gold_id;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string disagreements_tsv(std::span<const DisagreementRow> rows) {
  std::string out =
      "term\targmax_surface\targmax_id\targmax_cs\tchosen_surface\tchosen_id\tchosen_cs\tdelta\targmax_correct\t"
      "chosen_correct\n";
  for (const auto& r : rows) {
    out += r.term + "\t" + r.argmax_surface + "\t" + r.argmax_id + "\t" + fmt_double(r.argmax_cosine, 2) + "\t" +
           r.chosen_surface + "\t" + r.chosen_id + "\t" + (r.chosen_cosine ? fmt_double(*r.chosen_cosine, 2) : "") +
           "\t" + (r.delta ? fmt_double(*r.delta, 2) : "") + "\t" + opt_bool(r.argmax_correct) + "\t" +
           opt_bool(r.chosen_correct) + "\n";
  }
  return out;
}

std::string metrics_table(std::span<const MethodMetrics> rows) {
  std::size_t width = std::string_view("Method").size();
  for (const auto& r : rows) width = std::max(width, r.method.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  std::string out = pad("Method", width) + "  Accuracy  F1    Recall  Precision  N\n";
  for (const auto& r : rows) {
    const auto& m = r.report;
    out += pad(r.method, width) + "  " + pad(fmt_double(round2(m.accuracy), 2), 8) + "  " +
           pad(fmt_double(round2(m.f1), 2), 4) + "  " + pad(fmt_double(round2(m.recall), 2), 6) + "  " +
           pad(fmt_double(round2(m.precision), 2), 9) + "  " + std::to_string(m.counts.n_scored) + "\n";
  }
  return out;
}

nlohmann::ordered_json metrics_json(std::span<const MethodMetrics> rows) {
  ojson arr = ojson::array();
  for (const auto& r : rows) {
    const auto& m = r.report;
    ojson metric = {
        {"accuracy", {{"value", m.accuracy}, {"rounded", round2(m.accuracy)}, {"undefined", m.accuracy_undefined}}},
        {"f1", {{"value", m.f1}, {"rounded", round2(m.f1)}, {"undefined", m.f1_undefined}}},
        {"recall", {{"value", m.recall}, {"rounded", round2(m.recall)}, {"undefined", m.recall_undefined}}},
        {"precision", {{"value", m.precision}, {"rounded", round2(m.precision)}, {"undefined", m.precision_undefined}}}};
    arr.push_back({{"method", r.method},
                   {"counts",
                    {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn}, {"tn", m.counts.tn},
                     {"n_scored", m.counts.n_scored}}},
                   {"metrics", std::move(metric)}});
  }
  return ojson{{"schema", 1}, {"methods", std::move(arr)}};
}

}  // namespace ontonorm
