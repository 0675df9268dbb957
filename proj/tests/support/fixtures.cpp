#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include "ontonorm/csv.hpp"
#include "ontonorm/io.hpp"
#include "ontonorm/pipeline.hpp"

#ifndef ONTONORM_SOURCE_DIR
#error "ONTONORM_SOURCE_DIR must be defined"
#endif

namespace ontonorm::testing {
namespace {

constexpr const char* kWords[] = {"ataxia", "tremor", "weakness", "reflex", "gait",    "speech",
                                  "fundus", "optic",  "muscle",   "spastic", "sensory", "tone"};

std::string random_surface(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> word(0, std::size(kWords) - 1);
  std::uniform_int_distribution<int> len(1, 2);
  std::string s = kWords[word(rng)];
  if (len(rng) == 2) s += std::string(" ") + kWords[word(rng)];
  return s;
}

OntoId synthetic_id(std::size_t n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "HP:%07zu", 9000000 + n);
  return OntoId::parse(buf);
}

Vector quantized_vector(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_int_distribution<int> q(-1, 2);
  Vector v(dim);
  do {
    for (auto& x : v) x = static_cast<float>(q(rng));
  } while (l2_norm(v) == 0.0);
  return v;
}

std::string csv_vector(std::span<const float> v) {
  std::string out;
  char buf[32];
  for (float x : v) {
    std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(x));
    out += buf;
  }
  return out;
}

}  // namespace

std::filesystem::path source_dir() { return ONTONORM_SOURCE_DIR; }

std::string read_source_file(const std::string& relative) { return read_file(source_dir() / relative); }

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "ontonorm-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Vector random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  Vector v(dim);
  do {
    for (auto& x : v) x = g(rng);
  } while (l2_norm(v) == 0.0);
  return v;
}

RetrievalFixture random_retrieval_fixture(std::mt19937_64& rng, std::size_t n_entries, std::size_t dim) {
  std::uniform_int_distribution<int> n_syn(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ConceptRecord> concepts;
  std::size_t count = 0;
  while (count < n_entries) {
    ConceptRecord c{synthetic_id(concepts.size() + 1), "", {}};
    c.label = random_surface(rng) + (u(rng) < 0.5 ? "" : " " + std::to_string(concepts.size() % 7));
    int s = std::min<int>(n_syn(rng), static_cast<int>(n_entries - count - 1));
    for (int j = 0; j < s; ++j) {
      std::string syn = random_surface(rng) + " syn";
      if (std::find(c.synonyms.begin(), c.synonyms.end(), syn) == c.synonyms.end()) c.synonyms.push_back(syn);
    }
    count += 1 + c.synonyms.size();
    concepts.push_back(std::move(c));
  }
  EntryTable table = EntryTable::build(std::move(concepts));

  const bool quantize = dim <= 8;
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!rows.empty() && u(rng) < 0.15) {
      std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
      rows.push_back(rows[pick(rng)]);
    } else {
      rows.push_back(quantize ? quantized_vector(rng, dim) : random_vector(rng, dim));
    }
  }
  EmbeddingMatrix matrix = EmbeddingMatrix::from_rows(rows, "random");
  return {std::make_unique<TermIndex>(std::move(table), std::move(matrix))};
}

Vector random_query(std::mt19937_64& rng, const TermIndex& index) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  if (r < 0.3) {
    std::uniform_int_distribution<std::size_t> pick(0, index.size() - 1);
    auto row = index.matrix().row(pick(rng));
    Vector v(row.begin(), row.end());
    for (auto& x : v) x *= 3.0f;
    return v;
  }
  if (r < 0.5 && index.dim() <= 8) return quantized_vector(rng, index.dim());
  return random_vector(rng, index.dim());
}

Corpus make_corpus(std::size_t n_concepts, std::size_t n_terms, std::size_t dim, std::uint64_t seed,
                   double noise) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ConceptRecord> concepts;
  for (std::size_t i = 0; i < n_concepts; ++i) {
    ConceptRecord c{synthetic_id(i + 1), "", {}};
    c.label = "concept " + std::to_string(i + 1) + " " + kWords[i % std::size(kWords)];
    if (i % 3 == 0) c.synonyms.push_back("synonym " + std::to_string(i + 1));
    concepts.push_back(std::move(c));
  }
  EntryTable table = EntryTable::build(std::move(concepts));
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < table.size(); ++i) rows.push_back(normalized(random_vector(rng, dim)));
  std::vector<Vector> entry_rows = rows;
  EmbeddingMatrix matrix = EmbeddingMatrix::from_rows(rows, "corpus");

  Corpus c;
  c.queries = std::make_shared<ReplayProvider>("corpus-queries");
  std::uniform_int_distribution<std::size_t> pick(0, table.size() - 1);
  std::normal_distribution<float> g(0.0f, 1.0f);
  const float sigma = static_cast<float>(noise / std::sqrt(static_cast<double>(dim)));
  for (std::size_t t = 0; t < n_terms; ++t) {
    std::size_t target = pick(rng);
    Vector q = entry_rows[target];
    for (auto& x : q) x += sigma * g(rng);
    std::string term = "observed " + std::to_string(t + 1) + " " + table[target].surface;
    GoldRecord gr;
    gr.term = term;
    gr.malformed = u(rng) < 0.05;
    if (!gr.malformed) {
      gr.gold_id = table[target].id;
      gr.gold_surface = table[target].surface;
    }
    c.queries->add(term, q);
    c.terms.push_back(term);
    c.term_vectors.push_back(q);
    c.gold.push_back(std::move(gr));
  }
  c.index = std::make_unique<TermIndex>(std::move(table), std::move(matrix));
  return c;
}

SweepFixture make_sweep_fixture(std::span<const std::size_t> ranks, std::size_t n_concepts, std::size_t dim) {
  std::vector<ConceptRecord> concepts;
  std::vector<Vector> rows;
  for (std::size_t j = 0; j < n_concepts; ++j) {
    char label[48];
    std::snprintf(label, sizeof label, "sweep concept %03zu", j + 1);
    concepts.push_back({synthetic_id(j + 1), label, {}});
    const double s = 0.99 - 0.01 * static_cast<double>(j);
    Vector v(dim, 0.0f);
    v[0] = static_cast<float>(s);
    v[1 + j % (dim - 1)] = static_cast<float>(std::sqrt(1.0 - s * s));
    rows.push_back(std::move(v));
  }
  EntryTable table = EntryTable::build(std::move(concepts));
  EmbeddingMatrix matrix = EmbeddingMatrix::from_rows(rows, "sweep");

  SweepFixture f;
  f.queries = std::make_shared<ReplayProvider>("sweep-queries");
  Vector q(dim, 0.0f);
  q[0] = 1.0f;
  for (std::size_t r : ranks) {
    if (r < 1 || r > n_concepts) throw std::invalid_argument("rank out of range");
    const auto& entry = table[r - 1];
    std::string term;
    for (char ch : entry.surface) term.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    f.queries->add(term, q);
    f.terms.push_back(term);
    f.gold.push_back({term, entry.id, entry.surface, false});
  }
  f.index = std::make_unique<TermIndex>(std::move(table), std::move(matrix));
  return f;
}

std::string replay_csv(std::span<const std::string> texts, std::span<const Vector> vectors) {
  std::string out = "text";
  for (std::size_t d = 0; d < vectors.front().size(); ++d) out += ",v" + std::to_string(d);
  out += "\n";
  for (std::size_t i = 0; i < texts.size(); ++i) out += csv_escape(texts[i]) + csv_vector(vectors[i]) + "\n";
  return out;
}

std::string gold_csv(std::span<const GoldRecord> gold) {
  std::string out = "term,gold_id,gold_surface,malformed\n";
  for (const auto& g : gold) {
    std::vector<std::string> fields = {g.term, g.gold_id ? g.gold_id->str() : "", g.gold_surface,
                                       g.malformed ? "1" : "0"};
    append_csv_row(out, fields);
  }
  return out;
}

}  // namespace ontonorm::testing
