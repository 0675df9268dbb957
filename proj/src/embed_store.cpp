#include "ontonorm/embed_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "ontonorm/csv.hpp"
#include "ontonorm/error.hpp"
#include "ontonorm/io.hpp"
#include "ontonorm/text.hpp"

namespace ontonorm {
namespace {

bool all_finite(std::span<const float> v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

float parse_float(const std::string& raw) {
  std::string s = trim(raw);
  float value = 0.0f;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec == std::errc::result_out_of_range) return value > 0 ? INFINITY : -INFINITY;
  if (ec != std::errc() || ptr != last || s.empty()) throw std::invalid_argument("not a number: '" + s + "'");
  return value;
}

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double l2_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw DimensionError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw PreconditionError("cosine of a zero vector is undefined");
  double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

Vector normalized(std::span<const float> v) {
  if (v.empty()) throw PreconditionError("empty vector");
  if (!all_finite(v)) throw PreconditionError("vector has non-finite components");
  double n = l2_norm(v);
  if (n == 0.0) throw PreconditionError("zero vector");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
  return out;
}

EmbeddingMatrix EmbeddingMatrix::from_rows(std::span<const Vector> rows, std::string provenance) {
  if (rows.empty()) throw PreconditionError("embedding matrix needs at least one row");
  EmbeddingMatrix m;
  m.dim_ = rows.front().size();
  if (m.dim_ == 0) throw PreconditionError("embedding dimension must be positive");
  m.data_.reserve(rows.size() * m.dim_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.dim_)
      throw LoadError("dimension " + std::to_string(rows[i].size()) + " differs from " + std::to_string(m.dim_),
                      i + 1);
    if (!all_finite(rows[i])) throw LoadError("non-finite component", i + 1);
    if (l2_norm(rows[i]) == 0.0) throw LoadError("zero vector", i + 1);
    Vector n = normalized(rows[i]);
    m.data_.insert(m.data_.end(), n.begin(), n.end());
  }
  m.provenance_ = std::move(provenance);
  return m;
}

EmbeddingMatrix parse_embedding_csv(std::string_view csv, const EntryTable& table, std::string provenance) {
  CsvReader reader(csv);
  auto header = reader.next();
  if (!header || header->fields.size() < 3 || trim(header->fields[0]) != "surface" ||
      trim(header->fields[1]) != "id")
    throw LoadError("header must be surface,id,v0,...", 0);
  const std::size_t dim = header->fields.size() - 2;
  for (std::size_t j = 0; j < dim; ++j)
    if (trim(header->fields[j + 2]) != "v" + std::to_string(j))
      throw LoadError("header column " + std::to_string(j + 2) + " must be v" + std::to_string(j), 0);

  std::vector<Vector> rows;
  rows.reserve(table.size());
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && trim(rec->fields[0]).empty()) continue;
    const std::size_t row = rows.size() + 1;
    if (row > table.size())
      throw LoadError("more rows than the entry table (" + std::to_string(table.size()) + ")", row);
    if (rec->fields.size() != dim + 2)
      throw LoadError("expected " + std::to_string(dim + 2) + " fields, got " + std::to_string(rec->fields.size()),
                      row);
    const EntryTerm& entry = table[row - 1];
    auto id = OntoId::try_parse(rec->fields[1]);
    if (rec->fields[0] != entry.surface || !id || *id != entry.id)
      throw LoadError("key (" + rec->fields[0] + ", " + rec->fields[1] + ") does not match entry (" +
                          entry.surface + ", " + entry.id.str() + ")",
                      row);
    Vector v(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      try {
        v[j] = parse_float(rec->fields[j + 2]);
      } catch (const std::invalid_argument& e) {
        throw LoadError(e.what(), row);
      }
    }
    rows.push_back(std::move(v));
  }
  if (rows.size() != table.size())
    throw LoadError("row count " + std::to_string(rows.size()) + " does not match entry table size " +
                        std::to_string(table.size()),
                    0);
  return EmbeddingMatrix::from_rows(rows, std::move(provenance));
}

EmbeddingMatrix load_embedding_file(const std::filesystem::path& path, const EntryTable& table) {
  return parse_embedding_csv(read_file(path), table, "file:" + path.filename().string());
}

std::string serialize_embedding_csv(const EntryTable& table, const EmbeddingMatrix& matrix) {
  if (table.size() != matrix.rows()) throw PreconditionError("table and matrix are not aligned");
  std::string out = "surface,id";
  for (std::size_t j = 0; j < matrix.dim(); ++j) out += ",v" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += csv_escape(table[i].surface);
    out += ',';
    out += table[i].id.str();
    for (float x : matrix.row(i)) {
      out += ',';
      out += format_float(x);
    }
    out += '\n';
  }
  return out;
}

std::shared_ptr<ReplayProvider> ReplayProvider::from_csv(std::string_view csv, std::string provenance) {
  CsvReader reader(csv);
  auto header = reader.next();
  if (!header || header->fields.size() < 2) throw LoadError("replay file needs a header", 0);
  std::size_t first_value = 1;
  if (trim(header->fields[0]) == "surface" && header->fields.size() > 2 && trim(header->fields[1]) == "id")
    first_value = 2;
  else if (trim(header->fields[0]) != "text")
    throw LoadError("replay header must start with 'text' or 'surface,id'", 0);
  const std::size_t dim = header->fields.size() - first_value;

  auto provider = std::make_shared<ReplayProvider>(std::move(provenance));
  std::size_t row = 0;
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && trim(rec->fields[0]).empty()) continue;
    ++row;
    if (rec->fields.size() != dim + first_value) throw LoadError("wrong field count", row);
    Vector v(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      try {
        v[j] = parse_float(rec->fields[j + first_value]);
      } catch (const std::invalid_argument& e) {
        throw LoadError(e.what(), row);
      }
    }
    if (!all_finite(v)) throw LoadError("non-finite component", row);
    if (l2_norm(v) == 0.0) throw LoadError("zero vector", row);
    provider->add(rec->fields[0], std::move(v));
  }
  return provider;
}

std::shared_ptr<ReplayProvider> ReplayProvider::from_file(const std::filesystem::path& path) {
  return from_csv(read_file(path), path.filename().string());
}

std::shared_ptr<ReplayProvider> ReplayProvider::from_matrix(const EntryTable& table, const EmbeddingMatrix& matrix) {
  auto provider = std::make_shared<ReplayProvider>(matrix.provenance());
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto r = matrix.row(i);
    provider->add(table[i].surface, Vector(r.begin(), r.end()));
  }
  return provider;
}

void ReplayProvider::add(std::string_view text, Vector v) {
  vectors_.try_emplace(collapse_whitespace(text), std::move(v));
}

std::vector<Vector> ReplayProvider::embed(std::span<const std::string> terms) {
  std::vector<Vector> out;
  out.reserve(terms.size());
  for (const auto& t : terms) {
    auto it = vectors_.find(collapse_whitespace(t));
    if (it == vectors_.end()) throw ProviderError("no replay vector for '" + t + "'", false);
    out.push_back(it->second);
  }
  return out;
}

std::vector<Vector> HttpEmbeddingProvider::embed(std::span<const std::string> terms) {
  nlohmann::json body = {{"model", config_.model}, {"input", terms}};
  detail::HttpCall call;
  call.base_url = config_.base_url;
  call.path = config_.path;
  call.body = body.dump();
  if (!config_.token.empty()) call.headers.emplace_back("Authorization", "Bearer " + config_.token);
  detail::RetryPolicy policy;
  policy.max_retries = config_.max_retries;
  policy.backoff_base_ms = config_.backoff_base_ms;
  policy.timeout_ms = config_.timeout_ms;

  detail::HttpReply reply;
  try {
    reply = detail::send_with_retry(call, policy, &retries_);
  } catch (const TransportError& e) {
    throw ProviderError(std::string("embedding request failed: ") + e.what(), e.retryable());
  }

  std::vector<Vector> out(terms.size());
  try {
    auto j = nlohmann::json::parse(reply.body);
    const auto& data = j.at("data");
    if (data.size() != terms.size())
      throw ProviderError("embedding reply has " + std::to_string(data.size()) + " items for " +
                              std::to_string(terms.size()) + " inputs",
                          false);
    std::vector<bool> filled(terms.size(), false);
    for (std::size_t n = 0; n < data.size(); ++n) {
      const auto& item = data[n];
      std::size_t idx = item.contains("index") ? item.at("index").get<std::size_t>() : n;
      if (idx >= terms.size() || filled[idx]) throw ProviderError("embedding reply has a bad index", false);
      out[idx] = item.at("embedding").get<Vector>();
      filled[idx] = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed embedding reply: ") + e.what(), false);
  }
  return out;
}

std::vector<Vector> embed_batch(EmbeddingProvider& provider, std::span<const std::string> terms) {
  if (terms.empty()) throw PreconditionError("embed_batch needs at least one term");
  for (const auto& t : terms)
    if (trim(t).empty()) throw PreconditionError("cannot embed an empty string");

  std::vector<Vector> raw = provider.embed(terms);
  if (raw.size() != terms.size())
    throw ProviderError("provider returned " + std::to_string(raw.size()) + " vectors for " +
                            std::to_string(terms.size()) + " terms",
                        false);
  std::vector<Vector> out;
  out.reserve(raw.size());
  const std::size_t dim = raw.front().size();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].size() != dim)
      throw DimensionError("dimension drift within a batch: " + std::to_string(raw[i].size()) + " vs " +
                           std::to_string(dim));
    try {
      out.push_back(normalized(raw[i]));
    } catch (const PreconditionError& e) {
      throw ProviderError("provider vector for '" + terms[i] + "': " + e.what(), false);
    }
  }
  return out;
}

}  // namespace ontonorm
