#pragma once

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "polscale/hash.hpp"
#include "polscale/jsonl.hpp"
#include "polscale/retry.hpp"

namespace polscale::embed {

struct EmbeddingVector {
  std::vector<double> values;
  std::string source_id;  // what was embedded (hash or caller-chosen id)

  size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

inline void check_finite(const EmbeddingVector& v, const std::string& where) {
  for (double x : v.values)
    if (!std::isfinite(x))
      throw ProviderError(where + ": non-finite embedding component");
}

class IEmbeddingClient {
 public:
  virtual ~IEmbeddingClient() = default;
  // One batch round trip; result is positional with input.
  virtual std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) = 0;
  virtual std::string model_id() const = 0;
  virtual int batch_size() const { return 64; }
  // Expected dimension; 0 means "whatever the provider returns".
  virtual int dim() const { return 0; }
};

// text -> vector lookup table, for worlds where every embedding is planted.
class PlantedEmbeddingClient final : public IEmbeddingClient {
 public:
  explicit PlantedEmbeddingClient(const std::filesystem::path& table_file) {
    json j;
    try {
      j = json::parse(read_file(table_file));
    } catch (const json::exception& e) {
      throw ConfigError("embedding table " + table_file.string() + ": " +
                        e.what());
    }
    model_ = j.value("model", "planted");
    dim_ = j.value("dim", 0);
    for (const auto& [text, vec] : j.at("vectors").items())
      table_[text] = vec.get<std::vector<double>>();
  }

  std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it == table_.end())
        throw DataError("no planted embedding for text: '" +
                        (t.size() > 80 ? t.substr(0, 80) + "..." : t) + "'");
      out.push_back(it->second);
    }
    return out;
  }

  std::string model_id() const override { return model_; }
  int dim() const override { return dim_; }

 private:
  std::string model_;
  int dim_ = 0;
  std::map<std::string, std::vector<double>> table_;
};

// Deterministic unit vector from the text digest. Good enough to exercise
// plumbing where geometry does not matter.
class HashEmbeddingClient final : public IEmbeddingClient {
 public:
  explicit HashEmbeddingClient(int dim) : dim_(dim) {
    if (dim_ < 2) throw ConfigError("hash embedding dim must be >= 2");
  }

  std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(vector_for(t));
    return out;
  }

  std::string model_id() const override {
    return "mock-hash-" + std::to_string(dim_);
  }
  int dim() const override { return dim_; }

 private:
  std::vector<double> vector_for(const std::string& text) const {
    std::vector<double> v;
    v.reserve(dim_);
    std::string seed = text;
    while (static_cast<int>(v.size()) < dim_) {
      auto bytes = sha256_bytes(seed);
      for (size_t i = 0; i + 8 <= bytes.size() && static_cast<int>(v.size()) < dim_;
           i += 8) {
        uint64_t u = 0;
        for (size_t b = 0; b < 8; ++b) u = (u << 8) | bytes[i + b];
        // map to [-1, 1)
        v.push_back(static_cast<double>(u) / 9223372036854775808.0 - 1.0);
      }
      seed += "#";
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  }

  int dim_;
};

class HttpEmbeddingClient final : public IEmbeddingClient {
 public:
  HttpEmbeddingClient(std::string base_url, std::string model, int dim,
                      int batch_size, std::string api_key)
      : base_url_(std::move(base_url)),
        model_(std::move(model)),
        dim_(dim),
        batch_size_(batch_size > 0 ? batch_size : 64),
        api_key_(std::move(api_key)) {}

  std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) override {
    return with_retries(retry_, [&] { return post(texts); });
  }

  std::string model_id() const override { return model_; }
  int dim() const override { return dim_; }
  int batch_size() const override { return batch_size_; }

  RetryPolicy retry_{};

 private:
  std::vector<std::vector<double>> post(const std::vector<std::string>& texts) {
    httplib::Client cli(base_url_);
    cli.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);
    json body{{"model", model_}, {"input", texts}};
    auto res = cli.Post("/v1/embeddings", headers, body.dump(), "application/json");
    if (!res) throw ProviderError("embedding provider unreachable: " + base_url_);
    if (res->status != 200)
      throw ProviderError("embedding provider HTTP " + std::to_string(res->status));
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("data") ||
        !reply["data"].is_array())
      throw ProviderError("embedding protocol: missing data array");
    if (reply["data"].size() != texts.size())
      throw ProviderError("embedding protocol: sent " +
                          std::to_string(texts.size()) + " texts, got " +
                          std::to_string(reply["data"].size()) + " vectors");
    std::vector<std::vector<double>> out(texts.size());
    size_t pos = 0;
    for (const auto& item : reply["data"]) {
      if (!item.contains("embedding"))
        throw ProviderError("embedding protocol: entry without embedding");
      size_t idx = item.contains("index") ? item["index"].get<size_t>() : pos;
      if (idx >= out.size() || !out[idx].empty())
        throw ProviderError("embedding protocol: bad or duplicate index");
      out[idx] = item["embedding"].get<std::vector<double>>();
      ++pos;
    }
    return out;
  }

  std::string base_url_;
  std::string model_;
  int dim_;
  int batch_size_;
  std::string api_key_;
};

// endpoint forms:
//   mock:planted:<file>   lookup table
//   mock:hash:<dim>       digest-derived unit vectors
//   http(s)://...         POST /v1/embeddings (bearer auth optional)
inline std::shared_ptr<IEmbeddingClient> make_embedding_client(
    const std::string& endpoint, const std::string& model = "",
    int dim = 0, int batch_size = 64, const std::string& api_key = "") {
  if (endpoint.rfind("mock:planted:", 0) == 0)
    return std::make_shared<PlantedEmbeddingClient>(endpoint.substr(13));
  if (endpoint.rfind("mock:hash:", 0) == 0)
    return std::make_shared<HashEmbeddingClient>(std::stoi(endpoint.substr(10)));
  if (endpoint.rfind("http", 0) == 0)
    return std::make_shared<HttpEmbeddingClient>(endpoint, model, dim,
                                                 batch_size, api_key);
  throw ConfigError("unrecognized embedding endpoint: " + endpoint);
}

// Embeds texts with batching and an optional on-disk cache keyed by
// (model id, text digest). Results are positional with the input.
inline std::vector<EmbeddingVector> embed_texts(
    const std::vector<std::string>& texts, IEmbeddingClient& client,
    const std::filesystem::path& cache_dir = {}) {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<size_t> pending;
  for (size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) throw DataError("cannot embed an empty text");
    out[i].source_id = sha256_hex(texts[i]);
    if (cache_dir.empty()) {
      pending.push_back(i);
      continue;
    }
    auto f = cache_dir / (sha256_hex(client.model_id() + "\n" + texts[i]) + ".json");
    if (std::filesystem::exists(f)) {
      out[i].values = json::parse(read_file(f)).get<std::vector<double>>();
    } else {
      pending.push_back(i);
    }
  }

  size_t bs = static_cast<size_t>(client.batch_size());
  for (size_t lo = 0; lo < pending.size(); lo += bs) {
    size_t hi = std::min(lo + bs, pending.size());
    std::vector<std::string> batch;
    for (size_t k = lo; k < hi; ++k) batch.push_back(texts[pending[k]]);
    auto vecs = client.embed_batch(batch);
    if (vecs.size() != batch.size())
      throw ProviderError("embedding protocol: batch arity mismatch");
    for (size_t k = lo; k < hi; ++k) {
      out[pending[k]].values = std::move(vecs[k - lo]);
      if (!cache_dir.empty()) {
        std::filesystem::create_directories(cache_dir);
        auto f = cache_dir /
                 (sha256_hex(client.model_id() + "\n" + texts[pending[k]]) + ".json");
        write_file(f, json(out[pending[k]].values).dump());
      }
    }
  }

  size_t expect = out.empty() ? 0 : out[0].dim();
  if (client.dim() > 0) expect = static_cast<size_t>(client.dim());
  for (const auto& v : out) {
    check_finite(v, "embed_texts");
    if (v.dim() == 0 || v.dim() != expect)
      throw ProviderError("embedding protocol: inconsistent dimension " +
                          std::to_string(v.dim()) + " vs " +
                          std::to_string(expect));
  }
  return out;
}

inline EmbeddingVector mean_vector(const std::vector<EmbeddingVector>& vs) {
  if (vs.empty()) throw DataError("mean of zero vectors");
  size_t d = vs[0].dim();
  EmbeddingVector m;
  m.values.assign(d, 0.0);
  for (const auto& v : vs) {
    if (v.dim() != d) throw DataError("mean over mixed dimensions");
    for (size_t i = 0; i < d; ++i) m.values[i] += v.values[i];
  }
  for (double& x : m.values) x /= static_cast<double>(vs.size());
  m.source_id = "mean";
  return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim() || a.dim() == 0)
    throw DataError("cosine over mismatched dimensions");
  double na = norm(a.values), nb = norm(b.values);
  if (na == 0.0 || nb == 0.0) throw DataError("cosine with zero vector");
  return dot(a.values, b.values) / (na * nb);
}

}  // namespace polscale::embed
