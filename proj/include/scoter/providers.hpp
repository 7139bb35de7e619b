#pragma once

// SPDX-License-Identifier: Apache-2.0

// Text-generation and sentence-embedding clients behind one interface:
// an HTTP service client for real runs, a deterministic fixture provider
// for tests, and a content-addressed disk cache that can wrap either.
//
// Embeddings are L2-normalized at this boundary, so cosine similarity
// reduces to a dot product everywhere downstream.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace scoter::providers {

struct GenRequest {
  std::string prompt;
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 2048;
  std::optional<std::int64_t> seed;
};

struct EmbeddingVector {
  std::vector<double> values;  // unit L2 norm
  std::string model_tag;

  double dot(const EmbeddingVector& other) const;
};

using CacheKey = std::string;  // 64 hex chars

/// Canonical JSON of a request: sorted fields, round-trip float formatting.
/// Identical logical requests canonicalize identically.
std::string canonical_gen_request(const GenRequest& req);
std::string canonical_embed_request(const std::string& text);

/// SHA-256 of (provider tag || canonical request).
CacheKey gen_cache_key(std::string_view provider_tag, const GenRequest& req);
CacheKey embed_cache_key(std::string_view provider_tag, const std::string& text);

// ---------------------------------------------------------------------------

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string tag() const = 0;
  /// Raw completion text. Validates request invariants
  /// (temperature >= 0, 0 <= top_p <= 1) before dispatch.
  virtual std::string generate(const GenRequest& req) = 0;
  /// Order-preserving; every vector is unit-normalized. A dimension drift
  /// within the batch throws ProtocolError.
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

// ---------------------------------------------------------------------------
// Fixture provider: bit-deterministic lookups from a JSONL file of
// {"key":..., "kind":"gen"|"emb", "value":...}. Missing keys are errors.
// ---------------------------------------------------------------------------

class FixtureProvider : public Provider {
 public:
  FixtureProvider() = default;
  explicit FixtureProvider(const std::string& fixture_path);

  std::string tag() const override { return "fixture"; }
  std::string generate(const GenRequest& req) override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

  // Programmatic fixture construction (used by tests and fixture tooling).
  void add_generation(const GenRequest& req, const std::string& completion);
  void add_embedding(const std::string& text, std::vector<double> values);
  void save(const std::string& fixture_path) const;

  std::size_t generation_count() const { return generations_.size(); }
  std::size_t embedding_count() const { return embeddings_.size(); }

 private:
  std::map<CacheKey, std::string> generations_;
  std::map<CacheKey, std::vector<double>> embeddings_;
};

// ---------------------------------------------------------------------------
// HTTP provider. Wire format:
//   POST <base>/generate {"prompt","temperature","top_p","max_tokens","seed"?}
//     -> {"text": ...}
//   POST <base>/embed {"texts":[...]} -> {"vectors":[[...],...]}
// Transport failures and 5xx are retried (default 3 attempts, exponential
// backoff from 500 ms); anything else malformed throws ProtocolError.
// ---------------------------------------------------------------------------

struct HttpProviderConfig {
  std::string base_url;   // falls back to $PROVIDER_URL
  std::string api_key;    // falls back to $PROVIDER_KEY
  std::string model_tag = "http";
  int max_attempts = 3;
  int backoff_ms = 500;
  int timeout_sec = 120;
};

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);

  std::string tag() const override { return config_.model_tag; }
  std::string generate(const GenRequest& req) override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

 private:
  std::string post_json(const std::string& path, const std::string& body);
  HttpProviderConfig config_;
};

// ---------------------------------------------------------------------------
// Disk cache: cache/<first 2 hex>/<key>, atomic write-temp-then-rename.
// ---------------------------------------------------------------------------

class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path root);
  std::optional<std::string> load(const CacheKey& key) const;
  void store(const CacheKey& key, std::string_view value) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path path_for(const CacheKey& key) const;
  std::filesystem::path root_;
};

/// Wraps a provider with the disk cache; repeated identical requests are
/// answered without touching the delegate.
class CachingProvider : public Provider {
 public:
  CachingProvider(std::shared_ptr<Provider> delegate, DiskCache cache);

  std::string tag() const override { return delegate_->tag(); }
  std::string generate(const GenRequest& req) override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::shared_ptr<Provider> delegate_;
  DiskCache cache_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Normalizes in place; throws ProtocolError on a zero vector or empty batch,
/// and on dimension drift across the batch.
void normalize_batch(std::vector<EmbeddingVector>& batch);

}  // namespace scoter::providers
