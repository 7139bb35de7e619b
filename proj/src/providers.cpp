// SPDX-License-Identifier: Apache-2.0

#include "scoter/providers.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "scoter/common.hpp"
#include "scoter/hash.hpp"

namespace scoter::providers {

using nlohmann::json;

double EmbeddingVector::dot(const EmbeddingVector& other) const {
  if (values.size() != other.values.size()) {
    throw ShapeError("embedding dot: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * other.values[i];
  return s;
}

// ---------------------------------------------------------------------------
// Canonicalization and keys
// ---------------------------------------------------------------------------

namespace {

void validate(const GenRequest& req) {
  if (req.temperature < 0.0) throw ProtocolError("generate: temperature < 0");
  if (req.top_p < 0.0 || req.top_p > 1.0) throw ProtocolError("generate: top_p outside [0,1]");
  if (req.max_tokens <= 0) throw ProtocolError("generate: max_tokens <= 0");
}

}  // namespace

std::string canonical_gen_request(const GenRequest& req) {
  // json objects sort keys; doubles dump with round-trip precision, so
  // 0.7 and 0.70 canonicalize identically
  json j;
  j["prompt"] = req.prompt;
  j["temperature"] = req.temperature;
  j["top_p"] = req.top_p;
  j["max_tokens"] = req.max_tokens;
  if (req.seed) j["seed"] = *req.seed;
  return j.dump();
}

std::string canonical_embed_request(const std::string& text) {
  json j;
  j["text"] = text;
  return j.dump();
}

CacheKey gen_cache_key(std::string_view provider_tag, const GenRequest& req) {
  return sha256_hex(std::string(provider_tag) + "|gen|" + canonical_gen_request(req));
}

CacheKey embed_cache_key(std::string_view provider_tag, const std::string& text) {
  return sha256_hex(std::string(provider_tag) + "|emb|" + canonical_embed_request(text));
}

void normalize_batch(std::vector<EmbeddingVector>& batch) {
  if (batch.empty()) throw ProtocolError("embed: empty batch");
  const std::size_t dim = batch.front().values.size();
  for (auto& v : batch) {
    if (v.values.size() != dim) {
      throw ProtocolError("embed: dimension drift within batch (" +
                          std::to_string(v.values.size()) + " vs " +
                          std::to_string(dim) + ")");
    }
    double norm = 0.0;
    for (double x : v.values) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw ProtocolError("embed: zero or non-finite vector");
    }
    for (double& x : v.values) x /= norm;
  }
}

// ---------------------------------------------------------------------------
// FixtureProvider
// ---------------------------------------------------------------------------

FixtureProvider::FixtureProvider(const std::string& fixture_path) {
  std::ifstream is(fixture_path);
  if (!is) throw DataError("fixtures: cannot open " + fixture_path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string kind = j.at("kind").get<std::string>();
    const std::string key = j.at("key").get<std::string>();
    if (kind == "gen") {
      generations_[key] = j.at("value").get<std::string>();
    } else if (kind == "emb") {
      embeddings_[key] = j.at("value").get<std::vector<double>>();
    } else {
      throw DataError("fixtures: unknown kind " + kind);
    }
  }
}

std::string FixtureProvider::generate(const GenRequest& req) {
  validate(req);
  const auto key = gen_cache_key(tag(), req);
  auto it = generations_.find(key);
  if (it == generations_.end()) {
    throw MissingFixtureError("fixture generate: no entry for key " + key);
  }
  return it->second;
}

std::vector<EmbeddingVector> FixtureProvider::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) throw ProtocolError("embed: empty batch");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const auto key = embed_cache_key(tag(), text);
    auto it = embeddings_.find(key);
    if (it == embeddings_.end()) {
      throw MissingFixtureError("fixture embed: no entry for text \"" + text + "\"");
    }
    out.push_back(EmbeddingVector{it->second, tag()});
  }
  normalize_batch(out);
  return out;
}

void FixtureProvider::add_generation(const GenRequest& req,
                                     const std::string& completion) {
  generations_[gen_cache_key(tag(), req)] = completion;
}

void FixtureProvider::add_embedding(const std::string& text,
                                    std::vector<double> values) {
  embeddings_[embed_cache_key(tag(), text)] = std::move(values);
}

void FixtureProvider::save(const std::string& fixture_path) const {
  std::ofstream os(fixture_path, std::ios::trunc);
  if (!os) throw DataError("fixtures: cannot write " + fixture_path);
  for (const auto& [key, value] : generations_) {
    json j;
    j["key"] = key;
    j["kind"] = "gen";
    j["value"] = value;
    os << j.dump() << '\n';
  }
  for (const auto& [key, value] : embeddings_) {
    json j;
    j["key"] = key;
    j["kind"] = "emb";
    j["value"] = value;
    os << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// HttpProvider
// ---------------------------------------------------------------------------

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    if (const char* env = std::getenv("PROVIDER_URL")) config_.base_url = env;
  }
  if (config_.api_key.empty()) {
    if (const char* env = std::getenv("PROVIDER_KEY")) config_.api_key = env;
  }
  if (config_.base_url.empty()) {
    throw ConfigError("http provider: no base url (set PROVIDER_URL)");
  }
}

std::string HttpProvider::post_json(const std::string& path,
                                    const std::string& body) {
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_sec, 0);
    client.set_read_timeout(config_.timeout_sec, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    auto res = client.Post(path, headers, body, "application/json");
    if (res && res->status == 200) return res->body;
    if (res && res->status >= 400 && res->status < 500) {
      throw ProtocolError("http provider: status " + std::to_string(res->status) +
                          " from " + path);
    }
    last_error = res ? "status " + std::to_string(res->status)
                     : "transport: " + httplib::to_string(res.error());
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.backoff_ms * (1 << (attempt - 1))));
    }
  }
  throw TransportError("http provider: " + last_error + " after " +
                       std::to_string(config_.max_attempts) + " attempts");
}

std::string HttpProvider::generate(const GenRequest& req) {
  validate(req);
  const std::string body = canonical_gen_request(req);
  const std::string reply = post_json("/generate", body);
  json j;
  try {
    j = json::parse(reply);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("generate: malformed response: ") + e.what());
  }
  if (!j.contains("text") || !j["text"].is_string()) {
    throw ProtocolError("generate: response missing \"text\"");
  }
  return j["text"].get<std::string>();
}

std::vector<EmbeddingVector> HttpProvider::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) throw ProtocolError("embed: empty batch");
  json body;
  body["texts"] = texts;
  const std::string reply = post_json("/embed", body.dump());
  json j;
  try {
    j = json::parse(reply);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("embed: malformed response: ") + e.what());
  }
  if (!j.contains("vectors") || !j["vectors"].is_array() ||
      j["vectors"].size() != texts.size()) {
    throw ProtocolError("embed: response missing aligned \"vectors\"");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& row : j["vectors"]) {
    out.push_back(EmbeddingVector{row.get<std::vector<double>>(), tag()});
  }
  normalize_batch(out);
  return out;
}

// ---------------------------------------------------------------------------
// DiskCache / CachingProvider
// ---------------------------------------------------------------------------

DiskCache::DiskCache(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path DiskCache::path_for(const CacheKey& key) const {
  if (key.size() < 3) throw ScoterError("cache: malformed key " + key);
  return root_ / key.substr(0, 2) / key;
}

std::optional<std::string> DiskCache::load(const CacheKey& key) const {
  const auto path = path_for(key);
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  std::string value((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  return value;
}

void DiskCache::store(const CacheKey& key, std::string_view value) const {
  const auto path = path_for(key);
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ScoterError("cache: cannot write " + tmp);
    os.write(value.data(), static_cast<std::streamsize>(value.size()));
  }
  std::filesystem::rename(tmp, path);
}

CachingProvider::CachingProvider(std::shared_ptr<Provider> delegate, DiskCache cache)
    : delegate_(std::move(delegate)), cache_(std::move(cache)) {}

std::string CachingProvider::generate(const GenRequest& req) {
  const auto key = gen_cache_key(delegate_->tag(), req);
  if (auto hit = cache_.load(key)) {
    ++hits_;
    return *hit;
  }
  ++misses_;
  std::string value = delegate_->generate(req);
  cache_.store(key, value);
  return value;
}

std::vector<EmbeddingVector> CachingProvider::embed(
    const std::vector<std::string>& texts) {
  // per-text caching so shared texts across batches reuse entries
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_pos;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto key = embed_cache_key(delegate_->tag(), texts[i]);
    if (auto hit = cache_.load(key)) {
      ++hits_;
      json j = json::parse(*hit);
      out[i] = EmbeddingVector{j.get<std::vector<double>>(), delegate_->tag()};
    } else {
      missing.push_back(texts[i]);
      missing_pos.push_back(i);
    }
  }
  if (!missing.empty()) {
    misses_ += missing.size();
    auto fresh = delegate_->embed(missing);
    for (std::size_t k = 0; k < missing.size(); ++k) {
      const auto key = embed_cache_key(delegate_->tag(), missing[k]);
      cache_.store(key, json(fresh[k].values).dump());
      out[missing_pos[k]] = std::move(fresh[k]);
    }
  }
  normalize_batch(out);
  return out;
}

}  // namespace scoter::providers
