#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inctrl/errors.hpp"
#include "inctrl/http.hpp"
#include "inctrl/util.hpp"

namespace inctrl {

/// Receives non-fatal diagnostics (e.g. discarded cache entries).
inline std::function<void(std::string_view)>& warning_sink() {
  static std::function<void(std::string_view)> sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(std::string_view msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

struct EmbeddingVector {
  std::vector<float> values;
  std::string provider_id;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  virtual const std::string& provider_id() const = 0;
  virtual std::size_t dim() const = 0;
  /// Providers that are not deterministic must return false; the cache is
  /// bypassed for them.
  virtual bool cacheable() const { return true; }
  /// One vector per text, order preserving. Called only with validated input.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

/// Validating front door for every provider call.
inline std::vector<EmbeddingVector> embed_batch(EmbeddingProvider& provider,
                                                std::span<const std::string> texts) {
  if (texts.empty()) throw EmptyTextError("embed_batch called with no texts");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (trim_view(texts[i]).empty())
      throw EmptyTextError("text #" + std::to_string(i) + " is empty after trimming");
  }
  auto out = provider.embed(texts);
  if (out.size() != texts.size())
    throw ProviderMismatch(provider.provider_id() + " returned " + std::to_string(out.size()) +
                           " vectors for " + std::to_string(texts.size()) + " texts");
  for (auto& v : out) {
    if (v.dim() != provider.dim())
      throw ProviderMismatch(provider.provider_id() + " returned dim " + std::to_string(v.dim()) +
                             ", expected " + std::to_string(provider.dim()));
    for (float x : v.values)
      if (!std::isfinite(x)) throw ProviderMismatch(provider.provider_id() + " returned non-finite values");
    v.provider_id = provider.provider_id();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic offline embedder
// ---------------------------------------------------------------------------

inline std::string mock_provider_id(std::size_t dim) { return "mock-hash/" + std::to_string(dim); }

/// Hashed bag of whitespace tokens. Each token adds +-1 to coordinate
/// (h mod dim), sign taken from bit 63 of its FNV-1a hash; the result is
/// L2-normalized. A zero accumulator maps to e_0.
inline EmbeddingVector mock_embed(std::string_view text, std::size_t dim) {
  if (dim == 0) throw DimensionMismatch("mock_embed: dim must be >= 1");
  std::vector<double> acc(dim, 0.0);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_ascii_space(text[j])) ++j;
    if (j > i) {
      const std::uint64_t h = fnv1a64(text.substr(i, j - i));
      acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
    }
    i = j;
  }
  double norm = 0.0;
  for (double x : acc) norm += x * x;
  EmbeddingVector v;
  v.provider_id = mock_provider_id(dim);
  v.values.assign(dim, 0.0f);
  if (norm == 0.0) {
    v.values[0] = 1.0f;
    return v;
  }
  norm = std::sqrt(norm);
  for (std::size_t k = 0; k < dim; ++k) v.values[k] = static_cast<float>(acc[k] / norm);
  return v;
}

class MockEmbeddingProvider final : public EmbeddingProvider {
public:
  explicit MockEmbeddingProvider(std::size_t dim = 256) : dim_(dim), id_(mock_provider_id(dim)) {}

  const std::string& provider_id() const override { return id_; }
  std::size_t dim() const override { return dim_; }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    calls_.fetch_add(1);
    texts_embedded_.fetch_add(texts.size());
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(mock_embed(t, dim_));
    return out;
  }

  std::size_t calls() const noexcept { return calls_.load(); }
  std::size_t texts_embedded() const noexcept { return texts_embedded_.load(); }

private:
  std::size_t dim_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> texts_embedded_{0};
};

// ---------------------------------------------------------------------------
// HTTP provider
// ---------------------------------------------------------------------------

/// POST {"texts": [...]} -> {"provider_id", "dim", "vectors"}. The provider
/// identity and dimension are learned from a probe request at construction.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
  explicit HttpEmbeddingProvider(const std::string& url, http::RetryPolicy policy = {})
      : endpoint_(http::parse_url(url)), policy_(policy) {
    const std::string probe = "probe";
    auto reply = request(std::span<const std::string>(&probe, 1));
    id_ = reply.at("provider_id").get<std::string>();
    dim_ = reply.at("dim").get<std::size_t>();
    if (dim_ == 0) throw ProviderUnavailable(url + ": provider reported dim 0");
  }

  const std::string& provider_id() const override { return id_; }
  std::size_t dim() const override { return dim_; }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    auto reply = request(texts);
    if (reply.at("provider_id").get<std::string>() != id_ || reply.at("dim").get<std::size_t>() != dim_)
      throw ProviderMismatch("embedding service changed identity or dimension mid-run");
    std::vector<EmbeddingVector> out;
    for (const auto& row : reply.at("vectors")) {
      EmbeddingVector v;
      v.provider_id = id_;
      v.values = row.get<std::vector<float>>();
      out.push_back(std::move(v));
    }
    return out;
  }

private:
  json request(std::span<const std::string> texts) const {
    json body = {{"texts", json::array()}};
    for (const auto& t : texts) body["texts"].push_back(t);
    try {
      auto reply = http::post_json(endpoint_, body, policy_, [&](const http::Failure& f) {
        throw ProviderUnavailable(endpoint_.origin + endpoint_.path + ": " + f.message);
      });
      if (!reply.is_object() || !reply.contains("provider_id") || !reply.contains("dim") ||
          !reply.contains("vectors"))
        throw ProviderUnavailable("embedding reply is missing provider_id/dim/vectors");
      return reply;
    } catch (const json::exception& e) {
      throw ProviderUnavailable(std::string("malformed embedding reply: ") + e.what());
    }
  }

  http::Endpoint endpoint_;
  http::RetryPolicy policy_;
  std::string id_;
  std::size_t dim_ = 0;
};

/// Provider selected by INCTRL_EMBED_URL: unset or "mock[:DIM]" gives the
/// offline mock, anything else is an HTTP endpoint.
inline std::unique_ptr<EmbeddingProvider> provider_from_env(http::RetryPolicy policy = {}) {
  const char* env = std::getenv("INCTRL_EMBED_URL");
  const std::string url = env ? env : "";
  if (url.empty() || url == "mock") return std::make_unique<MockEmbeddingProvider>();
  if (url.rfind("mock:", 0) == 0) {
    const auto dim = std::stoul(url.substr(5));
    return std::make_unique<MockEmbeddingProvider>(dim);
  }
  return std::make_unique<HttpEmbeddingProvider>(url, policy);
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

/// Cosine similarity, clamped to [-1, 1]. Accumulates in extended precision
/// so that mathematically equal similarities (common with sparse or
/// constant-magnitude vectors) round to the same double and tie-break by id
/// instead of by rounding noise.
inline double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size())
    throw DimensionMismatch("cosine: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  long double dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const long double a = u[i], b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0 || vv == 0) throw ZeroVectorError("cosine of an all-zero vector");
  return std::clamp(static_cast<double>(dot / std::sqrt(uu * vv)), -1.0, 1.0);
}

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  return cosine(std::span<const float>(u.values), std::span<const float>(v.values));
}

// ---------------------------------------------------------------------------
// Persistent cache
// ---------------------------------------------------------------------------

/// One file per (provider_id, text): 16-byte header ("IEC1", u32 dim,
/// u64 payload checksum) followed by dim little-endian float32 values.
class EmbeddingCache {
public:
  static constexpr std::string_view kMagic = "IEC1";

  explicit EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path entry_path(const std::string& provider_id, std::string_view text) const {
    const std::string key = hex64(fnv1a64(text)) + hex64(fnv1a64(text, splitmix64(0x1ec1)));
    return dir_ / hex64(fnv1a64(provider_id)) / (key + ".iec");
  }

  std::vector<EmbeddingVector> get_or_embed(EmbeddingProvider& provider,
                                            std::span<const std::string> texts) {
    if (!provider.cacheable()) return embed_batch(provider, texts);
    if (texts.empty()) throw EmptyTextError("embed_batch called with no texts");

    std::vector<std::optional<EmbeddingVector>> slots(texts.size());
    std::vector<std::string> misses;
    std::vector<std::size_t> miss_pos;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      slots[i] = lookup(provider, texts[i]);
      if (!slots[i]) {
        misses.push_back(texts[i]);
        miss_pos.push_back(i);
      }
    }
    if (!misses.empty()) {
      auto fresh = embed_batch(provider, misses);
      std::filesystem::create_directories(entry_path(provider.provider_id(), "").parent_path());
      for (std::size_t m = 0; m < misses.size(); ++m) {
        store(provider.provider_id(), misses[m], fresh[m]);
        slots[miss_pos[m]] = std::move(fresh[m]);
      }
    }
    std::vector<EmbeddingVector> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

  static std::string encode(const EmbeddingVector& v) {
    ByteWriter payload;
    for (float x : v.values) payload.put<float>(x);
    ByteWriter w;
    w.put_bytes(kMagic);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.dim()));
    w.put<std::uint64_t>(fnv1a64(payload.bytes()));
    w.put_bytes(payload.bytes());
    return w.take();
  }

  /// Throws CacheCorruption on any structural or checksum problem.
  static std::vector<float> decode(std::string_view bytes) {
    try {
      ByteReader r(bytes);
      if (r.get_bytes(4) != kMagic) throw CacheCorruption("bad magic");
      const auto dim = r.get<std::uint32_t>();
      const auto checksum = r.get<std::uint64_t>();
      if (r.remaining() != std::size_t{dim} * sizeof(float)) throw CacheCorruption("bad length");
      if (fnv1a64(bytes.substr(r.position())) != checksum) throw CacheCorruption("checksum mismatch");
      std::vector<float> values(dim);
      for (auto& x : values) x = r.get<float>();
      return values;
    } catch (const FormatError& e) {
      throw CacheCorruption(e.what());
    }
  }

private:
  std::optional<EmbeddingVector> lookup(const EmbeddingProvider& provider, const std::string& text) const {
    const auto path = entry_path(provider.provider_id(), text);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    std::vector<float> values;
    try {
      values = decode(read_file(path));
    } catch (const CacheCorruption& e) {
      warn("discarding cache entry " + path.string() + " (" + e.what() + ")");
      return std::nullopt;
    } catch (const IoError&) {
      return std::nullopt;
    }
    if (values.size() != provider.dim())
      throw ProviderMismatch("cached entry " + path.string() + " has dim " +
                             std::to_string(values.size()) + ", provider " + provider.provider_id() +
                             " has dim " + std::to_string(provider.dim()));
    return EmbeddingVector{std::move(values), provider.provider_id()};
  }

  void store(const std::string& provider_id, const std::string& text, const EmbeddingVector& v) const {
    write_file_atomic(entry_path(provider_id, text), encode(v));
  }

  std::filesystem::path dir_;
};

inline std::vector<EmbeddingVector> cache_get_or_embed(const std::filesystem::path& cache_dir,
                                                       EmbeddingProvider& provider,
                                                       std::span<const std::string> texts) {
  return EmbeddingCache(cache_dir).get_or_embed(provider, texts);
}

/// Embeds through the cache when a directory is given, directly otherwise.
inline std::vector<EmbeddingVector> embed_with_optional_cache(
    const std::optional<std::filesystem::path>& cache_dir, EmbeddingProvider& provider,
    std::span<const std::string> texts) {
  if (cache_dir) return cache_get_or_embed(*cache_dir, provider, texts);
  return embed_batch(provider, texts);
}

}  // namespace inctrl
