#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "inctrl/config.hpp"
#include "inctrl/corpus.hpp"
#include "inctrl/embedding.hpp"

namespace inctrl {

struct IndexEntry {
  std::string record_id;
  std::vector<float> vector;

  bool operator==(const IndexEntry&) const = default;
};

/// Immutable exact-search store over a (sub)sampled train split. Entries are
/// sorted by record_id and share one provider and dimension.
struct RetrievalIndex {
  std::vector<IndexEntry> entries;
  std::string dataset_id;
  std::string provider_id;
  std::size_t dim = 0;
  double ratio_r = 1.0;
  std::uint64_t seed = 0;
  /// Unix seconds; informational only. Not serialized and not compared.
  std::int64_t built_at = 0;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }

  bool operator==(const RetrievalIndex& o) const {
    return entries == o.entries && dataset_id == o.dataset_id && provider_id == o.provider_id &&
           dim == o.dim && ratio_r == o.ratio_r && seed == o.seed;
  }
};

struct RankedDemo {
  std::string record_id;
  double similarity = 0.0;
  std::size_t rank = 0;  // 1-based

  bool operator==(const RankedDemo&) const = default;
};

/// Size of a ratio-r subsample of n records: max(1, floor(r*n)). A 1e-9 slack
/// absorbs binary representation error (0.29 * 100 is 28.999999999999996).
inline std::size_t subsample_size(std::size_t n, double r) {
  const auto m = static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(m, 1, n);
}

/// Uniform sample without replacement, re-sorted by record_id. r == 1 returns
/// the corpus unchanged without touching the generator.
inline Corpus subsample(const Corpus& corpus, double r, std::uint64_t seed) {
  if (corpus.empty()) throw EmptyCorpus("cannot subsample an empty corpus");
  if (!(r > 0.0 && r <= 1.0)) throw SchemaError("rag_ratio_r: must be in (0, 1]");
  if (r == 1.0) return corpus;
  Corpus out;
  out.split = corpus.split;
  out.dataset_id = corpus.dataset_id;
  for (auto i : draw_without_replacement(corpus.size(), subsample_size(corpus.size(), r), seed))
    out.records.push_back(corpus.records[i]);
  std::sort(out.records.begin(), out.records.end(),
            [](const Record& a, const Record& b) { return a.record_id < b.record_id; });
  return out;
}

/// Embeds every record's rendered input (never its reference output).
inline RetrievalIndex build_index(const Corpus& corpus, EmbeddingProvider& provider,
                                  const TaskConfig& task,
                                  const std::optional<std::filesystem::path>& cache_dir = std::nullopt) {
  if (corpus.empty()) throw EmptyCorpus("cannot index an empty corpus");
  std::vector<const Record*> sorted;
  for (const auto& r : corpus.records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const Record* a, const Record* b) { return a->record_id < b->record_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i]->record_id == sorted[i - 1]->record_id)
      throw DuplicateRecordId("index: duplicate record id '" + sorted[i]->record_id + "'");

  std::vector<std::string> texts;
  texts.reserve(sorted.size());
  for (const auto* r : sorted) texts.push_back(render_input(*r, task));
  auto vectors = embed_with_optional_cache(cache_dir, provider, texts);

  RetrievalIndex index;
  index.dataset_id = task.dataset_id;
  index.provider_id = provider.provider_id();
  index.dim = provider.dim();
  index.ratio_r = task.rag_ratio_r;
  index.seed = task.seed;
  index.built_at = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (vectors[i].dim() != index.dim || vectors[i].provider_id != index.provider_id)
      throw ProviderMismatch("index: inconsistent vector for record " + sorted[i]->record_id);
    index.entries.push_back({sorted[i]->record_id, std::move(vectors[i].values)});
  }
  return index;
}

/// Similarities are snapped to a 2^-40 grid (error < 5e-13) before ranking.
/// Mathematically equal cosines computed from different vectors can still
/// differ in the last bit; snapping makes them exact ties so the record_id
/// tie-break applies instead of rounding noise.
inline double snap_similarity(double s) {
  constexpr double kGrid = 1099511627776.0;  // 2^40
  return std::nearbyint(s * kGrid) / kGrid;
}

/// Exact scan of every entry; (similarity desc, record_id asc).
inline std::vector<RankedDemo> rank_by_vector(const RetrievalIndex& index,
                                              std::span<const float> query, std::size_t k) {
  if (k == 0) throw std::invalid_argument("query_top_k: k must be >= 1");
  if (index.empty()) throw EmptyCorpus("query against an empty index");
  if (query.size() != index.dim)
    throw DimensionMismatch("query dim " + std::to_string(query.size()) + " vs index dim " +
                            std::to_string(index.dim));
  std::vector<RankedDemo> all;
  all.reserve(index.size());
  for (const auto& e : index.entries) all.push_back({e.record_id, snap_similarity(cosine(query, e.vector)), 0});
  const auto take = std::min(k, all.size());
  const auto better = [](const RankedDemo& a, const RankedDemo& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.record_id < b.record_id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), better);
  all.resize(take);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = i + 1;
  return all;
}

inline std::vector<RankedDemo> query_top_k(const RetrievalIndex& index, const std::string& query_text,
                                           std::size_t k, EmbeddingProvider& provider,
                                           const std::optional<std::filesystem::path>& cache_dir = std::nullopt) {
  if (provider.provider_id() != index.provider_id || provider.dim() != index.dim)
    throw ProviderMismatch("index built with " + index.provider_id + " (dim " +
                           std::to_string(index.dim) + "), queried with " + provider.provider_id() +
                           " (dim " + std::to_string(provider.dim()) + ")");
  auto q = embed_with_optional_cache(cache_dir, provider, std::span<const std::string>(&query_text, 1));
  return rank_by_vector(index, q.front().values, k);
}

/// Non-retrieval path: uniform draw without replacement of min(k, n) records,
/// ranked by draw order, similarity 0.
inline std::vector<RankedDemo> select_random_demos(const Corpus& corpus, std::size_t k,
                                                   std::uint64_t seed) {
  if (corpus.empty()) throw EmptyCorpus("cannot draw demonstrations from an empty corpus");
  std::vector<RankedDemo> out;
  const auto picks = draw_without_replacement(corpus.size(), k, seed);
  for (std::size_t i = 0; i < picks.size(); ++i)
    out.push_back({corpus.records[picks[i]].record_id, 0.0, i + 1});
  return out;
}

// ---------------------------------------------------------------------------
// Index file
// ---------------------------------------------------------------------------

inline constexpr std::string_view kIndexMagic = "IIDX";
inline constexpr std::uint16_t kIndexVersion = 1;

/// Layout: "IIDX" | u16 version | u32 dim | u64 count | str provider_id |
/// str dataset_id | f64 ratio_r | u64 seed | u64 body checksum | body.
/// Body repeats (str record_id, dim x f32). Strings are u32-length-prefixed
/// UTF-8; all integers and floats little-endian. Version 1 implies the
/// subsample generator Rng::kAlgorithm.
inline std::string serialize_index(const RetrievalIndex& index) {
  ByteWriter body;
  for (const auto& e : index.entries) {
    body.put_string(e.record_id);
    for (float x : e.vector) body.put<float>(x);
  }
  ByteWriter w;
  w.put_bytes(kIndexMagic);
  w.put<std::uint16_t>(kIndexVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.dim));
  w.put<std::uint64_t>(index.entries.size());
  w.put_string(index.provider_id);
  w.put_string(index.dataset_id);
  w.put<double>(index.ratio_r);
  w.put<std::uint64_t>(index.seed);
  w.put<std::uint64_t>(fnv1a64(body.bytes()));
  w.put_bytes(body.bytes());
  return w.take();
}

inline RetrievalIndex deserialize_index(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.get_bytes(4) != kIndexMagic) throw FormatError("not an index file (bad magic)");
  const auto version = r.get<std::uint16_t>();
  if (version != kIndexVersion)
    throw FormatError("unsupported version " + std::to_string(version));
  RetrievalIndex index;
  index.dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  index.provider_id = r.get_string();
  index.dataset_id = r.get_string();
  index.ratio_r = r.get<double>();
  index.seed = r.get<std::uint64_t>();
  const auto checksum = r.get<std::uint64_t>();
  if (fnv1a64(bytes.substr(r.position())) != checksum) throw FormatError("checksum mismatch");
  if (index.dim == 0 && count > 0) throw FormatError("zero dimension");
  for (std::uint64_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.record_id = r.get_string();
    e.vector.resize(index.dim);
    for (auto& x : e.vector) x = r.get<float>();
    if (!index.entries.empty() && !(index.entries.back().record_id < e.record_id))
      throw FormatError("entries not strictly ordered by record_id");
    index.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after body");
  return index;
}

inline void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_index(index));
}

inline RetrievalIndex load_index(const std::filesystem::path& path) {
  return deserialize_index(read_file(path));
}

}  // namespace inctrl
