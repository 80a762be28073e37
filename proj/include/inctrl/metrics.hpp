#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "inctrl/config.hpp"
#include "inctrl/inference.hpp"

namespace inctrl {

namespace detail {

inline bool is_unicode_space(std::uint32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F ||
         cp == 0x205F || cp == 0x3000;
}

/// Decodes one UTF-8 sequence at `i`; malformed bytes decode as themselves
/// with length 1 (and are never whitespace).
inline std::uint32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  const auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  const auto bits = [&](std::size_t k) { return static_cast<std::uint32_t>(s[i + k] & 0x3F); };
  if (b0 < 0x80) { len = 1; return b0; }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) { len = 2; return ((b0 & 0x1Fu) << 6) | bits(1); }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    len = 3;
    return ((b0 & 0x0Fu) << 12) | (bits(1) << 6) | bits(2);
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    len = 4;
    return ((b0 & 0x07u) << 18) | (bits(1) << 12) | (bits(2) << 6) | bits(3);
  }
  len = 1;
  return 0xFFFFFFFFu;
}

}  // namespace detail

/// Splits on Unicode whitespace. No lowercasing, no sub-token splitting.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size();) {
    std::size_t len = 1;
    const auto cp = detail::decode_utf8(text, i, len);
    if (detail::is_unicode_space(cp)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.append(text.substr(i, len));
    }
    i += len;
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

struct BleuScore {
  double value = 0.0;
  double p1 = 0.0;
  double brevity_penalty = 1.0;
  std::size_t candidate_len = 0;
  std::size_t reference_len = 0;
  std::size_t matches = 0;
};

/// Unigram BLEU with add-one smoothing on the clipped precision and the
/// standard brevity penalty. An empty candidate scores 0 (BP taken as 0).
inline BleuScore bleu1_smoothed(std::string_view candidate, std::string_view reference) {
  const auto ref = tokenize(reference);
  if (ref.empty()) throw EmptyReference("reference has no tokens");
  const auto cand = tokenize(candidate);

  std::unordered_map<std::string, std::size_t> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  std::unordered_map<std::string, std::size_t> cand_counts;
  for (const auto& t : cand) ++cand_counts[t];

  BleuScore s;
  s.candidate_len = cand.size();
  s.reference_len = ref.size();
  for (const auto& [tok, n] : cand_counts) {
    auto it = ref_counts.find(tok);
    if (it != ref_counts.end()) s.matches += std::min(n, it->second);
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  s.p1 = (static_cast<double>(s.matches) + 1.0) / (c + 1.0);
  if (cand.empty()) {
    s.brevity_penalty = 0.0;
    s.value = 0.0;
    return s;
  }
  s.brevity_penalty = cand.size() >= ref.size() ? 1.0 : std::exp(1.0 - r / c);
  s.value = s.brevity_penalty * s.p1;
  return s;
}

/// Sentence score of one prediction; failed records score their (empty or
/// partial) final_output like any other.
inline double sentence_bleu(const PredictionRecord& p) {
  return bleu1_smoothed(p.final_output, p.reference).value;
}

/// Mean of sentence scores; nullopt for an empty list.
inline std::optional<double> corpus_bleu(const std::vector<PredictionRecord>& records) {
  if (records.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& p : records) {
    if (!is_generation(p.task_type))
      throw SchemaError("corpus_bleu: record " + p.record_id + " is not a generation record");
    sum += sentence_bleu(p);
  }
  return sum / static_cast<double>(records.size());
}

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp; fp += o.fp; tn += o.tn; fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
};

/// Zero denominators define the metric as 0.
inline PrfScore prf_from_counts(const ConfusionCounts& c) {
  PrfScore s;
  s.counts = c;
  s.precision = (c.tp + c.fp) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  s.recall = (c.tp + c.fn) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

/// A record without a predicted class (failed inference) counts as a
/// negative prediction.
inline ConfusionCounts confusion(const std::vector<PredictionRecord>& records,
                                 const std::string& positive_class) {
  ConfusionCounts c;
  for (const auto& p : records) {
    const bool predicted = p.predicted_class && *p.predicted_class == positive_class;
    const bool actual = p.reference == positive_class;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline PrfScore binary_prf(const std::vector<PredictionRecord>& records, const std::string& positive_class) {
  return prf_from_counts(confusion(records, positive_class));
}

inline PrfScore binary_prf(const std::vector<PredictionRecord>& records, const TaskConfig& task) {
  if (!task.positive_class)
    throw MissingPositiveClass("task " + task.task_id + " does not designate positive_class");
  return binary_prf(records, *task.positive_class);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

using MetricMap = std::map<std::string, double>;

struct EvalReport {
  std::map<std::string, MetricMap> per_dataset;
  std::map<std::string, MetricMap> per_category;
  std::map<std::string, std::size_t> dataset_records;
  std::size_t n_records = 0;
  std::string config_digest;
};

inline constexpr std::string_view kAggregationNote =
    "bleu1_smoothed is the mean of sentence scores; category values pool all records of the "
    "category (micro); precision/recall/f1 pool confusion counts";

namespace detail {

struct Pool {
  std::set<Metric> metrics;
  std::vector<const PredictionRecord*> records;
  ConfusionCounts counts;
  double bleu_sum = 0.0;
  std::size_t bleu_n = 0;

  MetricMap finish() const {
    MetricMap m;
    for (auto metric : metrics) {
      if (metric == Metric::bleu1_smoothed) {
        if (bleu_n > 0) m["bleu1_smoothed"] = bleu_sum / static_cast<double>(bleu_n);
        continue;
      }
      if (records.empty()) continue;
      const auto s = prf_from_counts(counts);
      if (metric == Metric::precision) m["precision"] = s.precision;
      if (metric == Metric::recall) m["recall"] = s.recall;
      if (metric == Metric::f1) m["f1"] = s.f1;
    }
    return m;
  }
};

}  // namespace detail

/// Per-dataset metrics, then per-category micro pooling. Records are matched
/// to configs by task_id; any inconsistency is a SchemaError.
inline EvalReport aggregate_report(const std::vector<PredictionRecord>& records,
                                   const std::vector<TaskConfig>& tasks) {
  std::map<std::string, const TaskConfig*> by_id;
  for (const auto& t : tasks) {
    if (!by_id.emplace(t.task_id, &t).second)
      throw SchemaError("duplicate task_id '" + t.task_id + "' among task configs");
  }
  std::map<std::string, TaskType> dataset_type;
  for (const auto& t : tasks) {
    auto [it, inserted] = dataset_type.emplace(t.dataset_id, t.task_type);
    if (!inserted && it->second != t.task_type)
      throw SchemaError("dataset '" + t.dataset_id + "' is used with different task types");
  }

  std::map<std::string, detail::Pool> datasets;
  std::map<std::string, detail::Pool> categories;
  for (const auto& p : records) {
    auto it = by_id.find(p.task_id);
    if (it == by_id.end()) throw SchemaError("prediction " + p.record_id + ": unknown task_id '" + p.task_id + "'");
    const TaskConfig& task = *it->second;
    if (p.task_type != task.task_type)
      throw SchemaError("prediction " + p.record_id + " is " + std::string(to_string(p.task_type)) +
                        " but task " + task.task_id + " is " + std::string(to_string(task.task_type)));
    if (p.dataset_id != task.dataset_id)
      throw SchemaError("prediction " + p.record_id + ": dataset '" + p.dataset_id + "' does not match task");

    auto& ds = datasets[task.dataset_id];
    auto& cat = categories[std::string(to_string(task.task_type))];
    for (auto* pool : {&ds, &cat}) {
      pool->metrics.insert(task.metrics.begin(), task.metrics.end());
      pool->records.push_back(&p);
    }
    if (is_generation(task.task_type)) {
      const double b = sentence_bleu(p);
      for (auto* pool : {&ds, &cat}) {
        pool->bleu_sum += b;
        ++pool->bleu_n;
      }
    } else {
      const auto& ls = *task.label_space;
      if (std::none_of(ls.begin(), ls.end(), [&](const ClassLabel& l) { return l.class_id == p.reference; }))
        throw SchemaError("prediction " + p.record_id + ": reference '" + p.reference + "' is not a class of " +
                          task.task_id);
      if (!task.positive_class)
        throw MissingPositiveClass("task " + task.task_id + " does not designate positive_class");
      const auto c = confusion({p}, *task.positive_class);
      ds.counts += c;
      cat.counts += c;
    }
  }

  EvalReport report;
  report.n_records = records.size();
  for (const auto& [id, pool] : datasets) {
    report.per_dataset[id] = pool.finish();
    report.dataset_records[id] = pool.records.size();
  }
  for (const auto& [id, pool] : categories) report.per_category[id] = pool.finish();

  std::vector<std::string> digests;
  for (const auto& [id, t] : by_id) digests.push_back(id + "=" + digest(*t));
  std::string joined;
  for (const auto& d : digests) joined += d + "\n";
  report.config_digest = hex64(fnv1a64(joined));
  return report;
}

inline json to_json(const EvalReport& r) {
  json per_dataset = json::object();
  for (const auto& [id, m] : r.per_dataset) {
    per_dataset[id] = {{"metrics", m}, {"n_records", r.dataset_records.at(id)}};
  }
  json per_category = json::object();
  for (const auto& [id, m] : r.per_category) per_category[id] = m;
  return {{"aggregation", kAggregationNote},
          {"config_digest", r.config_digest},
          {"n_records", r.n_records},
          {"per_dataset", std::move(per_dataset)},
          {"per_category", std::move(per_category)}};
}

/// Aligned plain-text table; values are printed x100 with two decimals.
inline std::string report_table(const EvalReport& r) {
  struct Row { std::string scope, metric, value; };
  std::vector<Row> rows{{"dataset", "metric", "value(x100)"}};
  const auto fmt = [](double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << v * 100.0;
    return ss.str();
  };
  for (const auto& [id, m] : r.per_dataset)
    for (const auto& [metric, v] : m) rows.push_back({id, metric, fmt(v)});
  for (const auto& [id, m] : r.per_category)
    for (const auto& [metric, v] : m) rows.push_back({"[" + id + "]", metric, fmt(v)});

  std::size_t w0 = 0, w1 = 0;
  for (const auto& row : rows) {
    w0 = std::max(w0, row.scope.size());
    w1 = std::max(w1, row.metric.size());
  }
  std::ostringstream out;
  out << "# " << kAggregationNote << "\n";
  for (const auto& row : rows) {
    out << std::left << std::setw(static_cast<int>(w0)) << row.scope << "  "
        << std::setw(static_cast<int>(w1)) << row.metric << "  " << std::right << row.value << "\n";
  }
  return out.str();
}

}  // namespace inctrl
