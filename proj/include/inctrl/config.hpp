#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "inctrl/errors.hpp"
#include "inctrl/util.hpp"

namespace inctrl {

using json = nlohmann::json;

enum class TaskType { code_output, text_output, class_output };
enum class Metric { bleu1_smoothed, precision, recall, f1 };

/// The six prompt sections in canonical order.
enum class Section { INTRODUCTION, DEFINITION, PRE_INSTRUCTION, DEMONSTRATION, POST_INSTRUCTION, QUESTION };

inline constexpr std::array<Section, 6> kSections = {
    Section::INTRODUCTION,  Section::DEFINITION,       Section::PRE_INSTRUCTION,
    Section::DEMONSTRATION, Section::POST_INSTRUCTION, Section::QUESTION};

inline std::string_view to_string(TaskType t) {
  switch (t) {
    case TaskType::code_output: return "code_output";
    case TaskType::text_output: return "text_output";
    case TaskType::class_output: return "class_output";
  }
  return "?";
}

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::bleu1_smoothed: return "bleu1_smoothed";
    case Metric::precision: return "precision";
    case Metric::recall: return "recall";
    case Metric::f1: return "f1";
  }
  return "?";
}

inline std::string_view to_string(Section s) {
  switch (s) {
    case Section::INTRODUCTION: return "INTRODUCTION";
    case Section::DEFINITION: return "DEFINITION";
    case Section::PRE_INSTRUCTION: return "PRE_INSTRUCTION";
    case Section::DEMONSTRATION: return "DEMONSTRATION";
    case Section::POST_INSTRUCTION: return "POST_INSTRUCTION";
    case Section::QUESTION: return "QUESTION";
  }
  return "?";
}

inline std::optional<TaskType> parse_task_type(std::string_view s) {
  for (auto t : {TaskType::code_output, TaskType::text_output, TaskType::class_output})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

inline std::optional<Metric> parse_metric(std::string_view s) {
  for (auto m : {Metric::bleu1_smoothed, Metric::precision, Metric::recall, Metric::f1})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

inline std::optional<Section> parse_section(std::string_view s) {
  for (auto sec : kSections)
    if (to_string(sec) == s) return sec;
  return std::nullopt;
}

inline bool is_generation(TaskType t) { return t != TaskType::class_output; }

struct ClassLabel {
  std::string class_id;
  std::vector<std::string> surface_forms;

  bool operator==(const ClassLabel&) const = default;
};

struct TaskConfig {
  std::string task_id;
  TaskType task_type = TaskType::text_output;
  std::string dataset_id;
  std::vector<std::string> input_fields;
  std::string input_template;
  std::string output_field;
  std::optional<std::vector<ClassLabel>> label_space;
  /// Class treated as "positive" by precision/recall/F1.
  std::optional<std::string> positive_class;
  bool f_rag = false;
  double rag_ratio_r = 1.0;
  std::uint64_t shots_k = 4;
  std::vector<Metric> metrics;
  std::uint64_t seed = 0;
  std::uint64_t max_prompt_chars = 16000;
  std::uint64_t max_in_flight = 4;

  bool operator==(const TaskConfig&) const = default;
};

struct SectionSpec {
  std::string text;
  bool enabled = true;

  bool operator==(const SectionSpec&) const = default;
};

struct PromptConfig {
  std::map<Section, SectionSpec> sections;
  std::string demo_template;
  std::string section_separator = "\n\n";

  const SectionSpec& section(Section s) const { return sections.at(s); }
  bool operator==(const PromptConfig&) const = default;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

namespace detail {

class ObjectReader {
public:
  ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw SchemaError(where_ + ": expected an object");
  }

  void reject_unknown(std::initializer_list<std::string_view> known) const {
    for (const auto& [key, _] : obj_.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw SchemaError(qualify(key) + ": unknown key");
    }
  }

  bool has(std::string_view key) const { return obj_.contains(key); }
  const json& raw(std::string_view key) const { return obj_.at(std::string(key)); }

  std::string string(std::string_view key) const {
    const json& v = require(key);
    if (!v.is_string()) throw SchemaError(qualify(key) + ": expected a string");
    return v.get<std::string>();
  }

  bool boolean(std::string_view key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) throw SchemaError(qualify(key) + ": expected a boolean");
    return v.get<bool>();
  }

  std::uint64_t unsigned_int(std::string_view key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw SchemaError(qualify(key) + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  double number(std::string_view key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) throw SchemaError(qualify(key) + ": expected a number");
    return v.get<double>();
  }

  std::vector<std::string> strings(std::string_view key) const {
    const json& v = require(key);
    if (!v.is_array()) throw SchemaError(qualify(key) + ": expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw SchemaError(qualify(key) + ": expected an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  std::string qualify(std::string_view key) const {
    return where_.empty() ? std::string(key) : where_ + "." + std::string(key);
  }

private:
  const json& require(std::string_view key) const {
    if (!has(key)) throw SchemaError(qualify(key) + ": missing required key");
    return raw(key);
  }

  const json& obj_;
  std::string where_;
};

inline json parse_json_text(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

inline std::vector<Metric> default_metrics(TaskType t) {
  if (is_generation(t)) return {Metric::bleu1_smoothed};
  return {Metric::precision, Metric::recall, Metric::f1};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// TaskConfig
// ---------------------------------------------------------------------------

/// Checks every TaskConfig invariant; throws SchemaError naming the key.
inline void validate(const TaskConfig& t) {
  if (t.task_id.empty()) throw SchemaError("task_id: must be non-empty");
  if (t.dataset_id.empty()) throw SchemaError("dataset_id: must be non-empty");

  if (t.input_fields.empty()) throw SchemaError("input_fields: must be non-empty");
  std::set<std::string> fields;
  for (const auto& f : t.input_fields) {
    if (f.empty() || !std::all_of(f.begin(), f.end(), is_placeholder_char))
      throw SchemaError("input_fields: invalid field name '" + f + "'");
    if (!fields.insert(f).second) throw SchemaError("input_fields: duplicate field '" + f + "'");
  }
  for (const auto& p : placeholders(t.input_template)) {
    if (!fields.count(p))
      throw SchemaError("input_template placeholder {" + p + "} is not in input_fields");
  }
  if (t.output_field.empty()) throw SchemaError("output_field: must be non-empty");
  if (fields.count(t.output_field))
    throw SchemaError("output_field: must not be one of input_fields");

  const bool is_class = t.task_type == TaskType::class_output;
  if (is_class) {
    if (!t.label_space) throw SchemaError("label_space: required for class_output");
    if (t.label_space->size() < 2) throw SchemaError("label_space: needs at least 2 classes");
  } else if (t.label_space) {
    throw SchemaError("label_space: only allowed for class_output");
  }
  if (t.label_space) {
    std::set<std::string> ids;
    std::map<std::string, std::string> forms;  // normalized form -> owning class
    for (const auto& label : *t.label_space) {
      if (label.class_id.empty()) throw SchemaError("label_space.class_id: must be non-empty");
      if (!ids.insert(label.class_id).second)
        throw SchemaError("label_space.class_id: duplicate '" + label.class_id + "'");
      if (label.surface_forms.empty())
        throw SchemaError("label_space.surface_forms: empty for class '" + label.class_id + "'");
      std::set<std::string> own{normalize_label(label.class_id)};
      for (const auto& f : label.surface_forms) {
        if (trim_view(f).empty())
          throw SchemaError("label_space.surface_forms: blank form in '" + label.class_id + "'");
        own.insert(normalize_label(f));
      }
      std::set<std::string> seen;
      for (const auto& f : label.surface_forms) {
        if (!seen.insert(normalize_label(f)).second)
          throw SchemaError("label_space.surface_forms: duplicate form '" + f + "' in '" +
                            label.class_id + "'");
      }
      for (const auto& n : own) {
        auto [it, inserted] = forms.emplace(n, label.class_id);
        if (!inserted && it->second != label.class_id)
          throw SchemaError("label_space.surface_forms: '" + n + "' is ambiguous between '" +
                            it->second + "' and '" + label.class_id + "'");
      }
    }
  }
  if (t.positive_class) {
    if (!is_class) throw SchemaError("positive_class: only allowed for class_output");
    const auto& ls = *t.label_space;
    if (std::none_of(ls.begin(), ls.end(),
                     [&](const ClassLabel& l) { return l.class_id == *t.positive_class; }))
      throw SchemaError("positive_class: '" + *t.positive_class + "' is not a class_id");
  }

  if (!(t.rag_ratio_r > 0.0 && t.rag_ratio_r <= 1.0))
    throw SchemaError("rag_ratio_r: must be in (0, 1]");

  if (t.metrics.empty()) throw SchemaError("metrics: must be non-empty");
  std::set<Metric> seen_metrics;
  for (auto m : t.metrics) {
    if (!seen_metrics.insert(m).second)
      throw SchemaError("metrics: duplicate '" + std::string(to_string(m)) + "'");
    const bool bleu = m == Metric::bleu1_smoothed;
    if (bleu == is_class)
      throw SchemaError("metrics: '" + std::string(to_string(m)) + "' does not apply to " +
                        std::string(to_string(t.task_type)));
  }
  if (t.max_prompt_chars == 0) throw SchemaError("max_prompt_chars: must be positive");
  if (t.max_in_flight == 0) throw SchemaError("max_in_flight: must be positive");
}

inline TaskConfig task_config_from_json(const json& j) {
  detail::ObjectReader r(j, "");
  r.reject_unknown({"task_id", "task_type", "dataset_id", "input_fields", "input_template",
                    "output_field", "label_space", "positive_class", "f_rag", "rag_ratio_r",
                    "shots_k", "metrics", "seed", "max_prompt_chars", "max_in_flight"});
  TaskConfig t;
  t.task_id = r.string("task_id");
  const auto type_name = r.string("task_type");
  const auto type = parse_task_type(type_name);
  if (!type) throw SchemaError("task_type: unknown value '" + type_name + "'");
  t.task_type = *type;
  t.dataset_id = r.string("dataset_id");
  t.input_fields = r.strings("input_fields");
  t.input_template = r.string("input_template");
  t.output_field = r.string("output_field");

  if (r.has("label_space")) {
    const json& ls = r.raw("label_space");
    if (!ls.is_array()) throw SchemaError("label_space: expected an array");
    std::vector<ClassLabel> labels;
    for (const auto& entry : ls) {
      detail::ObjectReader lr(entry, "label_space");
      lr.reject_unknown({"class_id", "surface_forms"});
      labels.push_back({lr.string("class_id"), lr.strings("surface_forms")});
    }
    t.label_space = std::move(labels);
  }
  if (r.has("positive_class")) t.positive_class = r.string("positive_class");

  t.f_rag = r.boolean("f_rag", false);
  t.rag_ratio_r = r.number("rag_ratio_r", 1.0);
  t.shots_k = r.unsigned_int("shots_k", 4);
  if (r.has("metrics")) {
    for (const auto& name : r.strings("metrics")) {
      const auto m = parse_metric(name);
      if (!m) throw SchemaError("metrics: unknown value '" + name + "'");
      t.metrics.push_back(*m);
    }
  } else {
    t.metrics = detail::default_metrics(t.task_type);
  }
  t.seed = r.unsigned_int("seed", 0);
  t.max_prompt_chars = r.unsigned_int("max_prompt_chars", 16000);
  t.max_in_flight = r.unsigned_int("max_in_flight", 4);

  validate(t);
  return t;
}

inline json to_json(const TaskConfig& t) {
  json j;
  j["task_id"] = t.task_id;
  j["task_type"] = to_string(t.task_type);
  j["dataset_id"] = t.dataset_id;
  j["input_fields"] = t.input_fields;
  j["input_template"] = t.input_template;
  j["output_field"] = t.output_field;
  if (t.label_space) {
    json ls = json::array();
    for (const auto& l : *t.label_space)
      ls.push_back({{"class_id", l.class_id}, {"surface_forms", l.surface_forms}});
    j["label_space"] = std::move(ls);
  }
  if (t.positive_class) j["positive_class"] = *t.positive_class;
  j["f_rag"] = t.f_rag;
  j["rag_ratio_r"] = t.rag_ratio_r;
  j["shots_k"] = t.shots_k;
  json metrics = json::array();
  for (auto m : t.metrics) metrics.push_back(to_string(m));
  j["metrics"] = std::move(metrics);
  j["seed"] = t.seed;
  j["max_prompt_chars"] = t.max_prompt_chars;
  j["max_in_flight"] = t.max_in_flight;
  return j;
}

inline TaskConfig parse_task_config(std::string_view text, const std::string& origin = "task config") {
  return task_config_from_json(detail::parse_json_text(text, origin));
}

inline TaskConfig load_task_config(const std::filesystem::path& path) {
  return parse_task_config(read_file(path), path.string());
}

/// Provenance digest: hash of the canonical serialization.
inline std::string digest(const TaskConfig& t) { return hex64(fnv1a64(to_json(t).dump())); }

// ---------------------------------------------------------------------------
// PromptConfig
// ---------------------------------------------------------------------------

inline void validate(const PromptConfig& p) {
  for (auto s : kSections) {
    if (!p.sections.count(s)) throw SchemaError(std::string(to_string(s)) + ": missing section");
  }
  if (!p.section(Section::QUESTION).enabled)
    throw SchemaError("QUESTION.enabled: the QUESTION section cannot be disabled");
  const auto names = placeholders(p.demo_template);
  const auto count = [&](std::string_view n) { return std::count(names.begin(), names.end(), n); };
  if (count("input") != 1 || count("output") != 1)
    throw SchemaError("demo_template: must contain {input} and {output} exactly once each");
}

inline PromptConfig prompt_config_from_json(const json& j) {
  detail::ObjectReader r(j, "");
  r.reject_unknown({"sections", "demo_template", "section_separator"});
  PromptConfig p;
  if (!r.has("sections")) throw SchemaError("sections: missing required key");
  const json& secs = r.raw("sections");
  if (!secs.is_object()) throw SchemaError("sections: expected an object");
  for (const auto& [name, spec] : secs.items()) {
    const auto section = parse_section(name);
    if (!section) throw SchemaError("sections." + name + ": unknown section");
    detail::ObjectReader sr(spec, name);
    sr.reject_unknown({"text", "enabled"});
    p.sections[*section] = SectionSpec{sr.string("text"), sr.boolean("enabled", true)};
  }
  p.demo_template = r.string("demo_template");
  if (r.has("section_separator")) p.section_separator = r.string("section_separator");
  validate(p);
  return p;
}

inline json to_json(const PromptConfig& p) {
  json secs = json::object();
  for (const auto& [s, spec] : p.sections)
    secs[std::string(to_string(s))] = {{"text", spec.text}, {"enabled", spec.enabled}};
  return {{"sections", std::move(secs)},
          {"demo_template", p.demo_template},
          {"section_separator", p.section_separator}};
}

inline PromptConfig parse_prompt_config(std::string_view text,
                                        const std::string& origin = "prompt config") {
  return prompt_config_from_json(detail::parse_json_text(text, origin));
}

inline PromptConfig load_prompt_config(const std::filesystem::path& path) {
  return parse_prompt_config(read_file(path), path.string());
}

inline std::string digest(const PromptConfig& p) { return hex64(fnv1a64(to_json(p).dump())); }

// ---------------------------------------------------------------------------
// Cross-checks
// ---------------------------------------------------------------------------

/// Compatibility of an individually valid task/prompt pair. Violations are
/// returned, never thrown.
inline ValidationReport validate_pair(const TaskConfig& task, const PromptConfig& prompt) {
  ValidationReport report;
  const std::set<std::string> fields(task.input_fields.begin(), task.input_fields.end());
  for (const auto& [section, spec] : prompt.sections) {
    for (const auto& p : placeholders(spec.text)) {
      if (!fields.count(p))
        report.violations.push_back(std::string(to_string(section)) + ": placeholder {" + p +
                                    "} does not name an input field");
    }
  }
  if (task.shots_k > 0 && !prompt.section(Section::DEMONSTRATION).enabled)
    report.violations.push_back("shots_k=" + std::to_string(task.shots_k) +
                                " but DEMONSTRATION is disabled");
  return report;
}

}  // namespace inctrl
