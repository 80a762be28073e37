#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "inctrl/config.hpp"

namespace inctrl {

enum class Split { train, test };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

using FieldMap = std::map<std::string, std::string, std::less<>>;

struct Record {
  std::string record_id;
  FieldMap fields;
  Split split = Split::test;

  const std::string& field(std::string_view name) const {
    auto it = fields.find(name);
    if (it == fields.end())
      throw MissingFieldError("record " + record_id + ": missing field '" + std::string(name) + "'");
    return it->second;
  }
  bool operator==(const Record&) const = default;
};

struct Corpus {
  std::vector<Record> records;
  Split split = Split::test;
  std::string dataset_id;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  const Record* find(std::string_view id) const {
    for (const auto& r : records)
      if (r.record_id == id) return &r;
    return nullptr;
  }
  bool operator==(const Corpus&) const = default;
};

/// Canonical text form of a JSONL cell: strings verbatim, booleans as
/// "true"/"false", numbers in shortest round-trip form without trailing zeros.
inline std::string stringify_cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) {
    std::string s = v.dump();
    if (s.find_first_of("eE") == std::string::npos && s.find('.') != std::string::npos) {
      while (s.back() == '0') s.pop_back();
      if (s.back() == '.') s.pop_back();
    }
    return s;
  }
  return v.dump();
}

inline std::string zero_padded(std::size_t n, std::size_t width = 6) {
  std::string s = std::to_string(n);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

/// Parses JSONL text (one object per line). Blank lines are skipped but still
/// counted, so implicit ids always equal the zero-based physical line index.
inline Corpus parse_split(std::string_view text, const TaskConfig& task, Split split,
                          const std::string& origin = "jsonl") {
  Corpus corpus;
  corpus.split = split;
  corpus.dataset_id = task.dataset_id;
  std::set<std::string> ids;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    const std::size_t index = line_no++;
    if (trim_view(line).empty()) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(origin + " line " + std::to_string(index + 1) + ": " + e.what());
    }
    if (!obj.is_object())
      throw ParseError(origin + " line " + std::to_string(index + 1) + ": expected a JSON object");

    Record rec;
    rec.split = split;
    rec.record_id = obj.contains("id") ? stringify_cell(obj["id"]) : zero_padded(index);
    for (const auto& [key, value] : obj.items()) {
      if (key != "id") rec.fields.emplace(key, stringify_cell(value));
    }
    for (const auto& f : task.input_fields) rec.field(f);
    rec.field(task.output_field);
    if (!ids.insert(rec.record_id).second)
      throw DuplicateRecordId(origin + ": duplicate record id '" + rec.record_id + "'");
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

inline Corpus load_split(const std::filesystem::path& path, const TaskConfig& task, Split split) {
  return parse_split(read_file(path), task, split, path.string());
}

/// input_template with each `{field}` replaced verbatim, single pass.
inline std::string render_input(const Record& rec, const TaskConfig& task) {
  return substitute(task.input_template, [&](std::string_view name) -> const std::string* {
    if (std::find(task.input_fields.begin(), task.input_fields.end(), name) ==
        task.input_fields.end())
      return nullptr;
    return &rec.field(name);
  });
}

/// Maps a raw label string onto a class_id using case-fold + trim matching
/// against class ids and surface forms.
inline std::optional<std::string> match_label(const TaskConfig& task, std::string_view value) {
  if (!task.label_space) return std::nullopt;
  const auto norm = normalize_label(value);
  for (const auto& label : *task.label_space) {
    if (normalize_label(label.class_id) == norm) return label.class_id;
    for (const auto& f : label.surface_forms)
      if (normalize_label(f) == norm) return label.class_id;
  }
  return std::nullopt;
}

inline std::string render_output(const Record& rec, const TaskConfig& task) {
  const std::string& raw = rec.field(task.output_field);
  if (task.task_type != TaskType::class_output) return raw;
  auto id = match_label(task, raw);
  if (!id) throw UnknownLabelError("record " + rec.record_id + ": unknown label '" + raw + "'");
  return *id;
}

}  // namespace inctrl
