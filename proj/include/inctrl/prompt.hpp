#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "inctrl/config.hpp"
#include "inctrl/corpus.hpp"

namespace inctrl {

struct Demonstration {
  std::string record_id;
  std::string input_text;
  std::string output_text;
  double similarity = 0.0;
};

/// Byte range [first, second) of a section inside FinalPrompt::text.
using Span = std::pair<std::size_t, std::size_t>;

struct FinalPrompt {
  std::string text;
  std::map<Section, Span> section_spans;
  std::vector<std::string> demo_ids;  // in prompt order
  std::string question_id;
  std::size_t truncated_demo_count = 0;

  std::string_view section_text(Section s) const {
    const auto [b, e] = section_spans.at(s);
    return std::string_view(text).substr(b, e - b);
  }
};

/// Rendered sections before joining. DEMONSTRATION is kept as a header plus
/// an ordered list so the budget policy can drop individual demonstrations.
struct PromptParts {
  std::map<Section, std::string> sections;  // every section except DEMONSTRATION
  std::string demo_header;
  std::vector<Demonstration> demos;         // prompt order: least similar first
  std::vector<std::string> formatted_demos; // parallel to demos
  std::string separator;
  std::string question_id;
  std::size_t truncated_demo_count = 0;
};

inline std::string format_demonstration(const Demonstration& demo, const PromptConfig& cfg) {
  return substitute(cfg.demo_template, FieldMap{{"input", demo.input_text}, {"output", demo.output_text}});
}

/// Text a demonstration shows as its answer. Class-output tasks show the
/// class's first surface form, the same strings classification scores.
inline std::string demo_output_text(const Record& rec, const TaskConfig& task) {
  auto out = render_output(rec, task);
  if (task.task_type != TaskType::class_output) return out;
  for (const auto& l : *task.label_space)
    if (l.class_id == out) return l.surface_forms.front();
  return out;
}

inline Demonstration make_demonstration(const Record& rec, const TaskConfig& task, double similarity) {
  Demonstration d{rec.record_id, render_input(rec, task), demo_output_text(rec, task), similarity};
  if (d.input_text.empty() || d.output_text.empty())
    throw MissingFieldError("record " + rec.record_id + ": demonstration input/output is empty");
  return d;
}

namespace detail {

inline std::string render_section_text(const std::string& text, const Record& question,
                                       const TaskConfig& task) {
  return substitute(text, [&](std::string_view name) -> const std::string* {
    if (std::find(task.input_fields.begin(), task.input_fields.end(), name) == task.input_fields.end())
      return nullptr;
    return &question.field(name);
  });
}

/// The query as the model sees it: the demo template's input half (up to
/// `{output}`) with trailing blanks removed, so the prompt ends on the answer
/// cue. Falls back to the bare rendered input when `{output}` precedes `{input}`.
inline std::string question_body(const std::string& rendered_input, const PromptConfig& cfg) {
  const auto& t = cfg.demo_template;
  const auto in_pos = t.find("{input}");
  const auto out_pos = t.find("{output}");
  if (in_pos == std::string::npos || out_pos == std::string::npos || out_pos < in_pos)
    return rendered_input;
  std::string tail = t.substr(in_pos + 7, out_pos - in_pos - 7);
  while (!tail.empty() && (tail.back() == ' ' || tail.back() == '\t')) tail.pop_back();
  return t.substr(0, in_pos) + rendered_input + tail;
}

inline std::string demonstration_block(const PromptParts& p) {
  if (p.formatted_demos.empty()) return {};
  std::string out = p.demo_header;
  for (const auto& d : p.formatted_demos) {
    if (!out.empty()) out += p.separator;
    out += d;
  }
  return out;
}

}  // namespace detail

/// Joins non-empty sections in canonical order. Empty or disabled sections
/// get a zero-length span and contribute no separator.
inline FinalPrompt render(const PromptParts& parts) {
  FinalPrompt fp;
  fp.question_id = parts.question_id;
  fp.truncated_demo_count = parts.truncated_demo_count;
  for (const auto& d : parts.demos) fp.demo_ids.push_back(d.record_id);
  for (auto s : kSections) {
    const std::string content =
        s == Section::DEMONSTRATION ? detail::demonstration_block(parts) : parts.sections.at(s);
    if (content.empty()) {
      fp.section_spans[s] = {fp.text.size(), fp.text.size()};
      continue;
    }
    if (!fp.text.empty()) fp.text += parts.separator;
    const auto begin = fp.text.size();
    fp.text += content;
    fp.section_spans[s] = {begin, fp.text.size()};
  }
  return fp;
}

inline std::size_t rendered_length(const PromptParts& parts) { return render(parts).text.size(); }

/// Orders demonstrations least similar first, most similar adjacent to the
/// question. Among equal similarities, later input positions come first, so a
/// rank-ordered input list ends with rank 1.
inline PromptParts build_parts(const TaskConfig& task, const PromptConfig& cfg,
                               const std::vector<Demonstration>& demos, const Record& question) {
  PromptParts p;
  p.separator = cfg.section_separator;
  p.question_id = question.record_id;
  for (auto s : kSections) {
    if (s == Section::DEMONSTRATION) continue;
    const auto& spec = cfg.section(s);
    if (s == Section::QUESTION) {
      const auto header = detail::render_section_text(spec.text, question, task);
      const auto body = detail::question_body(render_input(question, task), cfg);
      p.sections[s] = header.empty() ? body : header + "\n" + body;
    } else {
      p.sections[s] = spec.enabled ? detail::render_section_text(spec.text, question, task) : "";
    }
  }
  const auto& demo_spec = cfg.section(Section::DEMONSTRATION);
  if (demo_spec.enabled && !demos.empty()) {
    p.demo_header = detail::render_section_text(demo_spec.text, question, task);
    std::vector<std::size_t> order(demos.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (demos[a].similarity != demos[b].similarity) return demos[a].similarity < demos[b].similarity;
      return a > b;
    });
    for (auto i : order) {
      p.demos.push_back(demos[i]);
      p.formatted_demos.push_back(format_demonstration(demos[i], cfg));
    }
  }
  return p;
}

inline FinalPrompt assemble(const TaskConfig& task, const PromptConfig& cfg,
                            const std::vector<Demonstration>& demos, const Record& question) {
  return render(build_parts(task, cfg, demos, question));
}

/// Drops demonstrations from the front (least similar / last drawn) until the
/// rendered prompt fits. Returns how many were dropped.
inline std::size_t fit_to_budget(PromptParts& parts, std::size_t max_chars) {
  PromptParts fixed = parts;
  fixed.demos.clear();
  fixed.formatted_demos.clear();
  const auto fixed_len = rendered_length(fixed);
  if (fixed_len > max_chars)
    throw BudgetTooSmall("fixed sections and question need " + std::to_string(fixed_len) +
                         " chars, budget is " + std::to_string(max_chars));
  std::size_t dropped = 0;
  while (!parts.demos.empty() && rendered_length(parts) > max_chars) {
    parts.demos.erase(parts.demos.begin());
    parts.formatted_demos.erase(parts.formatted_demos.begin());
    ++dropped;
  }
  parts.truncated_demo_count += dropped;
  return dropped;
}

/// Plain comparison prompt: DEFINITION followed by the bare rendered input.
inline FinalPrompt baseline_prompt(const TaskConfig& task, const PromptConfig& cfg,
                                   const Record& question) {
  PromptParts p;
  p.separator = cfg.section_separator;
  p.question_id = question.record_id;
  for (auto s : kSections)
    if (s != Section::DEMONSTRATION) p.sections[s] = "";
  const auto& def = cfg.section(Section::DEFINITION);
  if (def.enabled) p.sections[Section::DEFINITION] = detail::render_section_text(def.text, question, task);
  p.sections[Section::QUESTION] = render_input(question, task);
  return render(p);
}

/// Span map as JSON ({"SECTION": [begin, end], ...}) plus provenance.
inline json spans_to_json(const FinalPrompt& fp) {
  json spans = json::object();
  for (const auto& [s, span] : fp.section_spans)
    spans[std::string(to_string(s))] = {span.first, span.second};
  return {{"question_id", fp.question_id},
          {"demo_ids", fp.demo_ids},
          {"truncated_demo_count", fp.truncated_demo_count},
          {"section_spans", std::move(spans)}};
}

}  // namespace inctrl
