#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "inctrl/config.hpp"
#include "inctrl/corpus.hpp"
#include "inctrl/embedding.hpp"
#include "inctrl/http.hpp"
#include "inctrl/prompt.hpp"
#include "inctrl/retrieval.hpp"

namespace inctrl {

struct GenParams {
  std::size_t max_new_tokens = 256;
  double temperature = 0.0;
  std::vector<std::string> stop_sequences;
  std::optional<std::uint64_t> seed;
};

struct ScoreReply {
  std::vector<double> token_logprobs;
  std::size_t token_count = 0;
};

/// A completion service. Generation returns the continuation only; scoring
/// returns per-token log-probabilities of `continuation` given `prompt` under
/// the backend's own tokenizer.
class Backend {
public:
  virtual ~Backend() = default;
  virtual const std::string& backend_id() const = 0;
  virtual bool can_generate() const = 0;
  virtual bool can_score() const = 0;
  virtual std::string complete(const std::string& prompt, const GenParams& params) = 0;
  virtual ScoreReply token_logprobs(const std::string& prompt, const std::string& continuation) = 0;
};

struct ScoredLabel {
  std::string class_id;
  std::string best_surface;
  double logprob_sum = 0.0;
  std::size_t token_count = 1;
  double normalized = 0.0;

  bool operator==(const ScoredLabel&) const = default;
};

struct Classification {
  std::string predicted;
  std::vector<ScoredLabel> scores;  // config order
};

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

/// Cuts `text` at the earliest occurrence of any stop sequence.
inline std::string apply_stop_sequences(std::string text, const std::vector<std::string>& stops) {
  std::size_t cut = text.size();
  for (const auto& s : stops) {
    if (s.empty()) continue;
    const auto pos = text.find(s);
    if (pos != std::string::npos) cut = std::min(cut, pos);
  }
  text.resize(cut);
  return text;
}

inline std::string generate(Backend& backend, const FinalPrompt& prompt, const GenParams& params) {
  if (!backend.can_generate()) throw BackendError(backend.backend_id() + " cannot generate");
  return apply_stop_sequences(backend.complete(prompt.text, params), params.stop_sequences);
}

/// Returns (sum of token log-probabilities, token count).
inline std::pair<double, std::size_t> score_continuation(Backend& backend, const std::string& prompt,
                                                         const std::string& continuation) {
  if (continuation.empty()) throw EmptyContinuation("cannot score an empty continuation");
  if (!backend.can_score()) throw BackendError(backend.backend_id() + " cannot score");
  const auto reply = backend.token_logprobs(prompt, continuation);
  if (reply.token_count == 0 || reply.token_count != reply.token_logprobs.size())
    throw BackendError(backend.backend_id() + ": token_count " + std::to_string(reply.token_count) +
                       " does not match " + std::to_string(reply.token_logprobs.size()) + " logprobs");
  double sum = 0.0;
  for (double lp : reply.token_logprobs) {
    if (!std::isfinite(lp)) throw BackendError(backend.backend_id() + ": non-finite logprob");
    sum += lp;
  }
  return {sum, reply.token_count};
}

/// Vocabulary ranking: every surface form is scored as " " + form; a class
/// scores the max length-normalized log-likelihood over its forms, and the
/// prediction is the argmax over classes. Ties keep the earlier form/class.
inline Classification classify(Backend& backend, const FinalPrompt& prompt,
                               const std::vector<ClassLabel>& labels) {
  if (labels.size() < 2) throw SchemaError("label_space: needs at least 2 classes");
  Classification out;
  std::size_t best = 0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    ScoredLabel sl;
    sl.class_id = labels[c].class_id;
    bool first = true;
    for (const auto& form : labels[c].surface_forms) {
      const auto [sum, count] = score_continuation(backend, prompt.text, " " + form);
      const double norm = sum / static_cast<double>(count);
      if (first || norm > sl.normalized) {
        sl.best_surface = form;
        sl.logprob_sum = sum;
        sl.token_count = count;
        sl.normalized = norm;
        first = false;
      }
    }
    out.scores.push_back(std::move(sl));
    if (out.scores[c].normalized > out.scores[best].normalized) best = c;
  }
  out.predicted = out.scores[best].class_id;
  return out;
}

/// Output refinement per task category.
inline std::string postprocess(const std::string& raw, TaskType type) {
  switch (type) {
    case TaskType::class_output:
      return raw;
    case TaskType::code_output: {
      const auto open = raw.find("```");
      if (open == std::string::npos) return trim(raw);
      auto body = raw.find('\n', open + 3);
      body = body == std::string::npos ? raw.size() : body + 1;
      const auto close = raw.find("```", body);
      std::string inner = raw.substr(body, close == std::string::npos ? std::string::npos : close - body);
      while (!inner.empty() && is_ascii_space(inner.back())) inner.pop_back();
      return inner;
    }
    case TaskType::text_output: {
      const std::string t = trim(raw);
      static const std::regex paragraph_break("\n[ \t\r\f\v]*\n");
      std::smatch m;
      if (std::regex_search(t, m, paragraph_break)) {
        std::string first = trim(std::string_view(t).substr(0, static_cast<std::size_t>(m.position(0))));
        if (!first.empty()) return first;
      }
      return t;
    }
  }
  return raw;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Backend built from callables; absent callables mean the capability is missing.
class FunctionBackend final : public Backend {
public:
  using GenerateFn = std::function<std::string(const std::string&, const GenParams&)>;
  using ScoreFn = std::function<ScoreReply(const std::string&, const std::string&)>;

  FunctionBackend(std::string id, GenerateFn gen, ScoreFn score)
      : id_(std::move(id)), gen_(std::move(gen)), score_(std::move(score)) {}

  const std::string& backend_id() const override { return id_; }
  bool can_generate() const override { return static_cast<bool>(gen_); }
  bool can_score() const override { return static_cast<bool>(score_); }
  std::string complete(const std::string& prompt, const GenParams& params) override {
    return gen_(prompt, params);
  }
  ScoreReply token_logprobs(const std::string& prompt, const std::string& continuation) override {
    return score_(prompt, continuation);
  }

private:
  std::string id_;
  GenerateFn gen_;
  ScoreFn score_;
};

/// In-process fixture backend. Rules are checked in order; the first whose
/// matcher accepts the prompt wins.
///
///   {
///     "backend_id": "mock",
///     "max_prompt_chars": 100000,                       // optional
///     "fail_prompt_contains": ["..."],                  // optional -> BackendError
///     "generate": [{"prompt_hash": "<fnv1a64 hex>" | "prompt_contains": "...",
///                   "text": "..."}],
///     "default_text": "...",                            // optional
///     "score": [{"prompt_hash" | "prompt_contains" (optional),
///                "continuation": " yes", "token_logprobs": [-0.5]}],
///     "default_token_logprobs": [-10.0]                 // optional
///   }
class MockBackend final : public Backend {
public:
  struct Matcher {
    std::optional<std::string> prompt_hash;
    std::optional<std::string> prompt_contains;

    bool accepts(const std::string& prompt, const std::string& hash) const {
      if (prompt_hash && *prompt_hash != hash) return false;
      if (prompt_contains && prompt.find(*prompt_contains) == std::string::npos) return false;
      return true;
    }
  };
  struct GenerateRule {
    Matcher match;
    std::string text;
  };
  struct ScoreRule {
    Matcher match;
    std::string continuation;
    std::vector<double> token_logprobs;
  };

  std::string id = "mock";
  std::vector<GenerateRule> generate_rules;
  std::optional<std::string> default_text;
  std::vector<ScoreRule> score_rules;
  std::optional<std::vector<double>> default_token_logprobs;
  std::vector<std::string> fail_prompt_contains;
  std::optional<std::size_t> max_prompt_chars;

  static std::string prompt_hash(const std::string& prompt) { return hex64(fnv1a64(prompt)); }

  static MockBackend from_json(const json& j) {
    detail::ObjectReader r(j, "mock backend");
    r.reject_unknown({"backend_id", "max_prompt_chars", "fail_prompt_contains", "generate",
                      "default_text", "score", "default_token_logprobs"});
    MockBackend b;
    if (r.has("backend_id")) b.id = r.string("backend_id");
    if (r.has("max_prompt_chars")) b.max_prompt_chars = r.unsigned_int("max_prompt_chars", 0);
    if (r.has("fail_prompt_contains")) b.fail_prompt_contains = r.strings("fail_prompt_contains");
    if (r.has("default_text")) b.default_text = r.string("default_text");
    if (r.has("default_token_logprobs"))
      b.default_token_logprobs = r.raw("default_token_logprobs").get<std::vector<double>>();
    const auto matcher = [](const detail::ObjectReader& rr) {
      Matcher m;
      if (rr.has("prompt_hash")) m.prompt_hash = rr.string("prompt_hash");
      if (rr.has("prompt_contains")) m.prompt_contains = rr.string("prompt_contains");
      return m;
    };
    if (r.has("generate")) {
      for (const auto& g : r.raw("generate")) {
        detail::ObjectReader gr(g, "generate");
        gr.reject_unknown({"prompt_hash", "prompt_contains", "text"});
        b.generate_rules.push_back({matcher(gr), gr.string("text")});
      }
    }
    if (r.has("score")) {
      for (const auto& s : r.raw("score")) {
        detail::ObjectReader sr(s, "score");
        sr.reject_unknown({"prompt_hash", "prompt_contains", "continuation", "token_logprobs"});
        b.score_rules.push_back({matcher(sr), sr.string("continuation"),
                                 sr.raw("token_logprobs").get<std::vector<double>>()});
      }
    }
    return b;
  }

  static MockBackend load(const std::filesystem::path& path) {
    return from_json(detail::parse_json_text(read_file(path), path.string()));
  }

  const std::string& backend_id() const override { return id; }
  bool can_generate() const override { return !generate_rules.empty() || default_text.has_value(); }
  bool can_score() const override { return !score_rules.empty() || default_token_logprobs.has_value(); }

  std::string complete(const std::string& prompt, const GenParams&) override {
    check(prompt);
    const auto h = prompt_hash(prompt);
    for (const auto& rule : generate_rules)
      if (rule.match.accepts(prompt, h)) return rule.text;
    if (default_text) return *default_text;
    throw BackendError(id + ": no generate rule matches prompt " + h);
  }

  ScoreReply token_logprobs(const std::string& prompt, const std::string& continuation) override {
    check(prompt);
    const auto h = prompt_hash(prompt);
    for (const auto& rule : score_rules)
      if (rule.continuation == continuation && rule.match.accepts(prompt, h))
        return {rule.token_logprobs, rule.token_logprobs.size()};
    if (default_token_logprobs) return {*default_token_logprobs, default_token_logprobs->size()};
    throw BackendError(id + ": no score rule for continuation '" + continuation + "'");
  }

private:
  void check(const std::string& prompt) const {
    for (const auto& needle : fail_prompt_contains)
      if (prompt.find(needle) != std::string::npos) throw BackendError(id + ": simulated failure");
    if (max_prompt_chars && prompt.size() > *max_prompt_chars)
      throw PromptTooLong(id + ": prompt of " + std::to_string(prompt.size()) + " chars");
  }
};

/// Wire protocol: POST <base>/generate and POST <base>/score.
class HttpBackend final : public Backend {
public:
  explicit HttpBackend(const std::string& base_url, http::RetryPolicy policy = {})
      : base_(http::parse_url(base_url)), policy_(policy), id_("http:" + base_url) {}

  const std::string& backend_id() const override { return id_; }
  bool can_generate() const override { return true; }
  bool can_score() const override { return true; }

  std::string complete(const std::string& prompt, const GenParams& params) override {
    json body = {{"prompt", prompt},
                 {"max_tokens", params.max_new_tokens},
                 {"temperature", params.temperature},
                 {"stop", params.stop_sequences}};
    if (params.seed) body["seed"] = *params.seed;
    const auto reply = post("/generate", body);
    if (!reply.contains("text") || !reply["text"].is_string())
      throw BackendError(id_ + ": generate reply lacks \"text\"");
    return reply["text"].get<std::string>();
  }

  ScoreReply token_logprobs(const std::string& prompt, const std::string& continuation) override {
    const auto reply = post("/score", {{"prompt", prompt}, {"continuation", continuation}});
    try {
      return {reply.at("token_logprobs").get<std::vector<double>>(),
              reply.at("token_count").get<std::size_t>()};
    } catch (const json::exception& e) {
      throw BackendError(id_ + ": malformed score reply: " + e.what());
    }
  }

private:
  json post(const std::string& route, const json& body) const {
    return http::post_json(http::join(base_, route), body, policy_, [&](const http::Failure& f) {
      if (f.status == 413) throw PromptTooLong(id_ + ": " + f.message);
      throw BackendError(id_ + route + ": " + f.message);
    });
  }

  http::Endpoint base_;
  http::RetryPolicy policy_;
  std::string id_;
};

/// INCTRL_BACKEND_URL: "mock:<fixture.json>" or an http(s) base URL.
inline std::unique_ptr<Backend> backend_from_env(http::RetryPolicy policy = {}) {
  const char* env = std::getenv("INCTRL_BACKEND_URL");
  const std::string url = env ? env : "";
  if (url.empty()) throw SchemaError("INCTRL_BACKEND_URL is not set");
  if (url.rfind("mock:", 0) == 0) return std::make_unique<MockBackend>(MockBackend::load(url.substr(5)));
  return std::make_unique<HttpBackend>(url, policy);
}

// ---------------------------------------------------------------------------
// Predictions
// ---------------------------------------------------------------------------

struct PredictionRecord {
  std::string record_id;
  std::string task_id;
  std::string dataset_id;
  TaskType task_type = TaskType::text_output;
  std::string status = "ok";  // "ok" | "error"
  std::string error;
  std::size_t prompt_chars = 0;
  std::vector<std::string> demo_ids;
  std::size_t truncated_demo_count = 0;
  std::string raw_output;
  std::string final_output;
  std::optional<std::string> predicted_class;
  std::optional<std::vector<ScoredLabel>> label_scores;
  std::string reference;
  std::uint64_t latency_ms = 0;

  bool ok() const noexcept { return status == "ok"; }
};

inline json to_json(const PredictionRecord& p) {
  json j = {{"record_id", p.record_id},
            {"task_id", p.task_id},
            {"dataset_id", p.dataset_id},
            {"task_type", to_string(p.task_type)},
            {"status", p.status},
            {"prompt_chars", p.prompt_chars},
            {"demo_ids", p.demo_ids},
            {"truncated_demo_count", p.truncated_demo_count},
            {"raw_output", p.raw_output},
            {"final_output", p.final_output},
            {"reference", p.reference},
            {"latency_ms", p.latency_ms}};
  if (!p.error.empty()) j["error"] = p.error;
  if (p.predicted_class) j["predicted_class"] = *p.predicted_class;
  if (p.label_scores) {
    json scores = json::array();
    for (const auto& s : *p.label_scores)
      scores.push_back({{"class_id", s.class_id},
                        {"best_surface", s.best_surface},
                        {"logprob_sum", s.logprob_sum},
                        {"token_count", s.token_count},
                        {"normalized", s.normalized}});
    j["label_scores"] = std::move(scores);
  }
  return j;
}

inline PredictionRecord prediction_from_json(const json& j) {
  detail::ObjectReader r(j, "prediction");
  r.reject_unknown({"record_id", "task_id", "dataset_id", "task_type", "status", "error",
                    "prompt_chars", "demo_ids", "truncated_demo_count", "raw_output",
                    "final_output", "predicted_class", "label_scores", "reference", "latency_ms"});
  PredictionRecord p;
  p.record_id = r.string("record_id");
  p.task_id = r.string("task_id");
  p.dataset_id = r.string("dataset_id");
  const auto type = parse_task_type(r.string("task_type"));
  if (!type) throw SchemaError("prediction.task_type: unknown value");
  p.task_type = *type;
  p.status = r.string("status");
  if (r.has("error")) p.error = r.string("error");
  p.prompt_chars = r.unsigned_int("prompt_chars", 0);
  p.demo_ids = r.strings("demo_ids");
  p.truncated_demo_count = r.unsigned_int("truncated_demo_count", 0);
  p.raw_output = r.string("raw_output");
  p.final_output = r.string("final_output");
  if (r.has("predicted_class")) p.predicted_class = r.string("predicted_class");
  if (r.has("label_scores")) {
    std::vector<ScoredLabel> scores;
    for (const auto& s : r.raw("label_scores")) {
      detail::ObjectReader sr(s, "label_scores");
      scores.push_back({sr.string("class_id"), sr.string("best_surface"), sr.number("logprob_sum", 0),
                        sr.unsigned_int("token_count", 1), sr.number("normalized", 0)});
    }
    p.label_scores = std::move(scores);
  }
  p.reference = r.string("reference");
  p.latency_ms = r.unsigned_int("latency_ms", 0);
  return p;
}

inline std::string predictions_to_jsonl(const std::vector<PredictionRecord>& preds) {
  std::string out;
  for (const auto& p : preds) {
    out += to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<PredictionRecord> parse_predictions(std::string_view text,
                                                       const std::string& origin = "predictions") {
  std::vector<PredictionRecord> out;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (trim_view(line).empty()) continue;
    try {
      out.push_back(prediction_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ParseError(origin + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  return parse_predictions(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct RunOptions {
  /// Definition + input only, no demonstrations.
  bool baseline = false;
  /// Overrides TaskConfig::max_in_flight when set.
  std::optional<std::size_t> max_in_flight;
  /// Prebuilt index for f_rag runs; built from the train split otherwise.
  const RetrievalIndex* index = nullptr;
  std::optional<std::filesystem::path> cache_dir;
  /// Observes each assembled prompt (called concurrently; must synchronize).
  std::function<void(const Record&, const FinalPrompt&)> on_prompt;
};

/// Seed for the random-demonstration draw of one question, so different
/// questions see different draws while the run stays reproducible.
inline std::uint64_t question_seed(std::uint64_t seed, const std::string& question_id) {
  return splitmix64(seed ^ fnv1a64(question_id));
}

/// Per-question prompt construction shared by runs and the render command:
/// demonstration selection (retrieval when f_rag, seeded random draw
/// otherwise), assembly, and the length budget. Setup problems throw from the
/// constructor; build() is const and safe to call concurrently.
class PromptPipeline {
public:
  PromptPipeline(const TaskConfig& task, const PromptConfig& cfg, const Corpus& train,
                 EmbeddingProvider& provider, const RunOptions& opts = {})
      : task_(task), cfg_(cfg), train_(train), provider_(provider), opts_(opts) {
    wants_demos_ = !opts.baseline && task.shots_k > 0 && cfg.section(Section::DEMONSTRATION).enabled;
    if (wants_demos_ && train.empty()) throw EmptyCorpus("train split is empty but shots_k > 0");
    if (wants_demos_ && task.f_rag) {
      if (opts.index) {
        index_ = opts.index;
        if (index_->dataset_id != task.dataset_id)
          throw SchemaError("index dataset '" + index_->dataset_id + "' does not match task dataset '" +
                            task.dataset_id + "'");
        if (index_->provider_id != provider.provider_id() || index_->dim != provider.dim())
          throw ProviderMismatch("index provider " + index_->provider_id + " vs " + provider.provider_id());
      } else {
        built_ = build_index(subsample(train, task.rag_ratio_r, task.seed), provider, task, opts.cache_dir);
        index_ = &*built_;
      }
    }
    for (const auto& r : train.records) train_by_id_.emplace(r.record_id, &r);
  }

  PromptPipeline(const PromptPipeline&) = delete;
  PromptPipeline& operator=(const PromptPipeline&) = delete;

  bool uses_retrieval() const noexcept { return index_ != nullptr; }
  const RetrievalIndex* index() const noexcept { return index_; }

  std::vector<Demonstration> select_demos(const Record& q) const {
    std::vector<Demonstration> demos;
    if (!wants_demos_) return demos;
    const auto ranked = index_ ? query_top_k(*index_, render_input(q, task_), task_.shots_k, provider_,
                                             opts_.cache_dir)
                               : select_random_demos(train_, task_.shots_k,
                                                     question_seed(task_.seed, q.record_id));
    for (const auto& rd : ranked) {
      auto it = train_by_id_.find(rd.record_id);
      if (it == train_by_id_.end())
        throw MissingFieldError("index entry '" + rd.record_id + "' is not in the train split");
      demos.push_back(make_demonstration(*it->second, task_, rd.similarity));
    }
    return demos;
  }

  FinalPrompt build(const Record& q) const {
    if (opts_.baseline) {
      auto fp = baseline_prompt(task_, cfg_, q);
      if (fp.text.size() > task_.max_prompt_chars)
        throw BudgetTooSmall("baseline prompt exceeds max_prompt_chars");
      return fp;
    }
    auto parts = build_parts(task_, cfg_, select_demos(q), q);
    fit_to_budget(parts, task_.max_prompt_chars);
    return render(parts);
  }

private:
  const TaskConfig& task_;
  const PromptConfig& cfg_;
  const Corpus& train_;
  EmbeddingProvider& provider_;
  RunOptions opts_;
  bool wants_demos_ = false;
  std::optional<RetrievalIndex> built_;
  const RetrievalIndex* index_ = nullptr;
  std::map<std::string, const Record*, std::less<>> train_by_id_;
};

/// End-to-end pipeline over a test split. Only setup problems (capabilities,
/// empty train split, index build) throw; per-record failures are recorded.
inline std::vector<PredictionRecord> run_task(const TaskConfig& task, const PromptConfig& cfg,
                                              const Corpus& train, const Corpus& test, Backend& backend,
                                              EmbeddingProvider& provider, const GenParams& params,
                                              const RunOptions& opts = {}) {
  const bool is_class = task.task_type == TaskType::class_output;
  if (is_class && !backend.can_score())
    throw SchemaError(backend.backend_id() + " lacks the score capability needed by class_output");
  if (!is_class && !backend.can_generate())
    throw SchemaError(backend.backend_id() + " lacks the generate capability");

  const PromptPipeline pipeline(task, cfg, train, provider, opts);

  const auto run_one = [&](const Record& q) {
    PredictionRecord pred;
    pred.record_id = q.record_id;
    pred.task_id = task.task_id;
    pred.dataset_id = task.dataset_id;
    pred.task_type = task.task_type;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      pred.reference = q.field(task.output_field);
      pred.reference = render_output(q, task);

      const FinalPrompt fp = pipeline.build(q);
      pred.prompt_chars = fp.text.size();
      pred.demo_ids = fp.demo_ids;
      pred.truncated_demo_count = fp.truncated_demo_count;
      if (opts.on_prompt) opts.on_prompt(q, fp);

      if (is_class) {
        auto c = classify(backend, fp, *task.label_space);
        pred.predicted_class = c.predicted;
        pred.final_output = c.predicted;
        for (const auto& s : c.scores)
          if (s.class_id == c.predicted) pred.raw_output = s.best_surface;
        pred.label_scores = std::move(c.scores);
      } else {
        pred.raw_output = generate(backend, fp, params);
        pred.final_output = postprocess(pred.raw_output, task.task_type);
      }
    } catch (const std::exception& e) {
      pred.status = "error";
      pred.error = e.what();
    }
    pred.latency_ms = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count());
    return pred;
  };

  std::vector<PredictionRecord> out(test.size());
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(opts.max_in_flight.value_or(task.max_in_flight), test.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < test.size(); ++i) out[i] = run_one(test.records[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < test.size(); i = next.fetch_add(1))
        out[i] = run_one(test.records[i]);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace inctrl
