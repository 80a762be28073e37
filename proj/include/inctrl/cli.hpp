#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "inctrl/config.hpp"
#include "inctrl/corpus.hpp"
#include "inctrl/embedding.hpp"
#include "inctrl/inference.hpp"
#include "inctrl/metrics.hpp"
#include "inctrl/prompt.hpp"
#include "inctrl/retrieval.hpp"

namespace inctrl::cli {

/// Stable process exit codes.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,    // usage, config, schema or dataset problems
  kProviderError = 2,  // embedding provider unreachable or inconsistent
  kIoError = 3,        // unreadable/unwritable files, corrupt index
  kAllFailed = 4,      // run produced no successful record
};

inline int exit_code_for(const Error& e) {
  const auto& k = e.kind();
  if (k == "ProviderUnavailable" || k == "ProviderMismatch") return kProviderError;
  if (k == "IoError" || k == "FormatError" || k == "CacheCorruption") return kIoError;
  return kConfigError;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::optional<std::filesystem::path> cache_dir_from(const std::string& flag) {
  if (!flag.empty()) return std::filesystem::path(flag);
  if (const char* env = std::getenv("INCTRL_CACHE_DIR"); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

/// Reproducibility ledger written next to every index or prediction file.
struct RunManifest {
  std::string run_id;
  std::string command;
  std::string task_config_digest;
  std::string prompt_config_digest;
  std::optional<std::string> index_path;
  std::string backend_id;
  std::string provider_id;
  std::string started;
  std::string finished;
  std::uint64_t seed = 0;
  json inputs = json::object();

  json to_json() const {
    json j = {{"run_id", run_id},
              {"command", command},
              {"task_config_digest", task_config_digest},
              {"prompt_config_digest", prompt_config_digest},
              {"backend_id", backend_id},
              {"provider_id", provider_id},
              {"started", started},
              {"finished", finished},
              {"seed", seed},
              {"inputs", inputs}};
    j["index_path"] = index_path ? json(*index_path) : json(nullptr);
    return j;
  }
};

inline std::filesystem::path manifest_path_for(const std::filesystem::path& out) {
  auto p = out;
  p += ".manifest.json";
  return p;
}

/// run_id = UTC time + hash of the run's identity and a nanosecond clock, so
/// repeated runs into one directory never share an id.
inline std::string make_run_id(const RunManifest& m) {
  const auto ns = std::chrono::system_clock::now().time_since_epoch().count();
  const auto h = fnv1a64(m.command + m.task_config_digest + m.prompt_config_digest + std::to_string(m.seed) +
                         std::to_string(ns));
  std::string stamp = m.started;
  std::erase_if(stamp, [](char c) { return c == '-' || c == ':'; });
  return stamp + "-" + hex64(h).substr(0, 8);
}

inline void write_manifest(RunManifest m, const std::filesystem::path& out) {
  m.finished = utc_timestamp();
  m.run_id = make_run_id(m);
  write_file_atomic(manifest_path_for(out), m.to_json().dump(2) + "\n");
}

struct CommonArgs {
  std::string task_config;
  std::string prompt_config;
  std::string train;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
};

inline int cmd_index(const CommonArgs& a, const std::string& out, std::optional<double> ratio,
                     std::ostream& log) {
  RunManifest m;
  m.command = "index";
  m.started = utc_timestamp();
  auto task = load_task_config(a.task_config);
  const auto prompt = load_prompt_config(a.prompt_config);
  if (ratio) task.rag_ratio_r = *ratio;
  if (a.seed) task.seed = *a.seed;
  validate(task);
  const auto train = load_split(a.train, task, Split::train);
  auto provider = provider_from_env();
  const auto sample = subsample(train, task.rag_ratio_r, task.seed);
  const auto index = build_index(sample, *provider, task, cache_dir_from(a.cache_dir));
  save_index(index, out);

  m.task_config_digest = digest(task);
  m.prompt_config_digest = digest(prompt);
  m.index_path = out;
  m.provider_id = provider->provider_id();
  m.seed = task.seed;
  m.inputs = {{"task_config", a.task_config}, {"prompt_config", a.prompt_config}, {"train", a.train},
              {"rag_ratio_r", task.rag_ratio_r}, {"rng", Rng::kAlgorithm}};
  write_manifest(m, out);
  log << "indexed " << index.size() << " of " << train.size() << " records (r=" << task.rag_ratio_r
      << ", provider " << index.provider_id << ") -> " << out << "\n";
  return kOk;
}

struct RunArgs {
  std::string test;
  std::string out;
  std::string index;
  std::string dump_prompts;
  bool baseline = false;
  std::optional<std::size_t> max_in_flight;
  GenParams gen;
};

/// Loads configs and splits, failing with exit 1 on incompatible configs.
struct LoadedRun {
  TaskConfig task;
  PromptConfig prompt;
  Corpus train;
  Corpus test;
  std::optional<RetrievalIndex> index;
};

inline LoadedRun load_run_inputs(const CommonArgs& a, const std::string& test_path,
                                 const std::string& index_path, std::ostream& log) {
  LoadedRun r;
  r.task = load_task_config(a.task_config);
  if (a.seed) r.task.seed = *a.seed;
  r.prompt = load_prompt_config(a.prompt_config);
  const auto report = validate_pair(r.task, r.prompt);
  if (!report.ok()) {
    for (const auto& v : report.violations) log << "config violation: " << v << "\n";
    throw SchemaError("task and prompt configs are incompatible");
  }
  r.train = load_split(a.train, r.task, Split::train);
  r.test = load_split(test_path, r.task, Split::test);
  if (!index_path.empty()) r.index = load_index(index_path);
  return r;
}

/// The embedding provider is only contacted when retrieval is actually used.
inline std::unique_ptr<EmbeddingProvider> provider_for(const LoadedRun& r, bool baseline) {
  const bool needs = !baseline && r.task.f_rag && r.task.shots_k > 0 &&
                     r.prompt.section(Section::DEMONSTRATION).enabled;
  if (!needs) return std::make_unique<MockEmbeddingProvider>();
  return provider_from_env();
}

inline int cmd_run(const CommonArgs& a, RunArgs args, std::ostream& log) {
  RunManifest m;
  m.command = args.baseline ? "run --baseline" : "run";
  m.started = utc_timestamp();
  auto in = load_run_inputs(a, args.test, args.index, log);
  auto backend = backend_from_env();
  auto provider = provider_for(in, args.baseline);
  if (!args.gen.seed) args.gen.seed = in.task.seed;

  std::mutex dump_mutex;
  std::vector<std::optional<json>> dumped(in.test.size());
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < in.test.size(); ++i) position[in.test.records[i].record_id] = i;

  RunOptions opts;
  opts.baseline = args.baseline;
  opts.max_in_flight = args.max_in_flight;
  opts.index = in.index ? &*in.index : nullptr;
  opts.cache_dir = cache_dir_from(a.cache_dir);
  if (!args.dump_prompts.empty()) {
    opts.on_prompt = [&](const Record& q, const FinalPrompt& fp) {
      json j = spans_to_json(fp);
      j["prompt"] = fp.text;
      std::lock_guard lock(dump_mutex);
      dumped[position.at(q.record_id)] = std::move(j);
    };
  }

  const auto preds = run_task(in.task, in.prompt, in.train, in.test, *backend, *provider, args.gen, opts);
  write_file_atomic(args.out, predictions_to_jsonl(preds));
  if (!args.dump_prompts.empty()) {
    std::string text;
    for (const auto& d : dumped)
      if (d) text += d->dump() + "\n";
    write_file_atomic(args.dump_prompts, text);
  }

  m.task_config_digest = digest(in.task);
  m.prompt_config_digest = digest(in.prompt);
  if (!args.index.empty()) m.index_path = args.index;
  m.backend_id = backend->backend_id();
  m.provider_id = provider->provider_id();
  m.seed = in.task.seed;
  m.inputs = {{"task_config", a.task_config},
              {"prompt_config", a.prompt_config},
              {"train", a.train},
              {"test", args.test},
              {"baseline", args.baseline},
              {"max_new_tokens", args.gen.max_new_tokens},
              {"temperature", args.gen.temperature},
              {"stop", args.gen.stop_sequences}};
  write_manifest(m, args.out);

  const auto ok = std::count_if(preds.begin(), preds.end(), [](const PredictionRecord& p) { return p.ok(); });
  log << ok << "/" << preds.size() << " records succeeded -> " << args.out << "\n";
  for (const auto& p : preds)
    if (!p.ok()) log << "  " << p.record_id << ": " << p.error << "\n";
  if (!preds.empty() && ok == 0) return kAllFailed;
  return kOk;
}

inline int cmd_eval(const std::vector<std::string>& prediction_files,
                    const std::vector<std::string>& task_files, const std::string& out, std::ostream& stdout_,
                    std::ostream&) {
  std::vector<TaskConfig> tasks;
  for (const auto& f : task_files) tasks.push_back(load_task_config(f));
  std::vector<PredictionRecord> records;
  for (const auto& f : prediction_files) {
    auto part = load_predictions(f);
    records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const auto report = aggregate_report(records, tasks);
  write_file_atomic(out, to_json(report).dump(2) + "\n");
  stdout_ << report_table(report);
  return kOk;
}

inline int cmd_render(const CommonArgs& a, const std::string& test, const std::string& index_path,
                      const std::string& question_id, bool baseline, std::ostream& stdout_,
                      std::ostream& stderr_) {
  auto in = load_run_inputs(a, test, index_path, stderr_);
  const Record* q = in.test.find(question_id);
  if (!q) throw SchemaError("--question-id: no test record '" + question_id + "'");
  auto provider = provider_for(in, baseline);
  RunOptions opts;
  opts.baseline = baseline;
  opts.index = in.index ? &*in.index : nullptr;
  opts.cache_dir = cache_dir_from(a.cache_dir);
  const PromptPipeline pipeline(in.task, in.prompt, in.train, *provider, opts);
  const auto fp = pipeline.build(*q);
  stdout_ << fp.text;
  stderr_ << spans_to_json(fp).dump() << "\n";
  return kOk;
}

/// Entry point for the `inctrl` binary.
inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"In-context prompting toolkit: build retrieval indexes, run tasks, evaluate predictions"};
  app.require_subcommand(1);

  CommonArgs common;
  const auto add_common = [&](CLI::App* sub, bool train_required) {
    sub->add_option("--task-config", common.task_config, "task config JSON")->required();
    sub->add_option("--prompt-config", common.prompt_config, "prompt config JSON")->required();
    auto* train = sub->add_option("--train", common.train, "train split JSONL");
    if (train_required) train->required();
    sub->add_option("--seed", common.seed, "overrides the config seed");
    sub->add_option("--cache-dir", common.cache_dir, "embedding cache (default: $INCTRL_CACHE_DIR)");
  };

  auto* index_cmd = app.add_subcommand("index", "build a retrieval index from a train split");
  add_common(index_cmd, true);
  std::string index_out;
  std::optional<double> ratio;
  index_cmd->add_option("--out", index_out, "index file to write")->required();
  index_cmd->add_option("--ratio", ratio, "overrides rag_ratio_r");

  auto* run_cmd = app.add_subcommand("run", "run a task over a test split");
  add_common(run_cmd, true);
  RunArgs run;
  run_cmd->add_option("--test", run.test, "test split JSONL")->required();
  run_cmd->add_option("--out", run.out, "predictions JSONL to write")->required();
  run_cmd->add_option("--index", run.index, "prebuilt index (f_rag tasks)");
  run_cmd->add_flag("--baseline", run.baseline, "definition + input only, no demonstrations");
  run_cmd->add_option("--max-in-flight", run.max_in_flight, "concurrent records");
  run_cmd->add_option("--dump-prompts", run.dump_prompts, "write assembled prompts as JSONL");
  run_cmd->add_option("--max-new-tokens", run.gen.max_new_tokens, "generation length limit");
  run_cmd->add_option("--temperature", run.gen.temperature, "sampling temperature");
  run_cmd->add_option("--stop", run.gen.stop_sequences, "stop sequence (repeatable)");

  auto* eval_cmd = app.add_subcommand("eval", "score predictions and print a report");
  std::vector<std::string> pred_files, task_files;
  std::string report_out;
  eval_cmd->add_option("--predictions", pred_files, "predictions JSONL (repeatable)")->required();
  eval_cmd->add_option("--task-config", task_files, "task config JSON (repeatable)")->required();
  eval_cmd->add_option("--out", report_out, "report JSON to write")->required();

  auto* render_cmd = app.add_subcommand("render", "print the assembled prompt for one test record");
  add_common(render_cmd, true);
  std::string render_test, render_index, question_id;
  bool render_baseline = false;
  render_cmd->add_option("--test", render_test, "test split JSONL")->required();
  render_cmd->add_option("--question-id", question_id, "test record id")->required();
  render_cmd->add_option("--index", render_index, "prebuilt index");
  render_cmd->add_flag("--baseline", render_baseline, "baseline prompt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return kConfigError;
  }

  try {
    if (*index_cmd) return cmd_index(common, index_out, ratio, err);
    if (*run_cmd) return cmd_run(common, run, err);
    if (*eval_cmd) return cmd_eval(pred_files, task_files, report_out, out, err);
    if (*render_cmd) return cmd_render(common, render_test, render_index, question_id, render_baseline, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace inctrl::cli
