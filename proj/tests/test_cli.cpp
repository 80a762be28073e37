#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <sstream>

#include "inctrl/cli.hpp"
#include "test_support.hpp"

namespace inctrl {
namespace {

using json = nlohmann::json;
using testing::slurp;
using testing::TempDir;

const std::string kBin = INCTRL_BIN;
const std::string kData = INCTRL_TEST_DATA;
const std::string kGolden = INCTRL_GOLDEN_DIR;

std::string data(const std::string& name) { return kData + "/" + name; }

struct Spawned {
  int code;
  std::string output;  // stdout + stderr
};

/// Runs the real binary under `env` (a "K=V K=V" prefix for /bin/sh).
Spawned spawn(const std::string& env, const std::string& args) {
  const std::string cmd = "env -u INCTRL_EMBED_URL -u INCTRL_BACKEND_URL -u INCTRL_CACHE_DIR " + env + " '" +
                          kBin + "' " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  std::array<char, 4096> buf{};
  while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string common(const std::string& task) {
  return "--task-config " + data(task + ".task.json") + " --prompt-config " + data(task + ".prompt.json") +
         " --train " + data(task + ".train.jsonl");
}

std::string backend_env() { return "INCTRL_BACKEND_URL=mock:" + data("backend.mock.json"); }

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

TEST(CliIndex, WritesIndexAndManifest) {
  TempDir tmp;
  const auto out = (tmp / "s.idx").string();
  const auto r = spawn("INCTRL_EMBED_URL=mock", "index " + common("summarize") + " --out " + out);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto idx = load_index(out);
  EXPECT_EQ(idx.entries.size(), 6u);
  EXPECT_EQ(idx.dataset_id, "codesearchnet-java-mini");
  const auto manifest = json::parse(slurp(out + ".manifest.json"));
  EXPECT_EQ(manifest.at("task_config_digest"), digest(load_task_config(data("summarize.task.json"))));
  EXPECT_EQ(manifest.at("provider_id"), "mock-hash/256");
}

TEST(CliIndex, RatioAndSeedOverrides) {
  TempDir tmp;
  const auto out = (tmp / "s.idx").string();
  const auto r = spawn("", "index " + common("summarize") + " --out " + out + " --ratio 0.5 --seed 9");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto idx = load_index(out);
  EXPECT_EQ(idx.entries.size(), 3u);
  EXPECT_EQ(idx.ratio_r, 0.5);
  EXPECT_EQ(idx.seed, 9u);
}

TEST(CliIndex, MissingTrainIsUsageError) {
  TempDir tmp;
  const auto r = spawn("", "index --task-config " + data("summarize.task.json") + " --prompt-config " +
                               data("summarize.prompt.json") + " --out " + (tmp / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--train"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("Usage"), std::string::npos) << r.output;
}

TEST(CliIndex, UnreachableProviderExitsTwo) {
  TempDir tmp;
  const auto r = spawn("INCTRL_EMBED_URL=http://127.0.0.1:1/embed",
                       "index " + common("summarize") + " --out " + (tmp / "x").string());
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST(CliIndex, UnreadableTrainExitsThree) {
  TempDir tmp;
  const auto r = spawn("", "index --task-config " + data("summarize.task.json") + " --prompt-config " +
                               data("summarize.prompt.json") + " --train " + (tmp / "nope.jsonl").string() +
                               " --out " + (tmp / "x").string());
  EXPECT_EQ(r.code, 3) << r.output;
}

TEST(CliIndex, InvalidConfigExitsOne) {
  TempDir tmp;
  const auto bad = tmp.write("bad.json", R"({"task_id": "x"})");
  const auto r = spawn("", "index --task-config " + bad.string() + " --prompt-config " + data("summarize.prompt.json") +
                               " --train " + data("summarize.train.jsonl") + " --out " + (tmp / "x").string());
  EXPECT_EQ(r.code, 1) << r.output;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

TEST(CliRun, MockBackendWritesOneLinePerRecord) {
  TempDir tmp;
  const auto out = (tmp / "p.jsonl").string();
  const auto r = spawn(backend_env(), "run " + common("summarize") + " --test " + data("summarize.test.jsonl") +
                                          " --out " + out + " --cache-dir " + (tmp / "cache").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto preds = load_predictions(out);
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(line_count(slurp(out)), 3u);
  EXPECT_EQ(preds[0].record_id, "q1");
  // the fixture answer continues past a paragraph break; text post-processing keeps the first one
  EXPECT_EQ(preds[0].final_output, "Returns the difference of two integers.");
  const auto manifest = json::parse(slurp(out + ".manifest.json"));
  EXPECT_EQ(manifest.at("backend_id"), "fixture-backend");
  EXPECT_EQ(manifest.at("prompt_config_digest"), digest(load_prompt_config(data("summarize.prompt.json"))));
}

TEST(CliRun, BaselinePromptsHaveOnlyDefinitionAndQuestion) {
  TempDir tmp;
  const auto dump = (tmp / "prompts.jsonl").string();
  const auto r = spawn(backend_env(), "run " + common("repair") + " --test " + data("repair.test.jsonl") + " --out " +
                                          (tmp / "p.jsonl").string() + " --baseline --dump-prompts " + dump);
  ASSERT_EQ(r.code, 0) << r.output;
  std::istringstream lines(slurp(dump));
  std::size_t n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    const auto j = json::parse(line);
    const auto& spans = j.at("section_spans");
    for (const auto& [name, span] : spans.items()) {
      const bool empty = span[0] == span[1];
      EXPECT_EQ(empty, name != "DEFINITION" && name != "QUESTION") << name;
    }
    EXPECT_TRUE(j.at("demo_ids").empty());
    EXPECT_EQ(j.at("prompt").get<std::string>().rfind("Program repair:", 0), 0u);
  }
  EXPECT_EQ(n, 2u);
}

TEST(CliRun, BackendDownExitsFour) {
  TempDir tmp;
  const auto r = spawn("INCTRL_BACKEND_URL=http://127.0.0.1:1",
                       "run " + common("repair") + " --test " + data("repair.test.jsonl") + " --out " +
                           (tmp / "p.jsonl").string());
  EXPECT_EQ(r.code, 4) << r.output;
  const auto preds = load_predictions(tmp / "p.jsonl");
  ASSERT_EQ(preds.size(), 2u);
  EXPECT_FALSE(preds[0].ok());
}

TEST(CliRun, PartialFailureStillSucceeds) {
  TempDir tmp;
  auto fixture = json::parse(slurp(data("backend.mock.json")));
  fixture["fail_prompt_contains"] = {"int dec"};
  const auto path = tmp.write("b.json", fixture.dump());
  const auto r = spawn("INCTRL_BACKEND_URL=mock:" + path.string(),
                       "run " + common("repair") + " --test " + data("repair.test.jsonl") + " --out " +
                           (tmp / "p.jsonl").string());
  EXPECT_EQ(r.code, 0) << r.output;
  const auto preds = load_predictions(tmp / "p.jsonl");
  EXPECT_FALSE(preds[0].ok());
  EXPECT_TRUE(preds[1].ok());
}

TEST(CliRun, PrebuiltIndexGivesSameDemos) {
  TempDir tmp;
  const auto idx = (tmp / "s.idx").string();
  ASSERT_EQ(spawn("", "index " + common("summarize") + " --out " + idx).code, 0);
  const std::string base = "run " + common("summarize") + " --test " + data("summarize.test.jsonl");
  ASSERT_EQ(spawn(backend_env(), base + " --out " + (tmp / "a.jsonl").string()).code, 0);
  ASSERT_EQ(spawn(backend_env(), base + " --index " + idx + " --out " + (tmp / "b.jsonl").string()).code, 0);
  const auto a = load_predictions(tmp / "a.jsonl");
  const auto b = load_predictions(tmp / "b.jsonl");
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].demo_ids, b[i].demo_ids);
}

TEST(CliRun, IndexFromOtherDatasetIsRejected) {
  TempDir tmp;
  const auto idx = (tmp / "v.idx").string();
  ASSERT_EQ(spawn("", "index " + common("vuln") + " --out " + idx).code, 0);
  const auto r = spawn(backend_env(), "run " + common("summarize") + " --test " + data("summarize.test.jsonl") +
                                          " --index " + idx + " --out " + (tmp / "p.jsonl").string());
  EXPECT_NE(r.code, 0);
}

TEST(CliRun, CorruptIndexExitsThree) {
  TempDir tmp;
  const auto idx = tmp.write("bad.idx", "IIDXgarbage");
  const auto r = spawn(backend_env(), "run " + common("summarize") + " --test " + data("summarize.test.jsonl") +
                                          " --index " + idx.string() + " --out " + (tmp / "p.jsonl").string());
  EXPECT_EQ(r.code, 3) << r.output;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct Runs {
  TempDir tmp;
  Runs() {
    for (const std::string t : {"summarize", "vuln", "repair"}) {
      const auto r = spawn(backend_env(), "run " + common(t) + " --test " + data(t + ".test.jsonl") + " --out " +
                                              (tmp / (t + ".jsonl")).string());
      if (r.code != 0) throw std::runtime_error(r.output);
    }
  }
  std::string preds(const std::string& t) const { return (tmp / (t + ".jsonl")).string(); }
};

TEST(CliEval, ReportHasExpectedKeys) {
  Runs runs;
  const auto out = (runs.tmp / "report.json").string();
  const auto r = spawn("", "eval --predictions " + runs.preds("summarize") + " --predictions " + runs.preds("vuln") +
                               " --predictions " + runs.preds("repair") + " --task-config " +
                               data("summarize.task.json") + " --task-config " + data("vuln.task.json") +
                               " --task-config " + data("repair.task.json") + " --out " + out);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = json::parse(slurp(out));
  EXPECT_EQ(report.at("n_records"), 9);
  EXPECT_TRUE(report.at("per_dataset").at("codesearchnet-java-mini").at("metrics").contains("bleu1_smoothed"));
  EXPECT_TRUE(report.at("per_dataset").at("bugs2fix-mini").at("metrics").contains("bleu1_smoothed"));
  for (auto m : {"precision", "recall", "f1"}) {
    EXPECT_EQ(report.at("per_dataset").at("devign-mini").at("metrics").at(m), 1.0) << m;
    EXPECT_EQ(report.at("per_category").at("class_output").at(m), 1.0) << m;
  }
  EXPECT_TRUE(report.at("per_category").contains("text_output"));
  EXPECT_TRUE(report.at("per_category").contains("code_output"));
  EXPECT_FALSE(report.at("config_digest").get<std::string>().empty());
  EXPECT_NE(r.output.find("devign-mini"), std::string::npos);
  EXPECT_NE(r.output.find("100.00"), std::string::npos);
}

TEST(CliEval, MismatchedConfigExitsOne) {
  Runs runs;
  // a classification config that reuses the summarization task id
  auto cfg = json::parse(slurp(data("vuln.task.json")));
  cfg["task_id"] = "code-summarization-java";
  cfg["dataset_id"] = "codesearchnet-java-mini";
  const auto path = runs.tmp.write("wrong.task.json", cfg.dump());
  const auto r = spawn("", "eval --predictions " + runs.preds("summarize") + " --task-config " + path.string() +
                               " --out " + (runs.tmp / "r.json").string());
  EXPECT_EQ(r.code, 1) << r.output;
}

TEST(CliEval, FilesOfOneDatasetArePooled) {
  Runs runs;
  const auto all = slurp(runs.preds("summarize"));
  const auto cut = all.find('\n') + 1;
  const auto a = runs.tmp.write("a.jsonl", all.substr(0, cut));
  const auto b = runs.tmp.write("b.jsonl", all.substr(cut));
  const auto task = " --task-config " + data("summarize.task.json");
  ASSERT_EQ(spawn("", "eval --predictions " + runs.preds("summarize") + task + " --out " +
                          (runs.tmp / "one.json").string()).code, 0);
  ASSERT_EQ(spawn("", "eval --predictions " + a.string() + " --predictions " + b.string() + task + " --out " +
                          (runs.tmp / "two.json").string()).code, 0);
  const auto one = json::parse(slurp(runs.tmp / "one.json"));
  const auto two = json::parse(slurp(runs.tmp / "two.json"));
  EXPECT_EQ(one, two);
  EXPECT_EQ(two.at("per_dataset").at("codesearchnet-java-mini").at("n_records"), 3);
}

// ---------------------------------------------------------------------------
// render / golden prompts (in-process)
// ---------------------------------------------------------------------------

struct Captured {
  int code;
  std::string out, err;
};

Captured render(std::vector<std::string> args) {
  args.insert(args.begin(), {"inctrl", "render"});
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> render_args(const std::string& task, const std::string& qid) {
  return {"--task-config", data(task + ".task.json"), "--prompt-config", data(task + ".prompt.json"),
          "--train",       data(task + ".train.jsonl"), "--test", data(task + ".test.jsonl"),
          "--question-id", qid};
}

class GoldenPrompt : public ::testing::TestWithParam<std::pair<std::string, std::string>> {};

TEST_P(GoldenPrompt, MatchesByteForByte) {
  const auto& [task, qid] = GetParam();
  const auto r = render(render_args(task, qid));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(kGolden + "/" + task + "." + qid + ".prompt.txt"));
  EXPECT_EQ(json::parse(r.err), json::parse(slurp(kGolden + "/" + task + "." + qid + ".spans.json")));
}

INSTANTIATE_TEST_SUITE_P(Fixtures, GoldenPrompt,
                         ::testing::Values(std::pair<std::string, std::string>{"summarize", "q1"},
                                           std::pair<std::string, std::string>{"vuln", "t2"},
                                           std::pair<std::string, std::string>{"repair", "r1"}));

TEST(GoldenPrompt, Baseline) {
  auto args = render_args("repair", "r2");
  args.push_back("--baseline");
  const auto r = render(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(kGolden + "/repair.r2.baseline.txt"));
}

TEST(Render, UnknownQuestionIdIsConfigError) {
  const auto r = render(render_args("repair", "missing"));
  EXPECT_EQ(r.code, 1);
}

}  // namespace
}  // namespace inctrl
