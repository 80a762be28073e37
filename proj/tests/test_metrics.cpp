#include <gtest/gtest.h>

#include "test_support.hpp"

namespace inctrl {
namespace {

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("a  b\t c"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("f(x)+1"), (std::vector<std::string>{"f(x)+1"}));
  EXPECT_EQ(tokenize("Ab\nCD"), (std::vector<std::string>{"Ab", "CD"}));
}

TEST(Tokenize, UnicodeWhitespace) {
  // NBSP, ideographic space, em space
  EXPECT_EQ(tokenize("a\xC2\xA0" "b\xE3\x80\x80" "c\xE2\x80\x83" "d"),
            (std::vector<std::string>{"a", "b", "c", "d"}));
  EXPECT_EQ(tokenize("\xC3\xA9t\xC3\xA9"), (std::vector<std::string>{"\xC3\xA9t\xC3\xA9"}));
}

TEST(Bleu, IdentityCase) {
  const auto s = bleu1_smoothed("a b c", "a b c");
  EXPECT_EQ(s.p1, 1.0);
  EXPECT_EQ(s.brevity_penalty, 1.0);
  EXPECT_EQ(s.value, 1.0);
}

TEST(Bleu, ShortCandidateNoMatches) {
  const auto s = bleu1_smoothed("a b", "x y z");
  EXPECT_NEAR(s.p1, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.brevity_penalty, 0.6065306597126334, 1e-12);
  EXPECT_NEAR(s.value, 0.20217688657087782, 1e-9);
}

TEST(Bleu, ClippedMatches) {
  const auto s = bleu1_smoothed("a a a", "a b");
  EXPECT_EQ(s.matches, 1u);
  EXPECT_EQ(s.p1, 0.5);
  EXPECT_EQ(s.brevity_penalty, 1.0);
  EXPECT_EQ(s.value, 0.5);
}

TEST(Bleu, EmptyCandidateAndReference) {
  EXPECT_EQ(bleu1_smoothed("", "a b").value, 0.0);
  EXPECT_EQ(bleu1_smoothed("   ", "a b").candidate_len, 0u);
  EXPECT_THROW(bleu1_smoothed("a", " \n"), EmptyReference);
}

TEST(Bleu, AsymmetricWitness) {
  EXPECT_NE(bleu1_smoothed("a", "a b").value, bleu1_smoothed("a b", "a").value);
}

TEST(Bleu, CaseSensitive) {
  EXPECT_LT(bleu1_smoothed("A", "a").value, 1.0);
}

TEST(Bleu, MatchesOracleOnRandomInputs) {
  std::mt19937_64 rng(4);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "if", "x", "(", ")", "return"};
  auto sentence = [&](std::size_t min_len) {
    std::string s;
    for (std::size_t i = 0, n = min_len + rng() % 8; i < n; ++i) s += vocab[rng() % vocab.size()] + " ";
    return s;
  };
  for (int i = 0; i < 500; ++i) {
    const auto c = sentence(0), r = sentence(1);
    const auto s = bleu1_smoothed(c, r);
    const auto o = testing::oracle_bleu(c, r);
    ASSERT_GE(s.value, 0.0);
    ASSERT_LE(s.value, 1.0);
    ASSERT_NEAR(s.value, o.value, 1e-12) << c << " | " << r;
    if (s.candidate_len > 0) {
      ASSERT_NEAR(s.value, s.brevity_penalty * s.p1, 1e-12);
      ASSERT_GT(s.brevity_penalty, 0.0);
      ASSERT_LE(s.brevity_penalty, 1.0);
    }
  }
}

PredictionRecord gen(std::string out, std::string ref, std::string dataset = "d1", std::string task = "t1") {
  PredictionRecord p;
  p.record_id = "r";
  p.task_id = std::move(task);
  p.dataset_id = std::move(dataset);
  p.task_type = TaskType::text_output;
  p.final_output = std::move(out);
  p.reference = std::move(ref);
  return p;
}

PredictionRecord cls(std::optional<std::string> pred, std::string ref, std::string dataset = "d3",
                     std::string task = "t3") {
  PredictionRecord p;
  p.record_id = "r";
  p.task_id = std::move(task);
  p.dataset_id = std::move(dataset);
  p.task_type = TaskType::class_output;
  p.predicted_class = pred;
  if (pred) p.final_output = *pred;
  p.reference = std::move(ref);
  return p;
}

TEST(CorpusBleu, MeanOfSentences) {
  EXPECT_EQ(corpus_bleu({gen("a b", "a b"), gen("", "a b")}), 0.5);
  EXPECT_NEAR(*corpus_bleu({gen("a b", "x y z")}), 0.20217688657087782, 1e-12);
  EXPECT_FALSE(corpus_bleu({}).has_value());
}

TEST(BinaryPrf, Examples) {
  const auto s = binary_prf({cls("pos", "pos"), cls("pos", "neg"), cls("neg", "pos")}, "pos");
  EXPECT_EQ(s.counts, (ConfusionCounts{1, 1, 0, 1}));
  EXPECT_EQ(s.precision, 0.5);
  EXPECT_EQ(s.recall, 0.5);
  EXPECT_EQ(s.f1, 0.5);

  const auto none = binary_prf({cls("neg", "pos"), cls("neg", "neg")}, "pos");
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);

  const auto perfect = binary_prf({cls("pos", "pos"), cls("neg", "neg")}, "pos");
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
}

TEST(BinaryPrf, FailedPredictionCountsAsNegative) {
  const auto s = binary_prf({cls(std::nullopt, "pos"), cls(std::nullopt, "neg")}, "pos");
  EXPECT_EQ(s.counts, (ConfusionCounts{0, 0, 1, 1}));
}

TEST(BinaryPrf, RequiresPositiveClass) {
  TaskConfig t;
  t.task_id = "t";
  t.task_type = TaskType::class_output;
  EXPECT_THROW(binary_prf({}, t), MissingPositiveClass);
}

TEST(BinaryPrf, HarmonicMeanAgainstIndependentCounts) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PredictionRecord> rs;
    int tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 30); i < n; ++i) {
      const bool p = rng() & 1, a = rng() & 1;
      rs.push_back(cls(p ? "pos" : "neg", a ? "pos" : "neg"));
      (p && a ? tp : p ? fp : a ? fn : tn)++;
    }
    const auto s = binary_prf(rs, "pos");
    EXPECT_EQ(s.counts.total(), rs.size());
    const double P = tp + fp ? double(tp) / (tp + fp) : 0.0;
    const double R = tp + fn ? double(tp) / (tp + fn) : 0.0;
    EXPECT_DOUBLE_EQ(s.precision, P);
    EXPECT_DOUBLE_EQ(s.recall, R);
    if (P + R > 0) {
      EXPECT_NEAR(s.f1, 2 * P * R / (P + R), 1e-15);
    }
  }
}

TaskConfig gen_task(std::string id, std::string dataset) {
  TaskConfig t;
  t.task_id = std::move(id);
  t.task_type = TaskType::text_output;
  t.dataset_id = std::move(dataset);
  t.input_fields = {"code"};
  t.input_template = "{code}";
  t.output_field = "summary";
  t.metrics = {Metric::bleu1_smoothed};
  return t;
}

TaskConfig cls_task() {
  TaskConfig t = gen_task("t3", "d3");
  t.task_type = TaskType::class_output;
  t.label_space = std::vector<ClassLabel>{{"pos", {"yes"}}, {"neg", {"no"}}};
  t.positive_class = "pos";
  t.metrics = {Metric::precision, Metric::recall, Metric::f1};
  return t;
}

TEST(Aggregate, SingleDatasetEqualsCategory) {
  const auto r = aggregate_report({gen("a b", "a b c"), gen("x", "x")}, {gen_task("t1", "d1")});
  EXPECT_EQ(r.per_dataset.at("d1"), r.per_category.at("text_output"));
  EXPECT_EQ(r.n_records, 2u);
}

TEST(Aggregate, MicroPoolingAcrossDatasets) {
  const auto r = aggregate_report({gen("a", "a"), gen("", "b", "d2", "t2")},
                                  {gen_task("t1", "d1"), gen_task("t2", "d2")});
  EXPECT_EQ(r.per_dataset.at("d1").at("bleu1_smoothed"), 1.0);
  EXPECT_EQ(r.per_dataset.at("d2").at("bleu1_smoothed"), 0.0);
  EXPECT_EQ(r.per_category.at("text_output").at("bleu1_smoothed"), 0.5);
}

TEST(Aggregate, MicroPoolingWeightsByRecords) {
  // d1 has three perfect records, d2 one zero: micro mean 0.75, not 0.5
  const auto r = aggregate_report({gen("a", "a"), gen("a", "a"), gen("a", "a"), gen("", "b", "d2", "t2")},
                                  {gen_task("t1", "d1"), gen_task("t2", "d2")});
  EXPECT_EQ(r.per_category.at("text_output").at("bleu1_smoothed"), 0.75);
}

TEST(Aggregate, MixedCategoriesStaySeparate) {
  const auto r = aggregate_report({gen("a", "a"), cls("pos", "pos"), cls("neg", "pos")},
                                  {gen_task("t1", "d1"), cls_task()});
  ASSERT_EQ(r.per_category.size(), 2u);
  EXPECT_EQ(r.per_category.at("text_output").count("f1"), 0u);
  EXPECT_EQ(r.per_category.at("class_output").count("bleu1_smoothed"), 0u);
  EXPECT_EQ(r.per_category.at("class_output").at("precision"), 1.0);
  EXPECT_EQ(r.per_category.at("class_output").at("recall"), 0.5);
  EXPECT_NEAR(r.per_category.at("class_output").at("f1"), 2.0 / 3.0, 1e-15);
}

TEST(Aggregate, EveryConfiguredMetricAppears) {
  const auto r = aggregate_report({cls("neg", "neg")}, {cls_task()});
  for (auto m : {"precision", "recall", "f1"}) EXPECT_EQ(r.per_dataset.at("d3").count(m), 1u) << m;
}

TEST(Aggregate, InconsistenciesAreSchemaErrors) {
  EXPECT_THROW(aggregate_report({gen("a", "a", "d1", "nope")}, {gen_task("t1", "d1")}), SchemaError);
  EXPECT_THROW(aggregate_report({gen("a", "a", "d9")}, {gen_task("t1", "d1")}), SchemaError);
  auto wrong_type = gen("a", "a", "d3", "t3");
  EXPECT_THROW(aggregate_report({wrong_type}, {cls_task()}), SchemaError);
  EXPECT_THROW(aggregate_report({cls("pos", "unknown")}, {cls_task()}), SchemaError);
  auto t = cls_task();
  t.positive_class.reset();
  EXPECT_THROW(aggregate_report({cls("pos", "pos")}, {t}), MissingPositiveClass);
}

TEST(Aggregate, DeterministicSerialization) {
  const std::vector<PredictionRecord> rs{gen("a b", "a c"), cls("pos", "neg"), gen("q", "q", "d2", "t2")};
  const std::vector<TaskConfig> ts{gen_task("t1", "d1"), cls_task(), gen_task("t2", "d2")};
  const std::vector<TaskConfig> ts_rev{ts.rbegin(), ts.rend()};
  const auto a = to_json(aggregate_report(rs, ts)).dump();
  EXPECT_EQ(a, to_json(aggregate_report(rs, ts)).dump());
  EXPECT_EQ(a, to_json(aggregate_report(rs, ts_rev)).dump());
  EXPECT_NE(a.find("config_digest"), std::string::npos);
}

TEST(Aggregate, DigestTracksConfigs) {
  auto t = gen_task("t1", "d1");
  const auto a = aggregate_report({}, {t}).config_digest;
  t.shots_k = 9;
  EXPECT_NE(a, aggregate_report({}, {t}).config_digest);
}

TEST(ReportTable, TwoDecimalsTimesHundred) {
  const auto r = aggregate_report({gen("a b", "x y z")}, {gen_task("t1", "d1")});
  const auto table = report_table(r);
  EXPECT_NE(table.find("20.22"), std::string::npos) << table;
  EXPECT_NE(table.find("[text_output]"), std::string::npos);
}

}  // namespace
}  // namespace inctrl
