#include <gtest/gtest.h>

#include <random>

#include "acorn/metrics.hpp"

namespace acorn {
namespace {

using Golds = std::vector<std::string>;

TEST(ExactMatch, Examples) {
  EXPECT_EQ(exact_match("Paris", Golds{"Paris"}), 1);
  EXPECT_EQ(exact_match("in Paris", Golds{"Paris"}), 0);
  EXPECT_EQ(exact_match("the Beatles", Golds{"Beatles", "The Beatles"}), 1);
  EXPECT_EQ(exact_match("  PARIS. ", Golds{"Paris"}), 1);
  EXPECT_EQ(exact_match("", Golds{"Paris"}), 0);
}

TEST(TokenF1, Examples) {
  EXPECT_DOUBLE_EQ(token_f1("Paris", Golds{"Paris"}), 1.0);
  // P = 1/2, R = 1 -> 2 * 0.5 / 1.5
  EXPECT_DOUBLE_EQ(token_f1("in Paris", Golds{"Paris"}), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(token_f1("", Golds{"Paris"}), 0.0);
  EXPECT_DOUBLE_EQ(token_f1("the", Golds{"a"}), 1.0);  // both normalize to empty
  EXPECT_DOUBLE_EQ(token_f1("x", Golds{"the"}), 0.0);
}

TEST(TokenF1, MultisetOverlapAndMaxOverAliases) {
  // pred "new new york" vs gold "new york": overlap 2, P = 2/3, R = 1 -> 0.8
  EXPECT_DOUBLE_EQ(token_f1("new new york", Golds{"New York"}), 0.8);
  EXPECT_DOUBLE_EQ(token_f1("new york city", Golds{"York", "New York City"}), 1.0);
}

TEST(Metrics, EmImpliesFullF1AndBounds) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> words{"the", "paris", "Paris", "in", "france", ".", "a", "city"};
  for (int i = 0; i < 2000; ++i) {
    std::string pred, gold;
    for (int k = 0, n = 1 + static_cast<int>(rng() % 4); k < n; ++k) pred += words[rng() % words.size()] + " ";
    for (int k = 0, n = 1 + static_cast<int>(rng() % 3); k < n; ++k) gold += words[rng() % words.size()] + " ";
    const Golds golds{gold};
    const double f1 = token_f1(pred, golds);
    ASSERT_GE(f1, 0.0);
    ASSERT_LE(f1, 1.0);
    if (exact_match(pred, golds)) ASSERT_DOUBLE_EQ(f1, 1.0) << pred << " | " << gold;
  }
}

TEST(CompressionRatio, Examples) {
  EXPECT_DOUBLE_EQ(compression_ratio(10, 200), 0.05);
  EXPECT_DOUBLE_EQ(compression_ratio(200, 200), 1.0);
  EXPECT_THROW(compression_ratio(5, 0), DegenerateInput);
}

TEST(AnswerPreserved, ExamplesAndMonotonicity) {
  EXPECT_TRUE(answer_preserved("Lee Je-hoon starred.", Golds{"Lee Je-hoon"}));
  EXPECT_FALSE(answer_preserved("", Golds{"Lee Je-hoon"}));
  std::string s = "He starred in it.";
  bool was = answer_preserved(s, Golds{"Lee Je-hoon"});
  for (const char* more : {" Lee", " Je-hoon", " plays", " the lead."}) {
    s += more;
    const bool now = answer_preserved(s, Golds{"Lee Je-hoon"});
    EXPECT_TRUE(!was || now) << s;
    was = now;
  }
  EXPECT_TRUE(was);
}

TEST(Aggregate, HandComputedMeans) {
  std::vector<EvalRecord> recs(4);
  recs[0] = {"q1", "Paris", 1, 1.0, 0.1, 100, 10, true, 0.5, false, {}, {}};
  recs[1] = {"q2", "in Lyon", 0, 0.5, 0.3, 100, 30, false, 1.5, false, {}, {}};
  recs[2] = {"q3", "x", 0, 0.0, 1.2, 10, 12, std::nullopt, 0.0, true, {}, {}};
  recs[3].query_id = "q4";
  recs[3].error = "timeout";
  const auto r = aggregate(recs);
  EXPECT_EQ(r.n, 3u);
  EXPECT_EQ(r.failures, 1u);
  EXPECT_NEAR(r.em, 100.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.f1, 50.0, 1e-9);
  ASSERT_TRUE(r.cr);
  EXPECT_NEAR(*r.cr, (0.1 + 0.3 + 1.2) / 3.0, 1e-9);
  ASSERT_TRUE(r.par);
  EXPECT_NEAR(*r.par, 0.5, 1e-9);
  EXPECT_EQ(r.par_n, 2u);
  ASSERT_TRUE(r.mean_inference_time_s);
  EXPECT_NEAR(*r.mean_inference_time_s, 1.0, 1e-9);  // cached q3 is not timed
  EXPECT_EQ(r.timed_n, 2u);
  EXPECT_EQ(r.expanded, 1u);
}

TEST(Aggregate, EmptyAndNoCompression) {
  const auto empty = aggregate(std::vector<EvalRecord>{});
  EXPECT_EQ(empty.n, 0u);
  EXPECT_FALSE(empty.cr);
  EXPECT_FALSE(empty.par);

  std::vector<EvalRecord> closed_book(1);
  closed_book[0].query_id = "q";
  const auto j = to_json(aggregate(closed_book));
  EXPECT_FALSE(j.contains("cr"));
  EXPECT_TRUE(j.at("par").is_null());
}

TEST(EvalRecordJson, RoundTrip) {
  EvalRecord r{"q1", "Paris", 1, 1.0, 0.25, 40, 10, true, 0.75, false, std::string("summary"), {}};
  const auto back = eval_record_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(r).dump());

  EvalRecord failed;
  failed.query_id = "q2";
  failed.error = "boom";
  const auto j = to_json(failed);
  EXPECT_EQ(j.size(), 2u);
  EXPECT_EQ(eval_record_from_json(nlohmann::json::parse(j.dump())).error, "boom");
  EXPECT_THROW(eval_record_from_json(nlohmann::json{{"query_id", "q"}}), SchemaError);
}

}  // namespace
}  // namespace acorn
