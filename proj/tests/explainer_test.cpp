#include "cbe/explainer.hpp"

#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cbe/error.hpp"
#include "test_support.hpp"

namespace cbe {
namespace {

using testing::make_set;

ConceptScores scores(std::vector<double> raw, const ConceptSet& set, double tau = 1.0) {
  ConceptScores s;
  s.softmaxed = group_softmax(raw, set, tau);
  s.raw = std::move(raw);
  return s;
}

ConceptScores softmaxed_only(std::vector<double> sm) {
  ConceptScores s;
  s.raw.assign(sm.size(), 0.0);
  s.softmaxed = std::move(sm);
  return s;
}

TEST(ExplainMatch, OnlyAgreeingGroupsAppear) {
  const ConceptSet set = make_set({2, 2});
  const ConceptScores ref = softmaxed_only({0.8, 0.2, 0.3, 0.7});
  const ConceptScores probe = softmaxed_only({0.6, 0.4, 0.9, 0.1});
  const Explanation x = explain_match(ref, probe, set);
  EXPECT_EQ(x.decision, "match");
  ASSERT_EQ(x.entries.size(), 1u);
  EXPECT_EQ(x.entries[0].group, 0u);
  EXPECT_EQ(x.entries[0].ref.id, "g0.c0");
  EXPECT_EQ(x.entries[0].ref.score, 0.8);
  EXPECT_EQ(x.entries[0].probe->score, 0.6);
}

TEST(ExplainMatch, RankedByWeakerSideThenGroupIndex) {
  const ConceptSet set = make_set({2, 2, 2, 2});
  const ConceptScores ref = softmaxed_only({0.6, 0.4, 0.9, 0.1, 0.7, 0.3, 0.99, 0.01});
  const ConceptScores probe = softmaxed_only({0.99, 0.01, 0.7, 0.3, 0.7, 0.3, 0.6, 0.4});
  const Explanation x = explain_match(ref, probe, set, 10);
  ASSERT_EQ(x.entries.size(), 4u);
  std::vector<std::size_t> order;
  for (const auto& e : x.entries) order.push_back(e.group);
  EXPECT_EQ(order, (std::vector<std::size_t>{1, 2, 0, 3}));
}

TEST(ExplainMatch, SelfMatchCoversEveryGroupUpToK) {
  const ConceptSet set = make_set({3, 2, 4, 1, 2, 3});
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::vector<double> raw(set.size());
  for (auto& v : raw) v = n(rng);
  const ConceptScores s = scores(raw, set, 5.0);
  for (std::size_t k : {0u, 1u, 4u, 6u, 9u}) {
    const Explanation x = explain_match(s, s, set, k);
    EXPECT_EQ(x.entries.size(), std::min<std::size_t>(k, set.group_count()));
    EXPECT_EQ(x.k, k);
  }
}

TEST(ExplainMatch, EntriesAreDistinctGroups) {
  const ConceptSet set = make_set({2, 3, 2, 2});
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(set.size()), b(set.size());
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    for (const Explanation& x :
         {explain_match(scores(a, set), scores(b, set), set, 9), explain_nonmatch(scores(a, set), scores(b, set), set, 9)}) {
      std::set<std::size_t> groups;
      for (const auto& e : x.entries) groups.insert(e.group);
      EXPECT_EQ(groups.size(), x.entries.size());
    }
  }
}

TEST(ExplainNonmatch, TotalVariationRanking) {
  const ConceptSet set = make_set({2, 2, 2});
  const ConceptScores ref = softmaxed_only({0.5, 0.5, 1.0, 0.0, 0.6, 0.4});
  const ConceptScores probe = softmaxed_only({0.5, 0.5, 0.0, 1.0, 0.5, 0.5});
  const Explanation x = explain_nonmatch(ref, probe, set);
  EXPECT_EQ(x.decision, "non-match");
  ASSERT_EQ(x.entries.size(), 3u);
  EXPECT_EQ(x.entries[0].group, 1u);
  EXPECT_DOUBLE_EQ(x.entries[0].divergence, 1.0);
  EXPECT_EQ(x.entries[0].ref.id, "g1.c0");
  EXPECT_EQ(x.entries[0].probe->id, "g1.c1");
  EXPECT_EQ(x.entries[1].group, 2u);
  EXPECT_NEAR(x.entries[1].divergence, 0.1, 1e-12);
  EXPECT_EQ(x.entries[2].divergence, 0.0);
  EXPECT_EQ(explanation_text(x), "concept 1 0 vs concept 1 1; concept 2 0 vs concept 2 0; concept 0 0 vs concept 0 0");
}

TEST(ExplainNonmatch, IdenticalInputsKeepGroupOrder) {
  const ConceptSet set = make_set({2, 3, 1});
  const ConceptScores s = scores({0.1, 0.2, 0.5, -0.1, 0.0, 0.3}, set);
  const Explanation x = explain_nonmatch(s, s, set, 2);
  ASSERT_EQ(x.entries.size(), 2u);
  EXPECT_EQ(x.entries[0].group, 0u);
  EXPECT_EQ(x.entries[1].group, 1u);
  for (const auto& e : x.entries) EXPECT_EQ(e.divergence, 0.0);
}

TEST(ExplainNonmatch, DivergenceBounded) {
  const ConceptSet set = make_set({3, 2, 4});
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(set.size()), b(set.size());
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    for (const auto& e : explain_nonmatch(scores(a, set), scores(b, set), set, 9).entries) {
      EXPECT_GE(e.divergence, 0.0);
      EXPECT_LE(e.divergence, 1.0 + 1e-12);
    }
  }
}

TEST(ExplainDiagnosis, ThresholdAndOrdering) {
  const ConceptSet set = make_set({2, 1});
  const ConceptScores s = scores({0.3, 0.1, 0.05}, set);
  Explanation x = explain_diagnosis(s, set, 0.2, "1");
  EXPECT_EQ(x.decision, "1");
  ASSERT_EQ(x.entries.size(), 1u);
  EXPECT_EQ(x.entries[0].ref.id, "g0.c0");
  EXPECT_EQ(x.entries[0].ref.score, 0.3);
  EXPECT_FALSE(x.entries[0].probe.has_value());

  x = explain_diagnosis(s, set, -1.0, "1");
  ASSERT_EQ(x.entries.size(), 2u);
  EXPECT_EQ(x.entries[0].group, 0u);
  EXPECT_EQ(x.entries[1].ref.id, "g1.c0");

  EXPECT_TRUE(explain_diagnosis(s, set, 1.5, "0").entries.empty());
  EXPECT_EQ(explain_diagnosis(s, set, 0.3, "0").entries.size(), 1u);
}

TEST(ExplainDiagnosis, UsesRawScoresNotSoftmaxed) {
  const ConceptSet set = make_set({2, 2});
  ConceptScores s;
  s.raw = {0.1, 0.2, 0.4, 0.3};
  s.softmaxed = {0.9, 0.1, 0.1, 0.9};
  const Explanation x = explain_diagnosis(s, set, 0.0, "p");
  ASSERT_EQ(x.entries.size(), 2u);
  EXPECT_EQ(x.entries[0].ref.id, "g1.c0");
  EXPECT_EQ(x.entries[1].ref.id, "g0.c1");
}

TEST(ExplainDiagnosis, ScaleInvariantInput) {
  const ConceptSet set = make_set({2, 3});
  Matrix text(5, 3);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (auto& v : text.data) v = n(rng);
  const ConceptTextEmbeddings bound = bind_text_embeddings(set, text);
  const std::vector<double> e = {0.3, -1.2, 0.7};
  std::vector<double> scaled = e;
  for (auto& v : scaled) v *= 7.5;
  const Explanation a = explain_diagnosis(scores(concept_scores(e, bound), set), set, -1.0, "x");
  const Explanation b = explain_diagnosis(scores(concept_scores(scaled, bound), set), set, -1.0, "x");
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].ref.index, b.entries[i].ref.index);
    EXPECT_NEAR(a.entries[i].ref.score, b.entries[i].ref.score, 1e-12);
  }
}

TEST(Explainer, RejectsMismatchedScores) {
  const ConceptSet set = make_set({2, 2});
  const ConceptScores short_scores = softmaxed_only({0.5, 0.5, 1.0});
  EXPECT_THROW(explain_match(short_scores, short_scores, set), ShapeError);
  EXPECT_THROW(explain_diagnosis(short_scores, set, 0.0, "x"), ShapeError);
}

TEST(Render, MatchLayout) {
  const ConceptSet set = make_set({2});
  const ConceptScores ref = softmaxed_only({0.7310585786300049, 0.2689414213699951});
  const ConceptScores probe = softmaxed_only({0.7071067811865476, 0.2928932188134524});
  Explanation x = explain_match(ref, probe, set);
  x.similarity = 0.91234;
  EXPECT_EQ(render_explanation(x), "DECISION: match (similarity=0.9123)\n1. [g0] concept 0 0 (ref=0.7311, probe=0.7071)\n");
}

TEST(Render, NonmatchAndDiagnosisLayout) {
  const ConceptSet set = make_set({2});
  Explanation x = explain_nonmatch(softmaxed_only({1.0, 0.0}), softmaxed_only({0.25, 0.75}), set);
  x.similarity = -0.5;
  EXPECT_EQ(render_explanation(x),
            "DECISION: non-match (similarity=-0.5000)\n1. [g0] concept 0 0 vs concept 0 1 (ref=1.0000, probe=0.7500)\n");
  ConceptScores s;
  s.raw = {0.03125, 0.01};
  s.softmaxed = {0.5, 0.5};
  EXPECT_EQ(render_explanation(explain_diagnosis(s, set, 0.0, "1")),
            "DECISION: 1 (similarity=n/a)\n1. [g0] concept 0 0 (score=0.0312)\n");
}

TEST(Render, EmptyExplanationIsHeaderOnly) {
  const ConceptSet set = make_set({2});
  const Explanation x = explain_match(softmaxed_only({0.9, 0.1}), softmaxed_only({0.1, 0.9}), set);
  EXPECT_EQ(render_explanation(x), "DECISION: match (similarity=n/a)\n");
  EXPECT_EQ(explanation_text(x), "");
}

TEST(Render, ScoreFormattingRoundsHalfToEven) {
  EXPECT_EQ(format_score(0.03125), "0.0312");
  EXPECT_EQ(format_score(0.09375), "0.0938");
  EXPECT_EQ(format_score(1.0), "1.0000");
  EXPECT_EQ(format_score(-0.00004), "-0.0000");
}

TEST(Record, JsonFields) {
  const ConceptSet set = make_set({2, 2});
  Explanation x = explain_nonmatch(softmaxed_only({1.0, 0.0, 0.5, 0.5}), softmaxed_only({0.0, 1.0, 0.5, 0.5}), set, 1);
  x.similarity = 0.25;
  const auto j = nlohmann::json::parse(explanation_record(x));
  EXPECT_EQ(j["kind"], "nonmatch");
  EXPECT_EQ(j["decision"], "non-match");
  EXPECT_EQ(j["k"], 1);
  EXPECT_EQ(j["similarity"], 0.25);
  ASSERT_EQ(j["entries"].size(), 1u);
  EXPECT_EQ(j["entries"][0]["group_name"], "g0");
  EXPECT_EQ(j["entries"][0]["divergence"], 1.0);
  EXPECT_EQ(j["entries"][0]["probe"]["id"], "g0.c1");
  EXPECT_EQ(explanation_record(x).find('\n'), std::string::npos);
}

TEST(Calibrate, PicksBestMicroF1) {
  const ConceptSet set = make_set({2, 2});
  std::vector<ConceptScores> s;
  ConceptScores a;
  a.raw = {0.9, 0.1, 0.2, 0.1};
  ConceptScores b;
  b.raw = {0.1, 0.6, 0.3, 0.8};
  s = {a, b};
  const std::vector<std::vector<std::size_t>> present = {{0}, {1, 3}};
  // Selectable scores 0.2 (miss), 0.6, 0.8, 0.9 (hits); keeping the three hits is perfect.
  EXPECT_EQ(calibrate_diagnosis_threshold(s, present, set), 0.6);
  EXPECT_EQ(calibrate_diagnosis_threshold({}, {}, set), kDefaultDiagnosisThreshold);
  EXPECT_THROW(calibrate_diagnosis_threshold(s, {{0}}, set), DataError);
}

TEST(Calibrate, TiesResolveToLowestThreshold) {
  const ConceptSet set = make_set({1});
  std::vector<ConceptScores> s(4);
  s[0].raw = {0.2};
  s[1].raw = {0.4};
  s[2].raw = {0.6};
  s[3].raw = {0.8};
  // Keeping all four and keeping only the top one both give F1 = 2/3.
  EXPECT_EQ(calibrate_diagnosis_threshold(s, {{0}, {}, {}, {0}}, set), 0.2);
}

}  // namespace
}  // namespace cbe
