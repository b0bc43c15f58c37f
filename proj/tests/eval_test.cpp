#include "cbe/eval.hpp"

#include <random>

#include <gtest/gtest.h>

#include "cbe/error.hpp"

namespace cbe {
namespace {

TEST(Verify, ReferenceSweeps) {
  VerifyResult r = verify_accuracy(std::vector<double>{0.9, 0.8, 0.4, 0.2}, {true, true, false, false});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_NEAR(r.threshold, 0.6, 1e-15);
  EXPECT_EQ(r.pairs, 4u);

  r = verify_accuracy(std::vector<double>{0.9, 0.3, 0.5, 0.1}, {true, true, false, false});
  EXPECT_EQ(r.accuracy, 0.75);
  EXPECT_NEAR(r.threshold, 0.2, 1e-15);

  r = verify_accuracy(std::vector<double>{0.7, 0.7, 0.2, 0.6, 0.6, 0.1}, {true, false, false, true, true, false});
  EXPECT_NEAR(r.accuracy, 0.8333333333333334, 1e-15);
  EXPECT_NEAR(r.threshold, 0.4, 1e-15);
}

TEST(Verify, DegenerateLabels) {
  VerifyResult r = verify_accuracy(std::vector<double>{0.1, 0.5, 0.3}, {true, true, true});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_LE(r.threshold, 0.1);
  r = verify_accuracy(std::vector<double>{0.1, 0.5, 0.3}, {false, false, false});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_GT(r.threshold, 0.5);
  EXPECT_THROW(verify_accuracy(std::vector<double>{}, {}), DataError);
  EXPECT_THROW(verify_accuracy(std::vector<double>{0.1}, {true, false}), DataError);
}

TEST(Verify, AtLeastMajorityAndThresholdReproducesAccuracy) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 17;
    std::vector<double> sims(n);
    std::vector<bool> same(n);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sims[i] = std::round(u(rng) * 8.0) / 8.0;
      same[i] = coin(rng);
      positives += same[i] ? 1 : 0;
    }
    const VerifyResult r = verify_accuracy(sims, same);
    const double majority = static_cast<double>(std::max(positives, n - positives)) / static_cast<double>(n);
    EXPECT_GE(r.accuracy, majority);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += (sims[i] >= r.threshold) == same[i] ? 1 : 0;
    EXPECT_EQ(r.accuracy, static_cast<double>(correct) / static_cast<double>(n));
  }
}

TEST(Verify, LookupPairsAndUnknownIds) {
  const EmbeddingLookup lookup = {{"a", {1.0, 0.0}}, {"b", {2.0, 0.0}}, {"c", {0.0, 1.0}}};
  const PairList pairs = {{"a", "b", true}, {"a", "c", false}};
  const auto sims = pair_similarities(lookup, pairs);
  EXPECT_EQ(sims, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(verify_accuracy(lookup, pairs).accuracy, 1.0);
  EXPECT_THROW(pair_similarities(lookup, {{"a", "z", true}}), DataError);
}

TEST(Classification, ConfusionExample) {
  std::vector<bool> pred = {true, true, true, false, false, false, false, false, false, false};
  std::vector<bool> label = {true, true, false, true, false, false, false, false, false, false};
  const ClassificationReport r = classification_metrics(pred, label);
  EXPECT_EQ(r.tp, 2u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_EQ(r.tn, 6u);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.8);
  EXPECT_DOUBLE_EQ(r.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3.0);
  EXPECT_FALSE(r.precision_undefined);
}

TEST(Classification, UndefinedRatiosReportZero) {
  const ClassificationReport none = classification_metrics({false, false}, {true, false});
  EXPECT_TRUE(none.precision_undefined);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  const ClassificationReport neg = classification_metrics({false, false}, {false, false});
  EXPECT_TRUE(neg.recall_undefined);
  EXPECT_EQ(neg.accuracy, 1.0);
  EXPECT_THROW(classification_metrics({true}, {true, false}), DataError);
  EXPECT_THROW(classification_metrics({}, {}), DataError);
}

TEST(Tokenize, LowercasedAlphanumericRuns) {
  EXPECT_EQ(tokenize("Small LEFT pleural-effusion; 2cm."),
            (std::vector<std::string>{"small", "left", "pleural", "effusion", "2cm"}));
  EXPECT_TRUE(tokenize(" ;; ").empty());
}

struct TextCase {
  const char* cand;
  const char* ref;
  double rouge;
  double meteor;
};

TEST(TextMetrics, ReferenceValues) {
  const TextCase cases[] = {
      {"lungs are clear", "the lungs are clear", 0.8571428571428571, 0.754985754985755},
      {"pleural effusion present", "pleural effusion present", 1.0, 0.9814814814814815},
      {"a b", "b a", 0.5, 0.5},
      {"the cat sat on the mat", "on the mat the cat sat", 0.5, 0.9814814814814815},
      {"small left pleural effusion; cardiomegaly", "cardiomegaly with small left pleural effusion",
       0.7272727272727272, 0.8203389830508474},
      {"a a b", "b a a a", 0.5714285714285715, 0.6552706552706553},
  };
  for (const auto& c : cases) {
    EXPECT_NEAR(rouge_l(c.cand, c.ref).score, c.rouge, 1e-6) << c.cand;
    EXPECT_NEAR(meteor(c.cand, c.ref).score, c.meteor, 1e-6) << c.cand;
  }
}

TEST(TextMetrics, NoOverlapAndEmptyInputs) {
  EXPECT_EQ(rouge_l("alpha beta", "gamma").score, 0.0);
  EXPECT_EQ(meteor("alpha beta", "gamma").score, 0.0);
  const TextScore e = rouge_l("", "gamma");
  EXPECT_TRUE(e.empty_input);
  EXPECT_EQ(e.score, 0.0);
  EXPECT_TRUE(meteor("x", "...").empty_input);
}

std::string random_sentence(std::mt19937_64& rng, std::size_t len) {
  static const char* vocab[] = {"a", "b", "c", "lung", "heart", "clear", "effusion", "left"};
  std::uniform_int_distribution<std::size_t> pick(0, 7);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += std::string(i ? " " : "") + vocab[pick(rng)];
  return s;
}

TEST(TextMetrics, SelfScores) {
  std::mt19937_64 rng(31);
  for (std::size_t len = 1; len <= 30; ++len) {
    const std::string s = random_sentence(rng, len);
    EXPECT_EQ(rouge_l(s, s).score, 1.0);
    const double n = static_cast<double>(len);
    EXPECT_NEAR(meteor(s, s).score, 1.0 - 0.5 / (n * n * n), 1e-12) << s;
  }
}

TEST(TextMetrics, RougeSymmetricForEqualLengths) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 1 + trial % 9;
    const std::string a = random_sentence(rng, len);
    const std::string b = random_sentence(rng, len);
    EXPECT_DOUBLE_EQ(rouge_l(a, b).score, rouge_l(b, a).score);
  }
}

TEST(TextMetrics, MeteorChunksPreferFewest) {
  std::size_t matches = 0;
  const auto tok = [](const char* s) { return tokenize(s); };
  EXPECT_EQ(meteor_chunks(tok("the cat sat on the mat"), tok("on the mat the cat sat"), &matches), 2u);
  EXPECT_EQ(matches, 6u);
  EXPECT_EQ(meteor_chunks(tok("a b"), tok("b a"), &matches), 2u);
  EXPECT_EQ(matches, 2u);
  EXPECT_EQ(meteor_chunks(tok("x"), tok("y"), &matches), 0u);
  EXPECT_EQ(matches, 0u);
}

TEST(TextMetrics, ScoresStayInUnitInterval) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::string a = random_sentence(rng, 1 + trial % 13);
    const std::string b = random_sentence(rng, 1 + (trial * 7) % 11);
    for (double v : {rouge_l(a, b).score, meteor(a, b).score}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(ZeroShot, CosineArgmaxWithLowIndexTies) {
  Matrix text(3, 2);
  text.data = {1.0, 0.0, 0.0, 1.0, 1.0, 0.0};
  const std::vector<std::vector<double>> images = {{2.0, 0.1}, {0.1, 5.0}, {1.0, 1.0}};
  const std::vector<std::size_t> labels = {2, 1, 0};
  const ZeroShotResult r = zero_shot_eval(images, text, labels);
  EXPECT_EQ(r.predictions, (std::vector<std::size_t>{0, 1, 0}));
  EXPECT_DOUBLE_EQ(r.accuracy, 2.0 / 3.0);
}

TEST(ZeroShot, ScaleInvariantAndRejectsZeroRows) {
  Matrix text(2, 3);
  text.data = {0.3, -0.2, 0.9, -0.5, 0.8, 0.1};
  std::vector<std::vector<double>> images = {{0.2, 0.4, -0.1}, {1.0, -1.0, 2.0}};
  const std::vector<std::size_t> labels = {1, 0};
  const ZeroShotResult a = zero_shot_eval(images, text, labels);
  for (auto& row : images) {
    for (auto& v : row) v *= 13.0;
  }
  EXPECT_EQ(zero_shot_eval(images, text, labels).predictions, a.predictions);
  images[1] = {0.0, 0.0, 0.0};
  EXPECT_THROW(zero_shot_eval(images, text, labels), NumericsError);
}

}  // namespace
}  // namespace cbe
