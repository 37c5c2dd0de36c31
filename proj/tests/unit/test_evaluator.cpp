#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "babylab/error.hpp"
#include "babylab/evaluator.hpp"
#include "test_util.hpp"

using namespace babylab;
using babylab::test::naive_pll;
using babylab::test::tiny_config;
using babylab::test::toy_data;

namespace {

Parameters noisy_params(const ModelConfig& c, std::uint64_t seed) {
  auto p = init_parameters(c, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 0.3f);
  for (auto& v : p.data) v += n(rng);
  return p;
}

}  // namespace

TEST(Evaluator, SingleTokenSentence) {
  const auto vocab = train_bpe(std::vector<std::string>{"x y"}, 8);
  const auto p = noisy_params(tiny_config(vocab.size()), 1);
  Batch b;
  b.batch_size = 1;
  b.length = 3;
  b.input_ids = {kBos, kMask, kEos};
  const std::vector<Query> q = {{0, 1, vocab.id_of("x")}};
  EXPECT_NEAR(pseudo_log_likelihood(p, vocab, "x"), target_log_probs(p, b, q)[0], 1e-6);
  EXPECT_NEAR(pseudo_log_likelihood(p, vocab, "x"),
              static_cast<double>(naive_pll(p, vocab, "x")), 1e-5);
}

TEST(Evaluator, BatchedPllMatchesOneSentencePerPass) {
  const auto d = toy_data(300, 2, 20);
  const auto p = cast_parameters<double>(noisy_params(tiny_config(d.vocab.size(), 128), 2));
  for (const auto& pair : d.raw.pairs) {
    for (const auto& s : {pair.good, pair.bad}) {
      const long double ref = naive_pll(p, d.vocab, s);
      const double got = pseudo_log_likelihood(p, d.vocab, s);
      EXPECT_LT(std::abs(got - ref), 1e-6L) << s;
      const auto terms = pseudo_log_likelihood_terms(p, d.vocab, s);
      EXPECT_EQ(terms.size(), d.vocab.encode(s).size());
      double sum = 0;
      for (double t : terms) {
        EXPECT_LE(t, 0.0);
        sum += t;
      }
      EXPECT_NEAR(sum, got, 1e-9);
    }
  }
}

TEST(Evaluator, TiesCountAsIncorrect) {
  // All-zero parameters give uniform predictions everywhere.
  const auto vocab = train_bpe(std::vector<std::string>{"a b"}, 8);
  auto p = init_parameters(tiny_config(vocab.size()), 1);
  std::fill(p.data.begin(), p.data.end(), 0.0f);
  const MinimalPair pair{"a b", "b a", "t"};
  EXPECT_EQ(pseudo_log_likelihood(p, vocab, pair.good), pseudo_log_likelihood(p, vocab, pair.bad));
  EXPECT_FALSE(score_pair(p, vocab, pair));
  const std::vector<MinimalPair> suite = {pair};
  EXPECT_EQ(evaluate_suite(p, vocab, suite).overall, 0.0);
}

TEST(Evaluator, UntrainedModelIsNearChance) {
  const auto d = toy_data(500, 3, 1000);
  const auto p = init_parameters(tiny_config(d.vocab.size(), 128), 3);
  const auto report = evaluate_suite(p, d.vocab, d.raw.pairs);
  EXPECT_GE(report.overall, 0.44);
  EXPECT_LE(report.overall, 0.56);
}

TEST(Evaluator, OverallIsUnweightedTaskMean) {
  std::vector<MinimalPair> suite;
  std::vector<bool> correct;
  for (int i = 0; i < 10; ++i) {
    suite.push_back({"g", "b", "alpha"});
    correct.push_back(i < 8);
  }
  for (int i = 0; i < 5; ++i) {
    suite.push_back({"g", "b", "beta"});
    correct.push_back(i < 3);
  }
  const auto r = summarize_outcomes(suite, correct);
  ASSERT_EQ(r.tasks.size(), 2u);
  EXPECT_EQ(r.tasks[0].task, "alpha");
  EXPECT_EQ(r.tasks[0].num_pairs, 10u);
  EXPECT_EQ(r.tasks[0].num_correct, 8u);
  EXPECT_DOUBLE_EQ(r.tasks[0].accuracy, 0.8);
  EXPECT_DOUBLE_EQ(r.tasks[1].accuracy, 0.6);
  EXPECT_DOUBLE_EQ(r.overall, 0.7);
  EXPECT_THROW(summarize_outcomes(suite, std::vector<bool>(3, true)), Error);
  EXPECT_THROW(summarize_outcomes({}, {}), Error);
}

TEST(Evaluator, SuiteInvariants) {
  const auto d = toy_data(300, 4, 60);
  const auto p = noisy_params(tiny_config(d.vocab.size(), 128), 4);
  const auto base = evaluate_suite(p, d.vocab, d.raw.pairs);

  auto shuffled = d.raw.pairs;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
  EXPECT_DOUBLE_EQ(evaluate_suite(p, d.vocab, shuffled).overall, base.overall);

  auto doubled = d.raw.pairs;
  doubled.insert(doubled.end(), d.raw.pairs.begin(), d.raw.pairs.end());
  EXPECT_DOUBLE_EQ(evaluate_suite(p, d.vocab, doubled).overall, base.overall);

  // With no ties, swapping good and bad flips every outcome.
  auto swapped = d.raw.pairs;
  for (auto& pair : swapped) std::swap(pair.good, pair.bad);
  const auto flipped = evaluate_suite(p, d.vocab, swapped);
  ASSERT_EQ(flipped.tasks.size(), base.tasks.size());
  for (std::size_t t = 0; t < base.tasks.size(); ++t) {
    EXPECT_EQ(flipped.tasks[t].num_correct + base.tasks[t].num_correct, base.tasks[t].num_pairs);
  }
}

TEST(Evaluator, RejectsUnscorableSentences) {
  const auto d = toy_data(50, 5, 10);
  const auto p = init_parameters(tiny_config(d.vocab.size(), 6), 5);
  EXPECT_THROW(pseudo_log_likelihood(p, d.vocab, ""), Error);
  EXPECT_THROW(pseudo_log_likelihood(p, d.vocab, "the dog sees the big red cat ."), Error);
  EXPECT_THROW(evaluate_suite(p, d.vocab, {}), Error);
}

TEST(Evaluator, ReportJson) {
  std::vector<MinimalPair> suite = {{"g", "b", "x"}, {"g", "b", "x"}};
  const auto r = summarize_outcomes(suite, {true, false});
  const auto j = report_to_json(r, "abc", "def");
  EXPECT_EQ(j["checkpoint_hash"], "abc");
  EXPECT_EQ(j["suite_hash"], "def");
  EXPECT_DOUBLE_EQ(j["overall"].get<double>(), 0.5);
  EXPECT_EQ(j["tasks"][0]["num_correct"], 1);
}
