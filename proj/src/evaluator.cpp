#include "babylab/evaluator.hpp"

#include <map>
#include <numeric>

#include "babylab/error.hpp"

namespace babylab {

template <typename Real>
std::vector<double> pseudo_log_likelihood_terms(const BasicParameters<Real>& params,
                                                const Vocabulary& vocab, std::string_view sentence) {
  const auto tokens = vocab.encode(sentence);
  if (tokens.empty()) throw Error("sentence encodes to no tokens");
  const std::size_t n = tokens.size();
  if (n + 2 > params.config.max_context) {
    throw Error("sentence of " + std::to_string(n) + " tokens exceeds max_context " +
                std::to_string(params.config.max_context));
  }
  Batch batch;
  batch.batch_size = n;
  batch.length = n + 2;
  batch.input_ids.resize(n * (n + 2));
  std::vector<Query> queries(n);
  for (std::size_t i = 0; i < n; ++i) {
    TokenId* row = batch.input_ids.data() + i * (n + 2);
    row[0] = kBos;
    std::copy(tokens.begin(), tokens.end(), row + 1);
    row[n + 1] = kEos;
    row[i + 1] = kMask;
    queries[i] = {i, i + 1, tokens[i]};
  }
  return target_log_probs(params, batch, queries);
}

template <typename Real>
double pseudo_log_likelihood(const BasicParameters<Real>& params, const Vocabulary& vocab,
                             std::string_view sentence) {
  const auto terms = pseudo_log_likelihood_terms(params, vocab, sentence);
  return std::accumulate(terms.begin(), terms.end(), 0.0);
}

template std::vector<double> pseudo_log_likelihood_terms(const BasicParameters<float>&,
                                                         const Vocabulary&, std::string_view);
template std::vector<double> pseudo_log_likelihood_terms(const BasicParameters<double>&,
                                                         const Vocabulary&, std::string_view);
template double pseudo_log_likelihood(const BasicParameters<float>&, const Vocabulary&,
                                      std::string_view);
template double pseudo_log_likelihood(const BasicParameters<double>&, const Vocabulary&,
                                      std::string_view);

bool score_pair(const Parameters& params, const Vocabulary& vocab, const MinimalPair& pair) {
  return pseudo_log_likelihood(params, vocab, pair.good) >
         pseudo_log_likelihood(params, vocab, pair.bad);
}

SuiteReport summarize_outcomes(std::span<const MinimalPair> suite, const std::vector<bool>& correct) {
  if (correct.size() != suite.size()) throw Error("outcome count does not match suite size");
  if (suite.empty()) throw Error("minimal-pair suite is empty");
  std::map<std::string, TaskScore> by_task;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    auto& score = by_task[suite[i].task];
    score.task = suite[i].task;
    ++score.num_pairs;
    if (correct[i]) ++score.num_correct;
  }
  SuiteReport report;
  double sum = 0.0;
  for (auto& [task, score] : by_task) {
    if (score.num_pairs == 0) throw Error("task '" + task + "' has no pairs");
    score.accuracy = static_cast<double>(score.num_correct) / static_cast<double>(score.num_pairs);
    sum += score.accuracy;
    report.tasks.push_back(score);
  }
  report.overall = sum / static_cast<double>(report.tasks.size());
  return report;
}

SuiteReport evaluate_suite(const Parameters& params, const Vocabulary& vocab,
                           std::span<const MinimalPair> suite) {
  if (suite.empty()) throw Error("minimal-pair suite is empty");
  // Each distinct sentence is scored once; scores depend only on the sentence.
  std::map<std::string, double, std::less<>> cache;
  auto pll = [&](const std::string& s) {
    auto it = cache.find(s);
    if (it == cache.end()) it = cache.emplace(s, pseudo_log_likelihood(params, vocab, s)).first;
    return it->second;
  };
  std::vector<bool> correct(suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    if (suite[i].good == suite[i].bad) throw Error("degenerate minimal pair (good == bad)");
    correct[i] = pll(suite[i].good) > pll(suite[i].bad);
  }
  return summarize_outcomes(suite, correct);
}

nlohmann::json report_to_json(const SuiteReport& report, const std::string& checkpoint_hash,
                              const std::string& suite_hash) {
  nlohmann::json doc;
  doc["tasks"] = nlohmann::json::array();
  for (const auto& t : report.tasks) {
    doc["tasks"].push_back({{"task", t.task},
                            {"num_pairs", t.num_pairs},
                            {"num_correct", t.num_correct},
                            {"accuracy", t.accuracy}});
  }
  doc["overall"] = report.overall;
  doc["checkpoint_hash"] = checkpoint_hash;
  doc["suite_hash"] = suite_hash;
  return doc;
}

}  // namespace babylab
