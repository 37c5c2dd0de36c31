#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "babylab/model.hpp"
#include "babylab/suite.hpp"
#include "babylab/tokenizer.hpp"

namespace babylab {

// Sum over the sentence's tokens of log p(token | sentence with that token
// masked), BOS/EOS excluded, dropout off. All masked variants of the
// sentence run as one batch.
template <typename Real>
double pseudo_log_likelihood(const BasicParameters<Real>& params, const Vocabulary& vocab,
                             std::string_view sentence);

// Per-position terms of the pseudo-log-likelihood, in token order.
template <typename Real>
std::vector<double> pseudo_log_likelihood_terms(const BasicParameters<Real>& params,
                                                const Vocabulary& vocab, std::string_view sentence);

// Ties count as incorrect.
bool score_pair(const Parameters& params, const Vocabulary& vocab, const MinimalPair& pair);

struct TaskScore {
  std::string task;
  std::size_t num_pairs = 0;
  std::size_t num_correct = 0;
  double accuracy = 0.0;
};

struct SuiteReport {
  std::vector<TaskScore> tasks;  // sorted by task name
  double overall = 0.0;          // unweighted mean over tasks
};

SuiteReport evaluate_suite(const Parameters& params, const Vocabulary& vocab,
                           std::span<const MinimalPair> suite);

// Aggregates per-pair outcomes (parallel to `suite`) into task scores.
SuiteReport summarize_outcomes(std::span<const MinimalPair> suite, const std::vector<bool>& correct);

nlohmann::json report_to_json(const SuiteReport& report, const std::string& checkpoint_hash,
                              const std::string& suite_hash);

}  // namespace babylab
