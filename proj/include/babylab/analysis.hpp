#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "babylab/trainer.hpp"

namespace babylab {

inline constexpr const char* kOverallColumn = "overall";

// Rows are runs keyed by run hash; columns are task accuracies (sorted by
// name) followed by "overall".
struct ScoreTable {
  std::vector<std::string> row_keys;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> values;  // [row][column]

  std::vector<double> column(std::size_t c) const;
};

// Successful records only. Throws if their task sets differ.
ScoreTable make_score_table(std::span<const RunRecord> records);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of the average ranks. Throws when the sizes differ,
// there are fewer than two values, or either input is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct CorrelationMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::optional<double>>> values;  // nullopt: undefined
};

CorrelationMatrix correlation_matrix(const ScoreTable& table);

// Rows ordered by ascending overall (ties by run hash). series[c] lists
// column c in that order.
struct Trajectories {
  std::vector<std::string> row_keys;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> series;
};

Trajectories rank_trajectories(const ScoreTable& table);

// Writes scores.csv, correlation.csv, correlation.svg, trajectories.svg and
// leaderboard.md into out_dir.
void emit_report(std::span<const RunRecord> records, const std::string& out_dir);

// Fixed four-decimal rendering used in every report file.
std::string format4(double value);

}  // namespace babylab
