#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "babylab/corpus.hpp"
#include "babylab/suite.hpp"
#include "babylab/tokenizer.hpp"
#include "babylab/trainer.hpp"

namespace babylab {

struct SweepGrid {
  std::vector<std::size_t> epochs{kGridEpochs.begin(), kGridEpochs.end()};
  std::vector<std::size_t> num_patterns{kGridPatterns.begin(), kGridPatterns.end()};
  std::vector<std::size_t> batch_sizes{kGridBatchSizes.begin(), kGridBatchSizes.end()};
};

// Cartesian product of the grid over `base`, sorted by
// (epochs, num_patterns, batch_size).
std::vector<Hyperparams> expand_grid(const SweepGrid& grid, const Hyperparams& base);

struct SweepInputs {
  const Vocabulary* vocab = nullptr;
  std::span<const Sentence> sentences;
  std::span<const MinimalPair> suite;
};

struct SweepOptions {
  std::size_t budget = kDefaultRunBudget;
  std::size_t jobs = 1;  // >1 forks worker processes
  bool save_checkpoints = true;
  TrainOptions train;
  // Called in the writing process after each record is persisted.
  std::function<void(const RunRecord&)> on_record;
};

// Runs the first min(|grid|, budget) points in sorted order, one record file
// per run (<sweep_dir>/<hash>.json) plus <sweep_dir>/manifest.json listing
// completed hashes. Runs whose record already exists are skipped, so an
// interrupted sweep resumes where it stopped. A failing run is recorded with
// status "failed" and the sweep continues.
std::vector<RunRecord> run_sweep(const ModelConfig& config, std::vector<Hyperparams> grid,
                                 const SweepInputs& inputs, const std::string& sweep_dir,
                                 const SweepOptions& options);

// Trains and evaluates one grid point; never throws for training failures.
// The checkpoint is written to `checkpoint_path` (skipped when empty) and
// recorded as `checkpoint_ref`, a path relative to the record file.
RunRecord run_one(const ModelConfig& config, const Hyperparams& hp, const SweepInputs& inputs,
                  const std::string& checkpoint_path, const std::string& checkpoint_ref,
                  const TrainOptions& train);

// Every parseable record in the sweep directory, sorted by
// (epochs, num_patterns, batch_size, hash).
std::vector<RunRecord> load_sweep(const std::string& sweep_dir);

void write_record(const std::string& sweep_dir, const RunRecord& record);

// True when `a` ranks above `b`: higher overall, then fewer epochs, fewer
// patterns, smaller batch, then smaller hash.
bool ranks_above(const RunRecord& a, const RunRecord& b);

// Best successful record under ranks_above; throws if there is none.
const RunRecord& select_best(std::span<const RunRecord> records);

}  // namespace babylab
