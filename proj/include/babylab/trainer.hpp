#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "babylab/corpus.hpp"
#include "babylab/model.hpp"
#include "babylab/optimizer.hpp"

namespace babylab {

inline constexpr std::array<std::size_t, 3> kGridEpochs = {1, 5, 10};
inline constexpr std::array<std::size_t, 5> kGridPatterns = {1, 5, 10, 20, 50};
inline constexpr std::array<std::size_t, 4> kGridBatchSizes = {16, 32, 64, 128};
inline constexpr std::size_t kDefaultRunBudget = 36;
inline constexpr double kDefaultLearningRate = 1e-4;
// Above this many optimizer steps only every 10th loss is kept.
inline constexpr std::size_t kLossSubsampleThreshold = 100000;

// One point of the sweep grid plus the settings shared by every point.
struct Hyperparams {
  std::string preset_name = "xs";
  std::size_t epochs = 1;
  std::size_t num_patterns = 10;
  std::size_t batch_size = 32;
  double learning_rate = kDefaultLearningRate;
  double mask_prob = kDefaultMaskProb;
  double clip_norm = 0.0;  // 0 disables gradient clipping
  std::uint64_t seed = 0;

  // Grid membership is enforced unless preset_name == "custom".
  void validate() const;

  nlohmann::json to_json() const;
  static Hyperparams from_json(const nlohmann::json& doc);

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

// Hash of the hyperparameters and model shape; names the run's record file.
std::string run_hash(const Hyperparams& hp, const ModelConfig& config);

std::size_t steps_per_epoch(std::size_t num_sentences, const Hyperparams& hp);
std::size_t total_steps(std::size_t num_sentences, const Hyperparams& hp);

struct TrainOptions {
  AdamWConfig adamw;
  // Called after every optimizer step with (step index, total steps, loss).
  std::function<void(std::size_t, std::size_t, double)> on_step;
};

struct TrainResult {
  Parameters params;
  std::vector<double> loss_curve;
  std::size_t steps = 0;
};

// MLM pretraining over `epochs` passes of the augmented set. All randomness
// (initialization, mask patterns, shuffling, dropout) derives from hp.seed.
// Throws DivergenceError if the loss becomes non-finite.
TrainResult pretrain(const ModelConfig& config, const Hyperparams& hp,
                     std::span<const Sentence> sentences, const TrainOptions& options = {});

struct RunRecord {
  Hyperparams hyperparams;
  ModelConfig config;
  std::string hash;
  std::string status = "ok";  // "ok" or "failed"
  std::string error;
  std::size_t steps = 0;
  std::vector<double> loss_curve;
  std::map<std::string, double> eval;
  double overall = 0.0;
  double wall_time = 0.0;
  std::string checkpoint;

  bool ok() const { return status == "ok"; }

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& doc);
};

// Arithmetic mean of the task accuracies.
double mean_accuracy(const std::map<std::string, double>& eval);

}  // namespace babylab
