#include "babylab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "babylab/error.hpp"
#include "babylab/hash.hpp"
#include "babylab/masking.hpp"
#include "babylab/random.hpp"

namespace babylab {

namespace {

template <std::size_t N>
void check_grid(const char* name, std::size_t value, const std::array<std::size_t, N>& allowed) {
  if (std::find(allowed.begin(), allowed.end(), value) != allowed.end()) return;
  std::string list;
  for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::to_string(a);
  throw Error(std::string(name) + "=" + std::to_string(value) + " is not on the grid {" + list +
              "}; use preset custom for off-grid values");
}

void clip_gradient(AlignedVector<float>& grad, double max_norm) {
  double sq = 0.0;
  for (float g : grad) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const auto scale = static_cast<float>(max_norm / norm);
  for (auto& g : grad) g *= scale;
}

}  // namespace

void Hyperparams::validate() const {
  if (epochs == 0 || num_patterns == 0 || batch_size == 0) {
    throw Error("epochs, num_patterns and batch_size must be positive");
  }
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw Error("mask_prob must lie in (0, 1)");
  if (clip_norm < 0.0) throw Error("clip_norm must be non-negative");
  if (preset_name == "custom") return;
  check_grid("epochs", epochs, kGridEpochs);
  check_grid("num_patterns", num_patterns, kGridPatterns);
  check_grid("batch_size", batch_size, kGridBatchSizes);
}

nlohmann::json Hyperparams::to_json() const {
  return {{"preset", preset_name},     {"epochs", epochs},       {"num_patterns", num_patterns},
          {"batch_size", batch_size},  {"learning_rate", learning_rate},
          {"mask_prob", mask_prob},    {"clip_norm", clip_norm}, {"seed", seed}};
}

Hyperparams Hyperparams::from_json(const nlohmann::json& doc) {
  Hyperparams hp;
  hp.preset_name = doc.at("preset").get<std::string>();
  hp.epochs = doc.at("epochs").get<std::size_t>();
  hp.num_patterns = doc.at("num_patterns").get<std::size_t>();
  hp.batch_size = doc.at("batch_size").get<std::size_t>();
  hp.learning_rate = doc.at("learning_rate").get<double>();
  hp.mask_prob = doc.at("mask_prob").get<double>();
  hp.clip_norm = doc.at("clip_norm").get<double>();
  hp.seed = doc.at("seed").get<std::uint64_t>();
  return hp;
}

std::string run_hash(const Hyperparams& hp, const ModelConfig& config) {
  const nlohmann::json key = {{"hyperparams", hp.to_json()}, {"model", config.to_json()}};
  return hex64(fnv1a64(key.dump()));
}

std::size_t steps_per_epoch(std::size_t num_sentences, const Hyperparams& hp) {
  return (num_sentences * hp.num_patterns + hp.batch_size - 1) / hp.batch_size;
}

std::size_t total_steps(std::size_t num_sentences, const Hyperparams& hp) {
  return hp.epochs * steps_per_epoch(num_sentences, hp);
}

TrainResult pretrain(const ModelConfig& config, const Hyperparams& hp,
                     std::span<const Sentence> sentences, const TrainOptions& options) {
  config.validate();
  hp.validate();
  if (sentences.empty()) throw Error("cannot pretrain on an empty corpus");
  for (const auto& s : sentences) {
    if (s.tokens.empty()) throw Error("sentence on line " + std::to_string(s.source_line) +
                                      " has no tokens");
    if (s.tokens.size() + 2 > config.max_context) {
      throw Error("sentence on line " + std::to_string(s.source_line) +
                  " exceeds max_context; load the corpus with the model's max_context");
    }
  }

  TrainResult result;
  result.params = init_parameters(config, derive_seed(hp.seed, "init"));
  const auto layout = parameter_layout(config);
  const AugmentedDataset data(sentences, hp.num_patterns, hp.mask_prob,
                              derive_seed(hp.seed, "data"));
  const std::size_t per_epoch = steps_per_epoch(sentences.size(), hp);
  const std::size_t total = hp.epochs * per_epoch;
  const bool subsample = total > kLossSubsampleThreshold;
  result.loss_curve.reserve(subsample ? total / 10 + 1 : total);

  AdamWState<float> state;
  AlignedVector<float> grad;
  std::vector<MaskedExample> examples;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto order = data.epoch_order(epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += hp.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), begin + hp.batch_size);
      std::size_t pad_to = 0;
      for (std::size_t i = begin; i < end; ++i) {
        pad_to = std::max(pad_to, sentences[order[i].sentence].tokens.size() + 2);
      }
      examples.clear();
      for (std::size_t i = begin; i < end; ++i) examples.push_back(data.example(order[i], pad_to));
      const Batch batch = collate(examples);

      const ForwardOptions fwd{true, derive_seed(hp.seed, "dropout", step)};
      const double loss = loss_and_gradient(result.params, batch, fwd, grad);
      if (!std::isfinite(loss)) throw DivergenceError(step, loss);
      if (hp.clip_norm > 0.0) clip_gradient(grad, hp.clip_norm);
      const double lr = scheduled_lr(hp.learning_rate, step, total, options.adamw.warmup_fraction);
      adamw_step<float>(result.params.data, grad, state, layout, lr, options.adamw);

      if (!subsample || step % 10 == 0) result.loss_curve.push_back(loss);
      if (options.on_step) options.on_step(step, total, loss);
    }
  }
  result.steps = step;
  return result;
}

double mean_accuracy(const std::map<std::string, double>& eval) {
  if (eval.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [task, acc] : eval) sum += acc;
  return sum / static_cast<double>(eval.size());
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json doc;
  doc["hyperparams"] = hyperparams.to_json();
  doc["model"] = config.to_json();
  doc["hash"] = hash;
  doc["status"] = status;
  doc["error"] = error;
  doc["steps"] = steps;
  doc["loss_curve"] = loss_curve;
  doc["eval"] = eval;
  doc["overall"] = overall;
  doc["wall_time"] = wall_time;
  doc["checkpoint"] = checkpoint;
  return doc;
}

RunRecord RunRecord::from_json(const nlohmann::json& doc) {
  RunRecord r;
  r.hyperparams = Hyperparams::from_json(doc.at("hyperparams"));
  r.config = ModelConfig::from_json(doc.at("model"));
  r.hash = doc.at("hash").get<std::string>();
  r.status = doc.at("status").get<std::string>();
  r.error = doc.value("error", "");
  r.steps = doc.at("steps").get<std::size_t>();
  r.loss_curve = doc.at("loss_curve").get<std::vector<double>>();
  r.eval = doc.at("eval").get<std::map<std::string, double>>();
  r.overall = doc.at("overall").get<double>();
  r.wall_time = doc.value("wall_time", 0.0);
  r.checkpoint = doc.value("checkpoint", "");
  return r;
}

}  // namespace babylab
