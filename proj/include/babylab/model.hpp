#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "babylab/aligned.hpp"
#include "babylab/corpus.hpp"
#include "babylab/masking.hpp"
#include "babylab/tokenizer.hpp"

namespace babylab {

inline constexpr double kInitStddev = 0.02;
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kDefaultDropout = 0.1;

struct ModelConfig {
  std::string preset_name = "custom";  // xs, s, base, l, xl or custom
  std::size_t hidden_size = 64;
  std::size_t intermediate_size = 256;
  std::size_t num_heads = 4;
  std::size_t num_layers = 4;
  std::size_t vocab_size = kDefaultVocabSize;
  std::size_t max_context = kDefaultMaxContext;
  double dropout = kDefaultDropout;

  std::size_t head_dim() const { return hidden_size / num_heads; }

  // Throws on a non-positive dimension, hidden_size % num_heads != 0, or a
  // named preset whose shape differs from the published table.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::array<std::string_view, 5> kPresetNames = {"xs", "s", "base", "l", "xl"};

ModelConfig preset_config(std::string_view name, std::size_t vocab_size = kDefaultVocabSize,
                          std::size_t max_context = kDefaultMaxContext);

// Published parameter count of a preset, in millions.
double preset_reported_millions(std::string_view name);

std::size_t count_parameters(const ModelConfig& config);

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool decay = false;  // weight decay applies (matrices only)
};

// Tensors in declaration order: token embeddings, position embeddings, then
// per layer ln1, q, k, v, o, ln2, ffn1, ffn2, then the final layer norm and
// the MLM output bias. The MLM projection is the token embedding matrix.
std::vector<TensorInfo> parameter_layout(const ModelConfig& config);

// Flat offsets into the parameter buffer, derived from parameter_layout.
struct ParameterOffsets {
  struct Layer {
    std::size_t ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, ffn_w1, ffn_b1, ffn_w2,
        ffn_b2;
  };
  std::size_t token_embedding = 0;
  std::size_t position_embedding = 0;
  std::vector<Layer> layers;
  std::size_t final_gain = 0;
  std::size_t final_bias = 0;
  std::size_t output_bias = 0;
  std::size_t total = 0;

  explicit ParameterOffsets(const ModelConfig& config);
};

template <typename Real>
struct BasicParameters {
  ModelConfig config;
  AlignedVector<Real> data;

  std::span<Real> tensor(const TensorInfo& t) { return {data.data() + t.offset, t.size}; }
  std::span<const Real> tensor(const TensorInfo& t) const {
    return {data.data() + t.offset, t.size};
  }
};

using Parameters = BasicParameters<float>;

// Weights ~ truncated normal(0, 0.02) in declaration order; biases zero;
// layer-norm gains one.
Parameters init_parameters(const ModelConfig& config, std::uint64_t seed);

template <typename To, typename From>
BasicParameters<To> cast_parameters(const BasicParameters<From>& p) {
  BasicParameters<To> out;
  out.config = p.config;
  out.data.assign(p.data.begin(), p.data.end());
  return out;
}

// Row-major [batch_size x length] token ids. PAD positions are excluded as
// attention keys. `labels` is either empty or the same shape, holding
// kIgnoreLabel where there is no prediction target.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t length = 0;
  std::vector<TokenId> input_ids;
  std::vector<TokenId> labels;

  bool valid(std::size_t b, std::size_t t) const { return input_ids[b * length + t] != kPad; }
};

// Pads every example to the longest one in the span.
Batch collate(std::span<const MaskedExample> examples);

template <typename Real>
struct BasicTensor {
  std::vector<std::size_t> shape;
  AlignedVector<Real> data;
};

using Tensor = BasicTensor<float>;

struct ForwardOptions {
  bool train = false;          // enables dropout
  std::uint64_t dropout_seed = 0;
};

// Logits [batch x length x vocab].
template <typename Real>
BasicTensor<Real> forward(const BasicParameters<Real>& params, const Batch& batch,
                          const ForwardOptions& options = {});

// Attention probabilities per layer, each [batch x heads x length x length].
template <typename Real>
std::vector<BasicTensor<Real>> attention_weights(const BasicParameters<Real>& params,
                                                 const Batch& batch);

// Mean negative log-likelihood of the labelled positions (natural log).
template <typename Real>
double mlm_loss(const BasicTensor<Real>& logits, std::span<const TokenId> labels);

// Loss of batch.labels and its exact gradient, laid out like params.data.
// Logits are only formed at labelled positions.
template <typename Real>
double loss_and_gradient(const BasicParameters<Real>& params, const Batch& batch,
                         const ForwardOptions& options, AlignedVector<Real>& grad);

template <typename Real>
AlignedVector<Real> backward(const BasicParameters<Real>& params, const Batch& batch,
                           const ForwardOptions& options = {}) {
  AlignedVector<Real> grad;
  loss_and_gradient(params, batch, options, grad);
  return grad;
}

// log p(target | input) at selected (batch row, position) pairs, eval mode.
struct Query {
  std::size_t row = 0;
  std::size_t position = 0;
  TokenId target = 0;
};

template <typename Real>
std::vector<double> target_log_probs(const BasicParameters<Real>& params, const Batch& batch,
                                     std::span<const Query> queries);

}  // namespace babylab
