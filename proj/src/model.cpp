#include "babylab/model.hpp"

#include <algorithm>

#include "babylab/error.hpp"
#include "babylab/random.hpp"

namespace babylab {

namespace {

struct PresetRow {
  std::string_view name;
  std::size_t hidden, intermediate, heads, layers;
  double reported_millions;
};

constexpr std::array<PresetRow, 5> kPresets = {{
    {"xs", 64, 256, 4, 4, 0.75},
    {"s", 128, 512, 4, 4, 1.8},
    {"base", 256, 1024, 8, 8, 8.5},
    {"l", 512, 2048, 8, 8, 29.7},
    {"xl", 768, 3072, 12, 12, 92.0},
}};

const PresetRow& find_preset(std::string_view name) {
  for (const auto& row : kPresets) {
    if (row.name == name) return row;
  }
  throw Error("unknown model preset '" + std::string(name) + "' (expected xs, s, base, l, xl)");
}

}  // namespace

void ModelConfig::validate() const {
  if (hidden_size == 0 || intermediate_size == 0 || num_heads == 0 || num_layers == 0) {
    throw Error("model dimensions must be positive");
  }
  if (hidden_size % num_heads != 0) {
    throw Error("hidden_size " + std::to_string(hidden_size) + " is not divisible by num_heads " +
                std::to_string(num_heads));
  }
  if (vocab_size <= static_cast<std::size_t>(kNumSpecial)) {
    throw Error("vocab_size must exceed the number of special tokens");
  }
  if (max_context < 3) throw Error("max_context must be at least 3");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
  if (preset_name != "custom") {
    const auto& row = find_preset(preset_name);
    if (hidden_size != row.hidden || intermediate_size != row.intermediate ||
        num_heads != row.heads || num_layers != row.layers) {
      throw Error("shape does not match preset '" + preset_name +
                  "'; set preset to custom to change it");
    }
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"preset", preset_name},
          {"hidden_size", hidden_size},
          {"intermediate_size", intermediate_size},
          {"num_heads", num_heads},
          {"num_layers", num_layers},
          {"vocab_size", vocab_size},
          {"max_context", max_context},
          {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  c.preset_name = doc.at("preset").get<std::string>();
  c.hidden_size = doc.at("hidden_size").get<std::size_t>();
  c.intermediate_size = doc.at("intermediate_size").get<std::size_t>();
  c.num_heads = doc.at("num_heads").get<std::size_t>();
  c.num_layers = doc.at("num_layers").get<std::size_t>();
  c.vocab_size = doc.at("vocab_size").get<std::size_t>();
  c.max_context = doc.at("max_context").get<std::size_t>();
  c.dropout = doc.at("dropout").get<double>();
  c.validate();
  return c;
}

ModelConfig preset_config(std::string_view name, std::size_t vocab_size, std::size_t max_context) {
  const auto& row = find_preset(name);
  ModelConfig c;
  c.preset_name = std::string(row.name);
  c.hidden_size = row.hidden;
  c.intermediate_size = row.intermediate;
  c.num_heads = row.heads;
  c.num_layers = row.layers;
  c.vocab_size = vocab_size;
  c.max_context = max_context;
  return c;
}

double preset_reported_millions(std::string_view name) { return find_preset(name).reported_millions; }

std::vector<TensorInfo> parameter_layout(const ModelConfig& c) {
  std::vector<TensorInfo> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape, bool decay) {
    std::size_t size = 1;
    for (auto d : shape) size *= d;
    layout.push_back({std::move(name), std::move(shape), offset, size, decay});
    offset += size;
  };
  const std::size_t h = c.hidden_size, inter = c.intermediate_size;
  add("embeddings.token", {c.vocab_size, h}, true);
  add("embeddings.position", {c.max_context, h}, true);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln1.gain", {h}, false);
    add(p + "ln1.bias", {h}, false);
    add(p + "attention.query", {h, h}, true);
    add(p + "attention.key", {h, h}, true);
    add(p + "attention.value", {h, h}, true);
    add(p + "attention.output", {h, h}, true);
    add(p + "ln2.gain", {h}, false);
    add(p + "ln2.bias", {h}, false);
    add(p + "ffn.w1", {h, inter}, true);
    add(p + "ffn.b1", {inter}, false);
    add(p + "ffn.w2", {inter, h}, true);
    add(p + "ffn.b2", {h}, false);
  }
  add("final_ln.gain", {h}, false);
  add("final_ln.bias", {h}, false);
  add("mlm.output_bias", {c.vocab_size}, false);
  return layout;
}

ParameterOffsets::ParameterOffsets(const ModelConfig& c) {
  const auto layout = parameter_layout(c);
  std::size_t i = 0;
  auto next = [&] { return layout.at(i++).offset; };
  token_embedding = next();
  position_embedding = next();
  layers.resize(c.num_layers);
  for (auto& l : layers) {
    l.ln1_gain = next();
    l.ln1_bias = next();
    l.wq = next();
    l.wk = next();
    l.wv = next();
    l.wo = next();
    l.ln2_gain = next();
    l.ln2_bias = next();
    l.ffn_w1 = next();
    l.ffn_b1 = next();
    l.ffn_w2 = next();
    l.ffn_b2 = next();
  }
  final_gain = next();
  final_bias = next();
  output_bias = next();
  total = layout.back().offset + layout.back().size;
}

std::size_t count_parameters(const ModelConfig& config) {
  const auto layout = parameter_layout(config);
  return layout.back().offset + layout.back().size;
}

Parameters init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Parameters p;
  p.config = config;
  p.data.assign(count_parameters(config), 0.0f);
  Rng rng(seed);
  for (const auto& t : parameter_layout(config)) {
    auto values = p.tensor(t);
    if (t.decay) {
      for (auto& v : values) v = static_cast<float>(rng.truncated_normal(kInitStddev));
    } else if (t.name.ends_with(".gain")) {
      std::fill(values.begin(), values.end(), 1.0f);
    }
  }
  return p;
}

Batch collate(std::span<const MaskedExample> examples) {
  if (examples.empty()) throw Error("cannot collate an empty batch");
  Batch b;
  b.batch_size = examples.size();
  for (const auto& ex : examples) b.length = std::max(b.length, ex.input_ids.size());
  b.input_ids.assign(b.batch_size * b.length, kPad);
  b.labels.assign(b.batch_size * b.length, kIgnoreLabel);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::copy(examples[i].input_ids.begin(), examples[i].input_ids.end(),
              b.input_ids.begin() + static_cast<std::ptrdiff_t>(i * b.length));
    std::copy(examples[i].labels.begin(), examples[i].labels.end(),
              b.labels.begin() + static_cast<std::ptrdiff_t>(i * b.length));
  }
  return b;
}

}  // namespace babylab
