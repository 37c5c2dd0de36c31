#include "babylab/config.hpp"

#include <algorithm>
#include <fstream>

#include "babylab/error.hpp"

namespace babylab {

namespace {

void collect_keys(const nlohmann::json& doc, const std::string& prefix,
                  std::vector<std::string>& out) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      collect_keys(*it, key, out);
    } else {
      out.push_back(key);
    }
  }
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Suggestions come from the keys at the same nesting level.
[[noreturn]] void unknown_key(const std::string& key, const std::string& probe,
                              const nlohmann::json& level, const std::string& prefix) {
  std::vector<std::string> siblings;
  for (auto it = level.begin(); it != level.end(); ++it) {
    siblings.push_back(prefix.empty() ? it.key() : prefix + "." + it.key());
  }
  if (siblings.empty()) throw Error("unknown config key '" + key + "'");
  throw Error("unknown config key '" + key + "' (did you mean '" + nearest_key(probe, siblings) +
              "'?)");
}

void merge_at(nlohmann::json& base, const nlohmann::json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw Error("config must be a JSON object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) unknown_key(key, key, base, prefix);
    auto& slot = base[it.key()];
    if (slot.is_object()) {
      merge_at(slot, *it, key);
    } else {
      slot = *it;
    }
  }
}

template <typename T>
T get(const nlohmann::json& doc, const char* section, const char* key) {
  const auto& v = section ? doc.at(section).at(key) : doc.at(key);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(std::string("config key '") + (section ? std::string(section) + "." : "") + key +
                "' has the wrong type");
  }
}

std::size_t get_size(const nlohmann::json& doc, const char* section, const char* key) {
  const auto& v = doc.at(section).at(key);
  if (v.is_null()) return 0;
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw Error(std::string("config key '") + section + "." + key +
                "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

nlohmann::json default_config_json() {
  const Hyperparams hp;
  const AdamWConfig adamw;
  const SweepGrid grid;
  return {
      {"model",
       {{"preset", "xs"},
        {"hidden_size", nullptr},
        {"intermediate_size", nullptr},
        {"num_heads", nullptr},
        {"num_layers", nullptr},
        {"vocab_size", nullptr},
        {"max_context", kDefaultMaxContext},
        {"dropout", kDefaultDropout}}},
      {"train",
       {{"epochs", hp.epochs},
        {"num_patterns", hp.num_patterns},
        {"batch_size", hp.batch_size},
        {"learning_rate", hp.learning_rate},
        {"mask_prob", hp.mask_prob},
        {"clip_norm", hp.clip_norm},
        {"warmup_fraction", adamw.warmup_fraction},
        {"weight_decay", adamw.weight_decay}}},
      {"data", {{"corpus", ""}, {"vocab", ""}, {"suite", ""}}},
      {"sweep",
       {{"epochs", grid.epochs},
        {"num_patterns", grid.num_patterns},
        {"batch_size", grid.batch_sizes},
        {"budget", kDefaultRunBudget},
        {"jobs", 1}}},
      {"seed", 0},
  };
}

nlohmann::json config_schema() {
  auto integer = [](bool nullable = false) {
    return nullable ? nlohmann::json{{"type", {"integer", "null"}}, {"minimum", 1}}
                    : nlohmann::json{{"type", "integer"}, {"minimum", 1}};
  };
  auto number = [] { return nlohmann::json{{"type", "number"}}; };
  auto str = [] { return nlohmann::json{{"type", "string"}}; };
  auto int_list = [&] { return nlohmann::json{{"type", "array"}, {"items", integer()}}; };
  auto object = [](nlohmann::json props) {
    return nlohmann::json{
        {"type", "object"}, {"additionalProperties", false}, {"properties", std::move(props)}};
  };
  nlohmann::json schema = object({
      {"model", object({{"preset", {{"enum", {"xs", "s", "base", "l", "xl", "custom"}}}},
                        {"hidden_size", integer(true)},
                        {"intermediate_size", integer(true)},
                        {"num_heads", integer(true)},
                        {"num_layers", integer(true)},
                        {"vocab_size", integer(true)},
                        {"max_context", integer()},
                        {"dropout", number()}})},
      {"train", object({{"epochs", integer()},
                        {"num_patterns", integer()},
                        {"batch_size", integer()},
                        {"learning_rate", number()},
                        {"mask_prob", number()},
                        {"clip_norm", number()},
                        {"warmup_fraction", number()},
                        {"weight_decay", number()}})},
      {"data", object({{"corpus", str()}, {"vocab", str()}, {"suite", str()}})},
      {"sweep", object({{"epochs", int_list()},
                        {"num_patterns", int_list()},
                        {"batch_size", int_list()},
                        {"budget", {{"type", "integer"}, {"minimum", 0}}},
                        {"jobs", integer()}})},
      {"seed", {{"type", "integer"}, {"minimum", 0}}},
  });
  schema["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  schema["title"] = "babylab run configuration";
  return schema;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  collect_keys(default_config_json(), "", keys);
  return keys;
}

std::string nearest_key(const std::string& key, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& c : candidates) {
    // Compare against the full dotted key and its last component.
    const auto leaf = c.substr(c.rfind('.') == std::string::npos ? 0 : c.rfind('.') + 1);
    const std::size_t d = std::min(edit_distance(key, c), edit_distance(key, leaf) + 1);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void merge_config(nlohmann::json& base, const nlohmann::json& patch) { merge_at(base, patch, ""); }

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  nlohmann::json* slot = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!slot->is_object() || !slot->contains(part)) {
      const std::string prefix = start == 0 ? "" : key.substr(0, start - 1);
      unknown_key(key, key.substr(0, dot), slot->is_object() ? *slot : nlohmann::json::object(),
                  prefix);
    }
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (slot->is_object()) throw Error("config key '" + key + "' is a section, not a value");
  *slot = value;
}

nlohmann::json resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = default_config_json();
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read config " + path);
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed config " + path + ": " + e.what());
    }
    merge_config(doc, file);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return doc;
}

RunConfig parse_run_config(const nlohmann::json& doc) {
  RunConfig c;
  c.preset = get<std::string>(doc, "model", "preset");
  c.hidden_size = get_size(doc, "model", "hidden_size");
  c.intermediate_size = get_size(doc, "model", "intermediate_size");
  c.num_heads = get_size(doc, "model", "num_heads");
  c.num_layers = get_size(doc, "model", "num_layers");
  c.vocab_size = get_size(doc, "model", "vocab_size");
  c.max_context = get_size(doc, "model", "max_context");
  c.dropout = get<double>(doc, "model", "dropout");

  c.seed = get<std::uint64_t>(doc, nullptr, "seed");
  c.hyperparams.preset_name = c.preset;
  c.hyperparams.epochs = get_size(doc, "train", "epochs");
  c.hyperparams.num_patterns = get_size(doc, "train", "num_patterns");
  c.hyperparams.batch_size = get_size(doc, "train", "batch_size");
  c.hyperparams.learning_rate = get<double>(doc, "train", "learning_rate");
  c.hyperparams.mask_prob = get<double>(doc, "train", "mask_prob");
  c.hyperparams.clip_norm = get<double>(doc, "train", "clip_norm");
  c.hyperparams.seed = c.seed;
  c.adamw.warmup_fraction = get<double>(doc, "train", "warmup_fraction");
  c.adamw.weight_decay = get<double>(doc, "train", "weight_decay");

  c.corpus_path = get<std::string>(doc, "data", "corpus");
  c.vocab_path = get<std::string>(doc, "data", "vocab");
  c.suite_path = get<std::string>(doc, "data", "suite");

  c.grid.epochs = get<std::vector<std::size_t>>(doc, "sweep", "epochs");
  c.grid.num_patterns = get<std::vector<std::size_t>>(doc, "sweep", "num_patterns");
  c.grid.batch_sizes = get<std::vector<std::size_t>>(doc, "sweep", "batch_size");
  c.budget = get<std::size_t>(doc, "sweep", "budget");
  c.jobs = get_size(doc, "sweep", "jobs");
  if (c.jobs == 0) c.jobs = 1;
  return c;
}

ModelConfig RunConfig::model_config(std::size_t vocab_size_from_file) const {
  if (vocab_size != 0 && vocab_size != vocab_size_from_file) {
    throw Error("model.vocab_size " + std::to_string(vocab_size) +
                " does not match the vocabulary file (" + std::to_string(vocab_size_from_file) +
                " tokens)");
  }
  ModelConfig m;
  if (preset == "custom") {
    if (!hidden_size || !intermediate_size || !num_heads || !num_layers) {
      throw Error("preset custom needs model.hidden_size, intermediate_size, num_heads and num_layers");
    }
    m.hidden_size = hidden_size;
    m.intermediate_size = intermediate_size;
    m.num_heads = num_heads;
    m.num_layers = num_layers;
    m.preset_name = "custom";
  } else {
    m = preset_config(preset);
    if ((hidden_size && hidden_size != m.hidden_size) ||
        (intermediate_size && intermediate_size != m.intermediate_size) ||
        (num_heads && num_heads != m.num_heads) || (num_layers && num_layers != m.num_layers)) {
      throw Error("model shape keys conflict with preset '" + preset +
                  "'; set model.preset=custom to change the shape");
    }
  }
  m.vocab_size = vocab_size_from_file;
  m.max_context = max_context;
  m.dropout = dropout;
  m.validate();
  return m;
}

nlohmann::json RunConfig::to_json() const {
  auto opt = [](std::size_t v) { return v ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {
      {"model",
       {{"preset", preset},
        {"hidden_size", opt(hidden_size)},
        {"intermediate_size", opt(intermediate_size)},
        {"num_heads", opt(num_heads)},
        {"num_layers", opt(num_layers)},
        {"vocab_size", opt(vocab_size)},
        {"max_context", max_context},
        {"dropout", dropout}}},
      {"train",
       {{"epochs", hyperparams.epochs},
        {"num_patterns", hyperparams.num_patterns},
        {"batch_size", hyperparams.batch_size},
        {"learning_rate", hyperparams.learning_rate},
        {"mask_prob", hyperparams.mask_prob},
        {"clip_norm", hyperparams.clip_norm},
        {"warmup_fraction", adamw.warmup_fraction},
        {"weight_decay", adamw.weight_decay}}},
      {"data", {{"corpus", corpus_path}, {"vocab", vocab_path}, {"suite", suite_path}}},
      {"sweep",
       {{"epochs", grid.epochs},
        {"num_patterns", grid.num_patterns},
        {"batch_size", grid.batch_sizes},
        {"budget", budget},
        {"jobs", jobs}}},
      {"seed", seed},
  };
}

}  // namespace babylab
