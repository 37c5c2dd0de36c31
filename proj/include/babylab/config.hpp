#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "babylab/model.hpp"
#include "babylab/optimizer.hpp"
#include "babylab/sweep.hpp"
#include "babylab/trainer.hpp"

namespace babylab {

// Everything a pretrain or sweep command needs. Precedence, lowest first:
// built-in defaults, the --config file, --set overrides, dedicated flags.
struct RunConfig {
  std::string preset = "xs";
  // Shape fields are only honoured for preset "custom"; 0 means "from preset".
  std::size_t hidden_size = 0;
  std::size_t intermediate_size = 0;
  std::size_t num_heads = 0;
  std::size_t num_layers = 0;
  std::size_t vocab_size = 0;  // 0: taken from the vocabulary file
  std::size_t max_context = kDefaultMaxContext;
  double dropout = kDefaultDropout;

  Hyperparams hyperparams;
  AdamWConfig adamw;

  std::string corpus_path;
  std::string vocab_path;
  std::string suite_path;

  SweepGrid grid;
  std::size_t budget = kDefaultRunBudget;
  std::size_t jobs = 1;

  std::uint64_t seed = 0;

  // Model shape with vocab_size filled in from the loaded vocabulary.
  ModelConfig model_config(std::size_t vocab_size_from_file) const;
  nlohmann::json to_json() const;
};

// Default configuration as a JSON document; defines the set of valid keys.
nlohmann::json default_config_json();

// JSON Schema (draft 2020-12) describing the configuration file.
nlohmann::json config_schema();

// Recursively merges `patch` into `base`. Unknown keys raise an error naming
// the nearest valid dotted key.
void merge_config(nlohmann::json& base, const nlohmann::json& patch);

// Applies one "dotted.key=value" override. The value is parsed as JSON when
// possible and otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig parse_run_config(const nlohmann::json& doc);

// defaults < file (if non-empty) < overrides.
nlohmann::json resolve_config(const std::string& path, const std::vector<std::string>& overrides);

// Closest string in `candidates` by edit distance.
std::string nearest_key(const std::string& key, const std::vector<std::string>& candidates);

std::vector<std::string> config_keys();

}  // namespace babylab
