#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "babylab/model.hpp"
#include "babylab/tokenizer.hpp"

namespace babylab {

// File layout: 8-byte magic "BBLBCKPT", little-endian uint64 header length,
// the JSON header (config, seed, step, tensor table, optional vocabulary),
// then every tensor as little-endian float32 in declaration order.
struct Checkpoint {
  Parameters params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::optional<Vocabulary> vocab;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace babylab
