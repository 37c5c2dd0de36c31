#pragma once

#include <string>
#include <vector>

namespace babylab {

// An acceptable sentence, its unacceptable counterpart, and the task they test.
struct MinimalPair {
  std::string good;
  std::string bad;
  std::string task;

  friend bool operator==(const MinimalPair&, const MinimalPair&) = default;
};

// JSON-lines, one {"good", "bad", "task"} object per line. Rejects pairs with
// good == bad or an empty task.
std::vector<MinimalPair> read_suite(const std::string& path);
void write_suite(const std::string& path, const std::vector<MinimalPair>& pairs);

// Hash over the canonical serialization; independent of file whitespace.
std::string suite_hash(const std::vector<MinimalPair>& pairs);

}  // namespace babylab
