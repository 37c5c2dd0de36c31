#include "babylab/suite.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "babylab/error.hpp"
#include "babylab/hash.hpp"

namespace babylab {

namespace {

std::string pair_line(const MinimalPair& p) {
  nlohmann::json obj = {{"good", p.good}, {"bad", p.bad}, {"task", p.task}};
  return obj.dump();
}

}  // namespace

std::vector<MinimalPair> read_suite(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read suite " + path);
  std::vector<MinimalPair> pairs;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(number);
    MinimalPair p;
    try {
      auto obj = nlohmann::json::parse(line);
      p.good = obj.at("good").get<std::string>();
      p.bad = obj.at("bad").get<std::string>();
      p.task = obj.at("task").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed minimal pair at " + where + ": " + e.what());
    }
    if (p.good == p.bad) throw Error("degenerate minimal pair (good == bad) at " + where);
    if (p.task.empty()) throw Error("minimal pair with empty task at " + where);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void write_suite(const std::string& path, const std::vector<MinimalPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write suite " + path);
  for (const auto& p : pairs) out << pair_line(p) << '\n';
  if (!out) throw Error("cannot write suite " + path);
}

std::string suite_hash(const std::vector<MinimalPair>& pairs) {
  std::string all;
  for (const auto& p : pairs) all += pair_line(p) + '\n';
  return hex64(fnv1a64(all));
}

}  // namespace babylab
