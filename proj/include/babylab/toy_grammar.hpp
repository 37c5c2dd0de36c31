#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "babylab/suite.hpp"

namespace babylab {

inline constexpr std::string_view kTaskDeterminerNoun = "determiner_noun_agreement";
inline constexpr std::string_view kTaskSubjectVerb = "subject_verb_agreement";

// A small English-like grammar with determiner-noun and subject-verb number
// agreement. Training sentences draw adjectives from one list; suite
// sentences draw them from a disjoint held-out list.
struct ToyGrammarData {
  std::vector<std::string> sentences;
  std::vector<MinimalPair> pairs;
};

inline constexpr std::size_t kDefaultToySuitePairs = 1000;

ToyGrammarData generate_toy_grammar(std::size_t num_sentences, std::uint64_t seed,
                                    std::size_t num_pairs = kDefaultToySuitePairs);

// Writes `corpus.txt` and `suite.jsonl` under `out_dir`.
void write_toy_grammar(const ToyGrammarData& data, const std::string& out_dir);

// Recognizer for the generator grammar, agreement included. Held-out
// adjectives are accepted.
bool parses_toy_grammar(std::string_view sentence);

}  // namespace babylab
