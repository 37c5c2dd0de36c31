#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "babylab/tokenizer.hpp"

namespace babylab {

inline constexpr std::size_t kDefaultMaxContext = 128;

// One training sentence. `tokens` excludes BOS/EOS and holds at most
// max_context - 2 ids.
struct Sentence {
  std::string text;
  std::vector<TokenId> tokens;
  std::size_t source_line = 0;  // 1-based line number in the source file
};

struct CorpusStats {
  std::size_t num_sentences = 0;
  std::size_t num_tokens = 0;
  std::size_t truncated = 0;
};

struct Corpus {
  std::vector<Sentence> sentences;
  CorpusStats stats;
};

// Non-empty lines of a one-sentence-per-line text file, in file order, paired
// with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string>> read_sentence_lines(const std::string& path);

Corpus load_corpus(const std::string& path, const Vocabulary& vocab, std::size_t max_context);

// In-memory variant of load_corpus; line numbers are 1-based positions in `lines`.
Corpus make_corpus(std::span<const std::string> lines, const Vocabulary& vocab,
                   std::size_t max_context);

}  // namespace babylab
