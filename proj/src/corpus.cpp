#include "babylab/corpus.hpp"

#include <fstream>

#include "babylab/error.hpp"

namespace babylab {

namespace {

void append_sentence(Corpus& corpus, std::string text, std::size_t line, const Vocabulary& vocab,
                     std::size_t max_context) {
  Sentence s;
  s.tokens = vocab.encode(text);
  s.text = std::move(text);
  s.source_line = line;
  const std::size_t limit = max_context - 2;
  if (s.tokens.size() > limit) {
    s.tokens.resize(limit);
    ++corpus.stats.truncated;
  }
  corpus.stats.num_tokens += s.tokens.size();
  ++corpus.stats.num_sentences;
  corpus.sentences.push_back(std::move(s));
}

void check_context(std::size_t max_context) {
  if (max_context < 3) throw Error("max_context must be at least 3 (BOS, EOS and one token)");
}

}  // namespace

std::vector<std::pair<std::size_t, std::string>> read_sentence_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read corpus " + path);
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.emplace_back(number, std::move(line));
  }
  if (in.bad()) throw Error("error while reading corpus " + path);
  return lines;
}

Corpus load_corpus(const std::string& path, const Vocabulary& vocab, std::size_t max_context) {
  check_context(max_context);
  auto lines = read_sentence_lines(path);
  if (lines.empty()) throw Error("corpus " + path + " has no non-empty lines");
  Corpus corpus;
  corpus.sentences.reserve(lines.size());
  for (auto& [number, text] : lines) {
    append_sentence(corpus, std::move(text), number, vocab, max_context);
  }
  return corpus;
}

Corpus make_corpus(std::span<const std::string> lines, const Vocabulary& vocab,
                   std::size_t max_context) {
  check_context(max_context);
  Corpus corpus;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    append_sentence(corpus, lines[i], i + 1, vocab, max_context);
  }
  if (corpus.sentences.empty()) throw Error("corpus has no non-empty lines");
  return corpus;
}

}  // namespace babylab
