#include "babylab/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "babylab/error.hpp"

namespace babylab {

namespace {

constexpr int kFormatVersion = 1;

bool is_special(std::string_view s) {
  return std::find(kSpecialTokens.begin(), kSpecialTokens.end(), s) != kSpecialTokens.end();
}

// Token strings are raw bytes. In the JSON file each byte is written as the
// code point of the same value, so ASCII stays readable and any byte string
// survives a round trip through UTF-8.
std::string bytes_to_json_text(const std::string& bytes) {
  std::string out;
  out.reserve(bytes.size());
  for (unsigned char c : bytes) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::string json_text_to_bytes(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if ((c == 0xC2 || c == 0xC3) && i + 1 < text.size()) {
      const auto next = static_cast<unsigned char>(text[++i]);
      out.push_back(static_cast<char>(((c & 0x03) << 6) | (next & 0x3F)));
    } else {
      throw Error("vocabulary token contains a code point above U+00FF");
    }
  }
  return out;
}

}  // namespace

std::vector<std::string_view> split_chunks(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    if (text[j] == ' ') ++j;
    while (j < text.size() && text[j] != ' ') ++j;
    chunks.push_back(text.substr(i, j - i));
    i = j;
  }
  return chunks;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.contains(std::string(token));
}

TokenId Vocabulary::add_token(std::string token) {
  if (auto it = token_to_id_.find(token); it != token_to_id_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  if (token.size() == 1 && id >= kNumSpecial) {
    byte_to_id_[static_cast<unsigned char>(token[0])] = id;
  }
  token_to_id_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

void Vocabulary::add_merge(TokenId left, TokenId right) {
  const std::string& a = tokens_[static_cast<std::size_t>(left)];
  const std::string& b = tokens_[static_cast<std::size_t>(right)];
  merges_.emplace_back(a, b);
  const TokenId result = add_token(a + b);
  merge_rank_.emplace(pair_key(left, right), std::make_pair(merges_.size() - 1, result));
}

void Vocabulary::encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
  std::vector<TokenId> symbols;
  symbols.reserve(chunk.size());
  for (unsigned char c : chunk) {
    const TokenId id = byte_to_id_[c];
    symbols.push_back(id == 0 ? kUnk : id);
  }
  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    TokenId best_left = 0, best_right = 0, best_result = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != merge_rank_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_left = symbols[i];
        best_right = symbols[i + 1];
        best_result = it->second.second;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    std::size_t w = 0;
    for (std::size_t r = 0; r < symbols.size(); ++r) {
      if (r + 1 < symbols.size() && symbols[r] == best_left && symbols[r + 1] == best_right) {
        symbols[w++] = best_result;
        ++r;
      } else {
        symbols[w++] = symbols[r];
      }
    }
    symbols.resize(w);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (auto chunk : split_chunks(text)) encode_chunk(chunk, ids);
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string text;
  for (TokenId id : ids) {
    const std::string& t = token(id);
    if (id >= kNumSpecial) text += t;
  }
  return text;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json doc;
  doc["version"] = kFormatVersion;
  doc["specials"] = nlohmann::json::array();
  for (auto s : kSpecialTokens) doc["specials"].push_back(std::string(s));
  doc["merges"] = nlohmann::json::array();
  for (const auto& [a, b] : merges_) {
    doc["merges"].push_back({bytes_to_json_text(a), bytes_to_json_text(b)});
  }
  doc["tokens"] = nlohmann::json::array();
  for (const auto& t : tokens_) doc["tokens"].push_back(bytes_to_json_text(t));
  return doc;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  if (doc.value("version", 0) != kFormatVersion) throw Error("unsupported vocabulary version");
  const auto& specials = doc.at("specials");
  if (specials.size() != kSpecialTokens.size()) throw Error("vocabulary has wrong special tokens");
  for (std::size_t i = 0; i < kSpecialTokens.size(); ++i) {
    if (specials[i].get<std::string>() != kSpecialTokens[i]) {
      throw Error("vocabulary special token " + std::to_string(i) + " must be " +
                  std::string(kSpecialTokens[i]));
    }
  }
  const auto& tokens = doc.at("tokens");
  Vocabulary v;
  std::size_t i = 0;
  for (; i < tokens.size(); ++i) {
    std::string t = json_text_to_bytes(tokens[i].get<std::string>());
    if (i < kSpecialTokens.size()) {
      if (t != kSpecialTokens[i]) throw Error("vocabulary token table does not start with specials");
      v.token_to_id_.emplace(t, static_cast<TokenId>(i));
      v.tokens_.push_back(std::move(t));
      continue;
    }
    if (is_special(t)) throw Error("non-special token equals a special token string");
    if (v.token_to_id_.contains(t)) throw Error("duplicate vocabulary token");
    if (t.size() != 1) break;
    v.add_token(std::move(t));
  }
  for (const auto& m : doc.at("merges")) {
    const std::string a = json_text_to_bytes(m.at(0).get<std::string>());
    const std::string b = json_text_to_bytes(m.at(1).get<std::string>());
    if (!v.contains(a) || !v.contains(b)) throw Error("merge references an unknown token");
    v.add_merge(v.id_of(a), v.id_of(b));
  }
  if (v.tokens_.size() != tokens.size()) throw Error("vocabulary token table disagrees with merges");
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (json_text_to_bytes(tokens[k].get<std::string>()) != v.tokens_[k]) {
      throw Error("vocabulary token table disagrees with merges at id " + std::to_string(k));
    }
  }
  return v;
}

std::string Vocabulary::serialize() const { return to_json().dump(1) + "\n"; }

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << serialize();
  if (!out) throw Error("cannot write " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read vocabulary " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed vocabulary " + path + ": " + e.what());
  }
}

class BpeTrainer {
 public:
  explicit BpeTrainer(std::span<const std::string> corpus) {
    if (corpus.empty()) throw Error("cannot train a tokenizer on an empty corpus");
    std::map<std::string, std::size_t> chunk_counts;
    std::set<unsigned char> alphabet;
    for (const auto& sentence : corpus) {
      for (unsigned char c : sentence) alphabet.insert(c);
      for (auto chunk : split_chunks(sentence)) ++chunk_counts[std::string(chunk)];
    }
    if (alphabet.empty()) throw Error("cannot train a tokenizer on an empty corpus");
    for (auto s : kSpecialTokens) vocab_.add_token(std::string(s));
    for (unsigned char c : alphabet) vocab_.add_token(std::string(1, static_cast<char>(c)));
    for (const auto& [chunk, count] : chunk_counts) {
      Word w;
      w.count = count;
      for (unsigned char c : chunk) w.symbols.push_back(vocab_.byte_to_id_[c]);
      words_.push_back(std::move(w));
    }
  }

  std::size_t alphabet_size() const { return vocab_.size() - kNumSpecial; }

  // Applies one merge; returns false once no pair is left to merge.
  bool step() {
    std::unordered_map<std::uint64_t, std::size_t> counts;
    for (const auto& w : words_) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        counts[Vocabulary::pair_key(w.symbols[i], w.symbols[i + 1])] += w.count;
      }
    }
    bool found = false;
    std::uint64_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [key, count] : counts) {
      const auto a = static_cast<TokenId>(key >> 32);
      const auto b = static_cast<TokenId>(key & 0xffffffffULL);
      if (is_special(vocab_.tokens_[a] + vocab_.tokens_[b])) continue;
      if (!found || count > best_count || (count == best_count && lex_less(key, best))) {
        found = true;
        best = key;
        best_count = count;
      }
    }
    if (!found) return false;
    const auto left = static_cast<TokenId>(best >> 32);
    const auto right = static_cast<TokenId>(best & 0xffffffffULL);
    vocab_.add_merge(left, right);
    const TokenId result = vocab_.merge_rank_.at(best).second;
    for (auto& w : words_) {
      std::size_t out = 0;
      for (std::size_t r = 0; r < w.symbols.size(); ++r) {
        if (r + 1 < w.symbols.size() && w.symbols[r] == left && w.symbols[r + 1] == right) {
          w.symbols[out++] = result;
          ++r;
        } else {
          w.symbols[out++] = w.symbols[r];
        }
      }
      w.symbols.resize(out);
    }
    return true;
  }

  Vocabulary& vocab() { return vocab_; }

 private:
  struct Word {
    std::vector<TokenId> symbols;
    std::size_t count = 0;
  };

  bool lex_less(std::uint64_t x, std::uint64_t y) const {
    const auto& xa = vocab_.tokens_[x >> 32];
    const auto& xb = vocab_.tokens_[x & 0xffffffffULL];
    const auto& ya = vocab_.tokens_[y >> 32];
    const auto& yb = vocab_.tokens_[y & 0xffffffffULL];
    return std::tie(xa, xb) < std::tie(ya, yb);
  }

  Vocabulary vocab_;
  std::vector<Word> words_;
};

Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t vocab_size) {
  BpeTrainer trainer(corpus);
  const std::size_t minimum = kNumSpecial + trainer.alphabet_size();
  if (vocab_size < minimum) {
    throw Error("vocab_size " + std::to_string(vocab_size) + " is below the minimum of " +
                std::to_string(minimum) + " (5 specials + " +
                std::to_string(trainer.alphabet_size()) + " distinct bytes)");
  }
  while (trainer.vocab().size() < vocab_size) {
    if (!trainer.step()) {
      throw Error("vocab_size " + std::to_string(vocab_size) +
                  " exceeds the maximum of " + std::to_string(trainer.vocab().size()) +
                  " reachable on this corpus");
    }
  }
  return std::move(trainer.vocab());
}

std::size_t bpe_capacity(std::span<const std::string> corpus) {
  BpeTrainer trainer(corpus);
  while (trainer.step()) {
  }
  return trainer.vocab().size();
}

}  // namespace babylab
