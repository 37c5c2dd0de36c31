#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace babylab {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kMask = 2;
inline constexpr TokenId kBos = 3;
inline constexpr TokenId kEos = 4;
inline constexpr TokenId kNumSpecial = 5;

inline constexpr std::array<std::string_view, kNumSpecial> kSpecialTokens = {
    "<pad>", "<unk>", "<mask>", "<s>", "</s>"};

inline constexpr std::size_t kDefaultVocabSize = 8192;

// Byte-level BPE vocabulary. Ids 0-4 are the special tokens, followed by the
// byte alphabet seen in training (ascending byte order), followed by merge
// outputs in the order they were learned.
class Vocabulary {
 public:
  using Merge = std::pair<std::string, std::string>;

  Vocabulary() = default;

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<Merge>& merges() const noexcept { return merges_; }
  const std::string& token(TokenId id) const;

  // Returns kUnk when the string is not a token.
  TokenId id_of(std::string_view token) const;
  bool contains(std::string_view token) const;

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);
  std::string serialize() const;
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.merges_ == b.merges_;
  }

 private:
  friend class BpeTrainer;

  TokenId add_token(std::string token);
  void add_merge(TokenId left, TokenId right);
  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const;

  static std::uint64_t pair_key(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  std::vector<std::string> tokens_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  // (left id, right id) -> (merge rank, result id)
  std::unordered_map<std::uint64_t, std::pair<std::size_t, TokenId>> merge_rank_;
  std::array<TokenId, 256> byte_to_id_{};
};

// Trains a byte-level BPE vocabulary of exactly `vocab_size` entries. Merges
// never cross whitespace-delimited chunks (a chunk is one optional leading
// space plus a run of non-space bytes). The most frequent pair is merged
// first; ties go to the lexicographically smallest pair.
Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t vocab_size);

// Size the vocabulary reaches when every possible merge has been applied.
std::size_t bpe_capacity(std::span<const std::string> corpus);

// Splits text into BPE chunks. Concatenating the chunks yields the input.
std::vector<std::string_view> split_chunks(std::string_view text);

}  // namespace babylab
