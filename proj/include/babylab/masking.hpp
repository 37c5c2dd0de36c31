#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "babylab/corpus.hpp"
#include "babylab/tokenizer.hpp"

namespace babylab {

inline constexpr TokenId kIgnoreLabel = -100;
inline constexpr double kDefaultMaskProb = 0.15;

// Strictly increasing token indices into Sentence::tokens (BOS/EOS excluded).
struct MaskPattern {
  std::vector<std::uint32_t> positions;

  friend bool operator==(const MaskPattern&, const MaskPattern&) = default;
};

struct MaskedExample {
  std::vector<TokenId> input_ids;
  std::vector<TokenId> labels;  // kIgnoreLabel except where input_ids holds kMask
};

// Each position is masked independently with probability mask_prob; an empty
// draw masks one uniformly chosen position instead. Duplicate patterns are
// redrawn a bounded number of times and then accepted.
std::vector<MaskPattern> generate_patterns(std::size_t sentence_len, std::size_t num_patterns,
                                           double mask_prob, std::uint64_t seed);

// [BOS, tokens..., EOS, PAD...] with every pattern position replaced by MASK.
MaskedExample apply_pattern(const Sentence& sentence, const MaskPattern& pattern,
                            std::size_t pad_to);

struct ExampleRef {
  std::uint32_t sentence = 0;
  std::uint32_t pattern = 0;

  friend bool operator==(const ExampleRef&, const ExampleRef&) = default;
};

// The augmented training set: every sentence under its own fixed list of
// mask patterns. Patterns depend only on (seed, sentence index), so every
// epoch revisits the same examples in a freshly shuffled order.
class AugmentedDataset {
 public:
  AugmentedDataset(std::span<const Sentence> sentences, std::size_t num_patterns,
                   double mask_prob, std::uint64_t seed);

  std::size_t size() const noexcept { return sentences_.size() * num_patterns_; }
  std::size_t num_patterns() const noexcept { return num_patterns_; }
  const std::vector<MaskPattern>& patterns(std::size_t sentence) const {
    return patterns_[sentence];
  }
  const Sentence& sentence(std::size_t index) const { return sentences_[index]; }

  std::vector<ExampleRef> epoch_order(std::size_t epoch_index) const;

  MaskedExample example(ExampleRef ref, std::size_t pad_to) const;

 private:
  std::span<const Sentence> sentences_;
  std::size_t num_patterns_;
  std::uint64_t seed_;
  std::vector<std::vector<MaskPattern>> patterns_;
};

// Materializes one epoch in order, each example padded to its own length.
std::vector<MaskedExample> build_epoch(std::span<const Sentence> sentences,
                                       std::size_t num_patterns, double mask_prob,
                                       std::uint64_t seed, std::size_t epoch_index);

}  // namespace babylab
