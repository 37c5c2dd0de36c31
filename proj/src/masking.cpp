#include "babylab/masking.hpp"

#include <algorithm>
#include <numeric>

#include "babylab/error.hpp"
#include "babylab/random.hpp"

namespace babylab {

namespace {

constexpr int kDistinctRetries = 32;

MaskPattern draw_pattern(Rng& rng, std::size_t sentence_len, double mask_prob) {
  MaskPattern p;
  for (std::size_t i = 0; i < sentence_len; ++i) {
    if (rng.bernoulli(mask_prob)) p.positions.push_back(static_cast<std::uint32_t>(i));
  }
  if (p.positions.empty()) {
    p.positions.push_back(static_cast<std::uint32_t>(rng.below(sentence_len)));
  }
  return p;
}

}  // namespace

std::vector<MaskPattern> generate_patterns(std::size_t sentence_len, std::size_t num_patterns,
                                           double mask_prob, std::uint64_t seed) {
  if (sentence_len == 0) throw Error("cannot mask an empty sentence");
  if (num_patterns == 0) throw Error("num_patterns must be at least 1");
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw Error("mask_prob must lie in (0, 1)");
  Rng rng(seed);
  std::vector<MaskPattern> patterns;
  patterns.reserve(num_patterns);
  for (std::size_t k = 0; k < num_patterns; ++k) {
    MaskPattern p = draw_pattern(rng, sentence_len, mask_prob);
    for (int retry = 0; retry < kDistinctRetries &&
                        std::find(patterns.begin(), patterns.end(), p) != patterns.end();
         ++retry) {
      p = draw_pattern(rng, sentence_len, mask_prob);
    }
    patterns.push_back(std::move(p));
  }
  return patterns;
}

MaskedExample apply_pattern(const Sentence& sentence, const MaskPattern& pattern,
                            std::size_t pad_to) {
  const std::size_t n = sentence.tokens.size();
  if (pad_to < n + 2) {
    throw Error("pad_to " + std::to_string(pad_to) + " is smaller than sentence length + 2 (" +
                std::to_string(n + 2) + ")");
  }
  if (pattern.positions.empty()) throw Error("mask pattern is empty");
  MaskedExample ex;
  ex.input_ids.assign(pad_to, kPad);
  ex.labels.assign(pad_to, kIgnoreLabel);
  ex.input_ids[0] = kBos;
  std::copy(sentence.tokens.begin(), sentence.tokens.end(), ex.input_ids.begin() + 1);
  ex.input_ids[n + 1] = kEos;
  for (std::uint32_t pos : pattern.positions) {
    if (pos >= n) {
      throw Error("mask position " + std::to_string(pos) + " outside sentence of length " +
                  std::to_string(n));
    }
    ex.labels[pos + 1] = sentence.tokens[pos];
    ex.input_ids[pos + 1] = kMask;
  }
  return ex;
}

AugmentedDataset::AugmentedDataset(std::span<const Sentence> sentences, std::size_t num_patterns,
                                   double mask_prob, std::uint64_t seed)
    : sentences_(sentences), num_patterns_(num_patterns), seed_(seed) {
  if (num_patterns == 0) throw Error("num_patterns must be at least 1");
  patterns_.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    patterns_.push_back(generate_patterns(sentences[i].tokens.size(), num_patterns, mask_prob,
                                          derive_seed(seed, "patterns", i)));
  }
}

std::vector<ExampleRef> AugmentedDataset::epoch_order(std::size_t epoch_index) const {
  std::vector<ExampleRef> order;
  order.reserve(size());
  for (std::uint32_t s = 0; s < sentences_.size(); ++s) {
    for (std::uint32_t p = 0; p < num_patterns_; ++p) order.push_back({s, p});
  }
  Rng rng(derive_seed(seed_, "shuffle", epoch_index));
  rng.shuffle(std::span<ExampleRef>(order));
  return order;
}

MaskedExample AugmentedDataset::example(ExampleRef ref, std::size_t pad_to) const {
  return apply_pattern(sentences_[ref.sentence], patterns_[ref.sentence][ref.pattern], pad_to);
}

std::vector<MaskedExample> build_epoch(std::span<const Sentence> sentences,
                                       std::size_t num_patterns, double mask_prob,
                                       std::uint64_t seed, std::size_t epoch_index) {
  AugmentedDataset data(sentences, num_patterns, mask_prob, seed);
  std::vector<MaskedExample> out;
  out.reserve(data.size());
  for (const auto& ref : data.epoch_order(epoch_index)) {
    out.push_back(data.example(ref, sentences[ref.sentence].tokens.size() + 2));
  }
  return out;
}

}  // namespace babylab
