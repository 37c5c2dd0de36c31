#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "babylab/error.hpp"
#include "babylab/tokenizer.hpp"
#include "test_util.hpp"

using namespace babylab;

namespace {

// Reference trainer over strings: recount all adjacent pairs each round, take
// the most frequent, ties to the lexicographically smallest (left, right).
struct OracleBpe {
  std::vector<std::string> tokens;
  std::vector<std::pair<std::string, std::string>> merges;
};

std::vector<std::string> oracle_chunks(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' && !cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
    cur += c;
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

OracleBpe oracle_train(const std::vector<std::string>& corpus, std::size_t target) {
  OracleBpe r;
  for (auto s : kSpecialTokens) r.tokens.emplace_back(s);
  std::set<unsigned char> bytes;
  std::map<std::string, std::size_t> chunks;
  for (const auto& s : corpus) {
    for (unsigned char c : s) bytes.insert(c);
    for (const auto& c : oracle_chunks(s)) ++chunks[c];
  }
  for (unsigned char b : bytes) r.tokens.emplace_back(1, static_cast<char>(b));
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  for (const auto& [c, n] : chunks) {
    std::vector<std::string> w;
    for (char ch : c) w.emplace_back(1, ch);
    words.emplace_back(w, n);
  }
  while (r.tokens.size() < target) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& [w, n] : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) counts[{w[i], w[i + 1]}] += n;
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [a, b] = best->first;
    r.merges.emplace_back(a, b);
    if (std::find(r.tokens.begin(), r.tokens.end(), a + b) == r.tokens.end()) {
      r.tokens.push_back(a + b);
    }
    for (auto& [w, n] : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == a && w[i + 1] == b) {
          next.push_back(a + b);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = std::move(next);
    }
  }
  return r;
}

std::vector<std::string> oracle_encode(const OracleBpe& bpe, const std::string& text) {
  std::vector<std::string> out;
  for (const auto& chunk : oracle_chunks(text)) {
    std::vector<std::string> w;
    for (char c : chunk) w.emplace_back(1, c);
    for (const auto& [a, b] : bpe.merges) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == a && w[i + 1] == b) {
          next.push_back(a + b);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = std::move(next);
    }
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

std::vector<std::string> random_sentences(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> words = {
      "the", "a", "dog", "dogs", "cat", "cats", "sees", "see", "runs", "run", "big",
      "small", "ball", "balls", "happy", "boy", "girl", "is", "are", "this", "these"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(3, 9);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const std::size_t k = len(rng);
    for (std::size_t j = 0; j < k; ++j) s += (j ? " " : "") + words[pick(rng)];
    out.push_back(s + ".");
  }
  return out;
}

std::vector<std::string> as_strings(const Vocabulary& v, const std::vector<TokenId>& ids) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST(Tokenizer, SingleMergeOnRepeatedByte) {
  const std::vector<std::string> corpus = {"aaab"};
  const auto v = train_bpe(corpus, 8);
  ASSERT_EQ(v.size(), 8u);
  ASSERT_EQ(v.merges().size(), 1u);
  EXPECT_EQ(v.merges()[0], (Vocabulary::Merge{"a", "a"}));
  EXPECT_EQ(as_strings(v, v.encode("aaab")), (std::vector<std::string>{"aa", "a", "b"}));
}

TEST(Tokenizer, SingleByteCorpusHasNoMerges) {
  const std::vector<std::string> corpus = {"x"};
  const auto v = train_bpe(corpus, 6);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_TRUE(v.merges().empty());
  EXPECT_EQ(v.token(5), "x");
}

TEST(Tokenizer, SpecialTokensOccupyFirstIds) {
  const auto corpus = random_sentences(50, 3);
  const auto v = train_bpe(corpus, 60);
  for (TokenId i = 0; i < kNumSpecial; ++i) EXPECT_EQ(v.token(i), kSpecialTokens[i]);
  EXPECT_EQ(v.id_of("<mask>"), kMask);
}

TEST(Tokenizer, MatchesReferenceTrainer) {
  const auto corpus = random_sentences(100, 11);
  const std::size_t target = 100;
  const auto oracle = oracle_train(corpus, target);
  ASSERT_EQ(oracle.tokens.size(), target);
  const auto v = train_bpe(corpus, target);
  EXPECT_EQ(v.tokens(), oracle.tokens);
  ASSERT_EQ(v.merges().size(), oracle.merges.size());
  for (std::size_t i = 0; i < v.merges().size(); ++i) EXPECT_EQ(v.merges()[i], oracle.merges[i]);
  for (const auto& s : random_sentences(40, 12)) {
    EXPECT_EQ(as_strings(v, v.encode(s)), oracle_encode(oracle, s)) << s;
  }
}

TEST(Tokenizer, ReachesRequestedSizeAtFullScale) {
  // Needs a corpus rich enough for 512 types.
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> ch('a', 'z'), wl(2, 8), sl(4, 12);
  std::vector<std::string> corpus;
  for (int i = 0; i < 100; ++i) {
    std::string s;
    const int n = sl(rng);
    for (int w = 0; w < n; ++w) {
      if (w) s += ' ';
      const int k = wl(rng);
      for (int c = 0; c < k; ++c) s += static_cast<char>(ch(rng));
    }
    corpus.push_back(s);
  }
  const auto v = train_bpe(corpus, 512);
  EXPECT_EQ(v.size(), 512u);
  const auto oracle = oracle_train(corpus, 512);
  EXPECT_EQ(v.tokens(), oracle.tokens);
}

TEST(Tokenizer, RoundTripsText) {
  const auto corpus = random_sentences(200, 1);
  const auto v = train_bpe(corpus, 100);
  for (const auto& s : random_sentences(200, 2)) EXPECT_EQ(v.decode(v.encode(s)), s);
  // Untrained words built from known bytes still round-trip.
  EXPECT_EQ(v.decode(v.encode("  sad  bees.")), "  sad  bees.");
}

TEST(Tokenizer, UnknownBytesMapToUnk) {
  const std::vector<std::string> corpus = {"ab ab"};
  const auto v = train_bpe(corpus, 8);
  const auto ids = v.encode("abz");
  ASSERT_FALSE(ids.empty());
  EXPECT_EQ(ids.back(), kUnk);
  for (auto id : ids) EXPECT_LT(static_cast<std::size_t>(id), v.size());
}

TEST(Tokenizer, TrainingIsDeterministic) {
  const auto corpus = random_sentences(300, 9);
  EXPECT_EQ(train_bpe(corpus, 100).serialize(), train_bpe(corpus, 100).serialize());
}

TEST(Tokenizer, LargerVocabNeverLengthensEncoding) {
  const auto corpus = random_sentences(300, 4);
  const auto small = train_bpe(corpus, 60);
  const auto large = train_bpe(corpus, 100);
  for (const auto& s : corpus) EXPECT_LE(large.encode(s).size(), small.encode(s).size());
}

TEST(Tokenizer, SerializationRoundTrip) {
  std::vector<std::string> corpus = random_sentences(100, 6);
  corpus.push_back("caf\xc3\xa9 na\xc3\xafve \x01\x7f");
  const auto v = train_bpe(corpus, 90);
  test::TempDir dir("tok");
  v.save(dir.str("vocab.json"));
  const auto back = Vocabulary::load(dir.str("vocab.json"));
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.serialize(), v.serialize());
  EXPECT_EQ(back.encode(corpus.back()), v.encode(corpus.back()));
}

TEST(Tokenizer, RejectsTooSmallVocab) {
  const std::vector<std::string> corpus = {"abc"};
  try {
    train_bpe(corpus, 7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("minimum of 8"), std::string::npos) << e.what();
  }
}

TEST(Tokenizer, RejectsUnreachableVocab) {
  const std::vector<std::string> corpus = {"ab"};
  EXPECT_THROW(train_bpe(corpus, 50), Error);
  EXPECT_EQ(bpe_capacity(corpus), 8u);
  EXPECT_NO_THROW(train_bpe(corpus, 8));
}

TEST(Tokenizer, RejectsEmptyCorpus) {
  EXPECT_THROW(train_bpe(std::vector<std::string>{}, 10), Error);
  EXPECT_THROW(train_bpe(std::vector<std::string>{""}, 10), Error);
}

TEST(Tokenizer, DecodeRejectsOutOfRangeIds) {
  const auto v = train_bpe(std::vector<std::string>{"ab"}, 7);
  const std::vector<TokenId> bad = {7};
  EXPECT_THROW(v.decode(bad), Error);
  const std::vector<TokenId> neg = {-1};
  EXPECT_THROW(v.decode(neg), Error);
}

TEST(Tokenizer, LoadRejectsMalformedFiles) {
  test::TempDir dir("tokbad");
  EXPECT_THROW(Vocabulary::load(dir.str("missing.json")), Error);
  std::ofstream(dir.str("bad.json")) << "{not json";
  EXPECT_THROW(Vocabulary::load(dir.str("bad.json")), Error);
}

TEST(Tokenizer, ChunksKeepLeadingSpace) {
  const auto c = split_chunks("the dog  ran");
  std::vector<std::string> got(c.begin(), c.end());
  EXPECT_EQ(got, (std::vector<std::string>{"the", " dog", " ", " ran"}));
  EXPECT_EQ(oracle_chunks("the dog  ran"), got);
}
