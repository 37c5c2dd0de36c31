#include "babylab/toy_grammar.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <span>

#include "babylab/error.hpp"
#include "babylab/random.hpp"

namespace babylab {

namespace {

enum class Number { singular, plural };

Number flip(Number n) { return n == Number::singular ? Number::plural : Number::singular; }

struct Inflected {
  std::string_view singular;
  std::string_view plural;
  std::string_view form(Number n) const { return n == Number::singular ? singular : plural; }
};

// Determiners marked for number; "the" is compatible with both.
constexpr std::array<Inflected, 2> kMarkedDets = {{{"this", "these"}, {"that", "those"}}};
constexpr std::string_view kDefiniteDet = "the";
constexpr std::string_view kIndefiniteDet = "a";

constexpr std::array<Inflected, 20> kNouns = {{
    {"cat", "cats"},         {"dog", "dogs"},         {"bird", "birds"},
    {"boy", "boys"},         {"girl", "girls"},       {"teacher", "teachers"},
    {"farmer", "farmers"},   {"horse", "horses"},     {"child", "children"},
    {"man", "men"},          {"woman", "women"},      {"fox", "foxes"},
    {"baby", "babies"},      {"student", "students"}, {"doctor", "doctors"},
    {"rabbit", "rabbits"},   {"king", "kings"},       {"pilot", "pilots"},
    {"mouse", "mice"},       {"goose", "geese"},
}};

// Verb forms: singular = third person singular, plural = base form.
constexpr std::array<Inflected, 12> kIntransitive = {{
    {"sleeps", "sleep"}, {"runs", "run"},     {"sings", "sing"},     {"jumps", "jump"},
    {"laughs", "laugh"}, {"waits", "wait"},   {"smiles", "smile"},   {"cries", "cry"},
    {"swims", "swim"},   {"falls", "fall"},   {"dances", "dance"},   {"talks", "talk"},
}};

constexpr std::array<Inflected, 10> kTransitive = {{
    {"sees", "see"},     {"likes", "like"},     {"chases", "chase"}, {"finds", "find"},
    {"helps", "help"},   {"watches", "watch"},  {"knows", "know"},   {"follows", "follow"},
    {"calls", "call"},   {"visits", "visit"},
}};

constexpr std::array<std::string_view, 10> kTrainAdjectives = {
    "big", "small", "happy", "lazy", "young", "red", "tall", "quiet", "funny", "brown"};
constexpr std::array<std::string_view, 4> kHeldOutAdjectives = {"brave", "sleepy", "clever",
                                                                "tiny"};
constexpr std::array<std::string_view, 3> kPrepositions = {"near", "behind", "with"};
constexpr std::array<std::string_view, 4> kAdverbs = {"today", "again", "now", "outside"};

constexpr double kAdjectiveProb = 0.3;
constexpr double kSuiteAdjectiveProb = 0.5;
constexpr double kPrepPhraseProb = 0.15;
constexpr double kTransitiveProb = 0.5;
constexpr double kAdverbProb = 0.3;

template <typename T, std::size_t N>
const T& pick(Rng& rng, const std::array<T, N>& items) {
  return items[rng.below(N)];
}

struct NounPhrase {
  std::vector<std::string> words;
  std::size_t det_index = 0;  // index of the determiner within `words`
  Number number = Number::singular;
};

struct Generator {
  Rng& rng;
  std::span<const std::string_view> adjectives;
  double adjective_prob;

  std::string determiner(Number n, bool marked_only) {
    const std::uint64_t choices = marked_only ? 2 : (n == Number::singular ? 4 : 3);
    const std::uint64_t k = rng.below(choices);
    if (k < 2) return std::string(kMarkedDets[k].form(n));
    if (k == 2) return std::string(kDefiniteDet);
    return std::string(kIndefiniteDet);
  }

  NounPhrase noun_phrase(Number n, bool allow_pp, bool marked_det) {
    NounPhrase np;
    np.number = n;
    np.det_index = 0;
    np.words.push_back(determiner(n, marked_det));
    if (rng.bernoulli(adjective_prob)) {
      np.words.emplace_back(adjectives[rng.below(adjectives.size())]);
    }
    np.words.emplace_back(pick(rng, kNouns).form(n));
    if (allow_pp && rng.bernoulli(kPrepPhraseProb)) {
      np.words.emplace_back(pick(rng, kPrepositions));
      const Number inner = rng.bernoulli(0.5) ? Number::singular : Number::plural;
      auto pp = noun_phrase(inner, false, false);
      np.words.insert(np.words.end(), pp.words.begin(), pp.words.end());
    }
    return np;
  }
};

struct Clause {
  std::vector<std::string> words;
  std::size_t subject_det = 0;
  std::size_t verb = 0;
  std::size_t object_det = 0;  // valid only when `object_number` is set
  bool transitive = false;
  Number subject_number = Number::singular;
  Number object_number = Number::singular;
  const Inflected* verb_forms = nullptr;
  bool subject_marked = false;
  bool object_marked = false;
};

Clause clause(Generator& g, Number subject, bool marked_subject_det, bool marked_object_det) {
  Clause c;
  auto np = g.noun_phrase(subject, true, marked_subject_det);
  c.subject_number = subject;
  c.subject_det = 0;
  c.subject_marked = marked_subject_det;
  c.words = np.words;
  c.verb = c.words.size();
  c.transitive = g.rng.bernoulli(kTransitiveProb);
  c.verb_forms = c.transitive ? &pick(g.rng, kTransitive) : &pick(g.rng, kIntransitive);
  c.words.emplace_back(c.verb_forms->form(subject));
  if (c.transitive) {
    c.object_number = g.rng.bernoulli(0.5) ? Number::singular : Number::plural;
    c.object_marked = marked_object_det;
    auto obj = g.noun_phrase(c.object_number, true, marked_object_det);
    c.object_det = c.words.size();
    c.words.insert(c.words.end(), obj.words.begin(), obj.words.end());
  }
  if (g.rng.bernoulli(kAdverbProb)) c.words.emplace_back(pick(g.rng, kAdverbs));
  c.words.emplace_back(".");
  return c;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string flip_determiner(const std::string& det) {
  for (const auto& d : kMarkedDets) {
    if (det == d.singular) return std::string(d.plural);
    if (det == d.plural) return std::string(d.singular);
  }
  throw Error("determiner '" + det + "' is not marked for number");
}

// --- recognizer -----------------------------------------------------------

template <std::size_t N>
bool find_inflected(const std::array<Inflected, N>& items, std::string_view w, Number& n) {
  for (const auto& item : items) {
    if (w == item.singular) {
      n = Number::singular;
      return true;
    }
    if (w == item.plural) {
      n = Number::plural;
      return true;
    }
  }
  return false;
}

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& items, std::string_view w) {
  return std::find(items.begin(), items.end(), w) != items.end();
}

struct Parser {
  std::vector<std::string_view> words;
  std::size_t pos = 0;

  bool at_end() const { return pos >= words.size(); }
  std::string_view peek() const { return at_end() ? std::string_view{} : words[pos]; }

  // Returns false if the noun phrase is malformed or the determiner disagrees.
  bool noun_phrase(bool allow_pp, Number& number) {
    if (at_end()) return false;
    const std::string_view det = words[pos++];
    bool det_sing = false, det_plur = false;
    if (det == kDefiniteDet) {
      det_sing = det_plur = true;
    } else if (det == kIndefiniteDet) {
      det_sing = true;
    } else {
      Number dn;
      std::array<Inflected, 2> dets = kMarkedDets;
      if (!find_inflected(dets, det, dn)) return false;
      (dn == Number::singular ? det_sing : det_plur) = true;
    }
    if (contains(kTrainAdjectives, peek()) || contains(kHeldOutAdjectives, peek())) ++pos;
    if (at_end() || !find_inflected(kNouns, words[pos], number)) return false;
    ++pos;
    if ((number == Number::singular && !det_sing) || (number == Number::plural && !det_plur)) {
      return false;
    }
    if (allow_pp && contains(kPrepositions, peek())) {
      ++pos;
      Number inner;
      if (!noun_phrase(false, inner)) return false;
    }
    return true;
  }
};

}  // namespace

bool parses_toy_grammar(std::string_view sentence) {
  Parser p;
  std::size_t i = 0;
  while (i <= sentence.size()) {
    const std::size_t j = std::min(sentence.find(' ', i), sentence.size());
    if (j == i) return false;  // empty word: leading/trailing/double space
    p.words.push_back(sentence.substr(i, j - i));
    i = j + 1;
  }
  Number subject;
  if (!p.noun_phrase(true, subject)) return false;
  if (p.at_end()) return false;
  Number verb;
  const std::string_view v = p.words[p.pos++];
  if (find_inflected(kTransitive, v, verb)) {
    Number object;
    if (!p.noun_phrase(true, object)) return false;
  } else if (!find_inflected(kIntransitive, v, verb)) {
    return false;
  }
  if (verb != subject) return false;
  if (contains(kAdverbs, p.peek())) ++p.pos;
  return p.pos + 1 == p.words.size() && p.words[p.pos] == ".";
}

ToyGrammarData generate_toy_grammar(std::size_t num_sentences, std::uint64_t seed,
                                    std::size_t num_pairs) {
  if (num_sentences == 0) throw Error("num_sentences must be at least 1");
  ToyGrammarData data;

  Rng corpus_rng(derive_seed(seed, "toy-corpus"));
  Generator train{corpus_rng, kTrainAdjectives, kAdjectiveProb};
  data.sentences.reserve(num_sentences);
  for (std::size_t i = 0; i < num_sentences; ++i) {
    const Number n = corpus_rng.bernoulli(0.5) ? Number::singular : Number::plural;
    data.sentences.push_back(join(clause(train, n, false, false).words));
  }

  // Pairs alternate task and, within each task, the number of the word that
  // carries the agreement, so a lexical preference for either form scores
  // chance on average.
  Rng suite_rng(derive_seed(seed, "toy-suite"));
  Generator held_out{suite_rng, kHeldOutAdjectives, kSuiteAdjectiveProb};
  data.pairs.reserve(num_pairs);
  for (std::size_t i = 0; i < num_pairs; ++i) {
    const bool sv_task = (i % 2) == 1;
    const Number n = ((i / 2) % 2) == 0 ? Number::singular : Number::plural;
    MinimalPair pair;
    if (sv_task) {
      Clause c = clause(held_out, n, false, false);
      pair.good = join(c.words);
      c.words[c.verb] = std::string(c.verb_forms->form(flip(n)));
      pair.bad = join(c.words);
      pair.task = std::string(kTaskSubjectVerb);
    } else {
      // Flip the determiner of the subject, or of the object when there is one
      // and a coin says so. Only this/that/these/those are used here.
      Clause c = clause(held_out, n, true, true);
      pair.good = join(c.words);
      const bool use_object = c.transitive && held_out.rng.bernoulli(0.5);
      const std::size_t det = use_object ? c.object_det : c.subject_det;
      c.words[det] = flip_determiner(c.words[det]);
      pair.bad = join(c.words);
      pair.task = std::string(kTaskDeterminerNoun);
    }
    data.pairs.push_back(std::move(pair));
  }
  return data;
}

void write_toy_grammar(const ToyGrammarData& data, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto corpus_path = (std::filesystem::path(out_dir) / "corpus.txt").string();
  std::ofstream out(corpus_path, std::ios::binary);
  if (!out) throw Error("cannot write " + corpus_path);
  for (const auto& s : data.sentences) out << s << '\n';
  if (!out) throw Error("cannot write " + corpus_path);
  write_suite((std::filesystem::path(out_dir) / "suite.jsonl").string(), data.pairs);
}

}  // namespace babylab
