#pragma once

#include "seqfront/acoustics.hpp"
#include "seqfront/config.hpp"
#include "seqfront/corpus.hpp"

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace seqfront::toy {

// Seeded synthetic language with a known ground-truth lexicon.
//
// Graphemes are single uppercase letters. The rule table maps each grapheme
// to a consonant at even phone positions and a vowel at odd ones, so regular
// words read CVCV... and pronunciation depends on position, not just the
// letter. A configurable fraction of word types carries one irregular phone
// substitution that no rule predicts. Syllables are phone pairs; the first
// syllable is stressed ("1"), the rest unstressed ("0"), with "-" between
// syllables.
struct ToyLanguage {
  std::vector<std::string> graphemes;
  std::vector<std::string> consonants;
  std::vector<std::string> vowels;
  std::vector<std::array<int, 2>> rules;  // per grapheme: {consonant index, vowel index}
  std::map<std::string, std::pair<int, std::string>> exceptions;  // word -> (phone pos, surface)
  ProtoTable prototypes;  // per phone: duration + feature block for synthesis
  double frame_rate = 100.0;

  std::vector<std::string> rule_phones(const std::string& word) const;
  PronSequence apply_rules(const std::string& word) const;  // regular pronunciation
  PronSequence pronounce(const std::string& word) const;    // with irregular override
};

PronSequence syllabify(const std::vector<std::string>& phones);

std::pair<Lexicon, ToyLanguage> gen_toy_language(const ToyConfig& cfg, uint64_t seed,
                                                 int proto_dim = 12);

// Deterministic partition of the lexicon's word types into
// main / extra / oov. Fractions must be nonnegative and sum to 1.
std::array<std::vector<std::string>, 3> split_coverage(const Lexicon& lexicon,
                                                       const std::array<double, 3>& fractions,
                                                       uint64_t seed);

struct WeightedWordSet {
  std::vector<std::string> words;
  double weight = 1.0;
};

std::vector<std::string> sample_sentences(const std::vector<WeightedWordSet>& sets, int n,
                                          std::array<int, 2> len_range, uint64_t seed);

// Ground-truth pronunciation of a whole sentence: word entries joined by
// word_sep. Throws if any word is missing from the lexicon.
PronSequence sentence_pron(const Lexicon& lexicon, const std::vector<std::string>& words);

// Waveform oracle for the mel/mfcc feature paths: each phone becomes a
// fixed-frequency tone block lasting its prototype duration in frames.
std::vector<float> toy_waveform(const PronSequence& pron, const ToyLanguage& lang,
                                const FeatureConfig& feat, uint64_t seed);

struct ToyCorpus {
  Lexicon lexicon;  // full ground truth, all word types
  ToyLanguage language;
  Vocab vocab;  // characters + pronunciation taxonomy + specials
  std::vector<std::string> main_words, extra_words, oov_words;
  Dataset bs;    // text + pron, main words only
  Dataset ts;    // text + features, main/extra mixture
  Dataset val;   // text + pron references, same mixture as ts
  Dataset test;  // text + pron references, same mixture as ts
};

// Full desk-scale corpus. Every main type is guaranteed into bs and every
// extra type into ts by appending one-word sentences for missed types.
ToyCorpus build_toy_corpus(const ToyConfig& cfg, const FeatureConfig& feat, uint64_t seed);

}  // namespace seqfront::toy
