#pragma once

#include "seqfront/corpus.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace seqfront {

struct EditCounts {
  int distance = 0, sub = 0, del = 0, ins = 0;
};

// Unit-cost Levenshtein with a backtrace, so sub + del + ins = distance.
EditCounts phone_edit_distance(const std::vector<std::string>& ref,
                               const std::vector<std::string>& hyp);

// Phone surfaces of a sequence, every other token kind stripped.
std::vector<std::string> phones_of(const PronSequence& p);

struct WordGroups {
  std::vector<PronSequence> groups;  // word_sep tokens themselves removed
  bool mismatched = false;           // group count differed from expected_words
};

WordGroups segment_words(const PronSequence& p, int expected_words);

// One entry per reference word, in order; hyp_index is absent for reference
// words scored as whole-word deletions. Hypothesis words matched to nothing
// contribute their phones as insertions.
struct AlignedWord {
  int ref_index = 0;
  std::optional<int> hyp_index;
};

struct WordAlignment {
  std::vector<AlignedWord> pairs;
  std::vector<int> unmatched_hyp;
  int total_cost = 0;  // summed phone edits including the unmatched words
};

// Monotone word-level alignment minimizing summed phone edit distance, with
// skip-reference priced as a full deletion and skip-hypothesis as insertions.
WordAlignment align_words(const std::vector<PronSequence>& ref,
                          const std::vector<PronSequence>& hyp);

struct CategoryStats {
  long words = 0, ref_phones = 0, edits = 0, phone_correct = 0, full_correct = 0;

  double per() const;    // 100 * edits / ref_phones
  double waccp() const;  // % of words with zero phone edits
  double wacc() const;   // % of words matching all non-prosodic tokens
};

struct ScoredWord {
  WordCategory category = WordCategory::main_covered;
  int ref_phones = 0;
  int edits = 0;
  bool phone_match = false;
  bool full_match = false;
};

struct EvalReport {
  CategoryStats all;
  std::map<WordCategory, CategoryStats> by_category;  // only categories present
  std::vector<ScoredWord> words;                      // per word token, corpus order
};

struct EvalInput {
  PronSequence ref, hyp;
  std::vector<std::string> words;  // the utterance's words; fixes the ref count
};

// Word-level scoring per category. PER is micro-averaged (pooled edits over
// pooled reference phones); WAccP counts words with zero phone edits; WAcc
// compares phones, stress and syllable boundaries (word_sep and prosodic
// boundaries excluded).
EvalReport score_dataset(const std::vector<EvalInput>& items,
                         const std::set<std::string>& bs_vocab,
                         const std::set<std::string>& ts_vocab);

// Two-sided paired bootstrap over word tokens: resamples the per-word
// outcome differences and inverts the percentile interval. Outcomes must be
// aligned (same word token list for both systems).
double paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                        int n_resamples, uint64_t seed);

// Derangement of the acoustic targets: every sample gets another sample's
// features, the multiset of targets is unchanged. The shuffled-control
// experiment trains on this.
Dataset shuffle_targets(const Dataset& ts, uint64_t seed);

}  // namespace seqfront
