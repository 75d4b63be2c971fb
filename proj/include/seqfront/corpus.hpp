#pragma once

#include "seqfront/acoustics.hpp"
#include "seqfront/common.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqfront {

// phone..pros_boundary are the pronunciation taxonomy; character tags text
// vocabulary entries; special tags the reserved PAD/BOS/EOS rows.
enum class TokenKind { phone, stress, syl_boundary, word_sep, pros_boundary, character, special };

std::string to_string(TokenKind k);
TokenKind token_kind_from_string(const std::string& s);

struct PronToken {
  TokenKind kind = TokenKind::phone;
  std::string surface;

  bool operator==(const PronToken&) const = default;
};

inline const std::string kWordSep = "<w>";
inline const std::string kSylBoundary = "-";
inline const std::string kProsBoundary = "_B";

struct PronSequence {
  std::vector<PronToken> tokens;

  bool operator==(const PronSequence&) const = default;
  size_t size() const { return tokens.size(); }
  std::string format() const;  // space-joined surfaces
  int count_kind(TokenKind k) const;
};

// Token/char id table. Ids 0..2 are reserved; every other id is assigned in
// insertion order. The kind tag column is the registered token taxonomy.
struct Vocab {
  static constexpr int pad_id = 0;
  static constexpr int bos_id = 1;
  static constexpr int eos_id = 2;

  std::vector<std::string> surfaces;
  std::vector<TokenKind> kinds;
  std::unordered_map<std::string, int> index;

  static Vocab with_specials();
  int add(const std::string& surface, TokenKind kind);  // idempotent for same (surface, kind)
  int id(const std::string& surface) const;             // unknown -> InvalidInputError
  bool contains(const std::string& surface) const { return index.count(surface) > 0; }
  int size() const { return static_cast<int>(surfaces.size()); }
  TokenKind kind_of(int id) const;
  uint64_t hash() const;

  PronToken token(const std::string& surface) const;
  PronSequence parse(const std::string& line) const;  // whitespace-separated surfaces

  void save(const std::string& path) const;  // token TAB kind, one per line
  static Vocab load(const std::string& path);
};

struct TextSequence {
  std::string raw;
  std::vector<std::string> words;  // whitespace split
  std::vector<int> chars;          // filled against a char vocab

  static TextSequence from_raw(const std::string& raw);
  void materialize_ids(const Vocab& char_vocab);  // unknown char -> InvalidInputError
  size_t length() const { return raw.size(); }
};

// Registers every character of raw (one-byte tokens, kind character).
void register_chars(Vocab& v, const std::string& raw);

struct Lexicon {
  std::map<std::string, PronSequence> entries;  // normalized word -> word-level pron

  static std::string normalize(const std::string& word);  // ASCII uppercase, keep apostrophes
  void add(const std::string& word, PronSequence pron);
  const PronSequence* find(const std::string& word) const;
  size_t size() const { return entries.size(); }

  void save(const std::string& path) const;  // word TAB space-joined tokens
  static Lexicon load(const std::string& path, const Vocab& taxonomy);
};

enum class WordCategory { main_covered, extra_exclusive, oov };

std::string to_string(WordCategory c);

WordCategory classify_word(const std::string& word, const std::set<std::string>& bs_vocab,
                           const std::set<std::string>& ts_vocab);

enum class DatasetKind { BS, TS, pseudo_TS };

std::string to_string(DatasetKind k);

struct Utterance {
  TextSequence text;
  std::optional<PronSequence> pron;
  bool pron_is_pseudo = false;
  std::optional<AcousticSequence> features;
};

struct Dataset {
  DatasetKind kind = DatasetKind::BS;
  std::vector<Utterance> samples;
  std::set<std::string> coverage_vocab;  // normalized word types present

  void validate() const;  // kind-specific field invariants
  size_t size() const { return samples.size(); }
};

// Keeps only sentences fully covered by the lexicon; targets are word-level
// entries joined with word_sep. Zero retained sentences -> InvalidInputError.
Dataset build_bootstrap_dataset(const std::vector<std::string>& sentences,
                                const Lexicon& lexicon);

// plain line-per-record files
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace seqfront
