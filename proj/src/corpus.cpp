#include "seqfront/corpus.hpp"

#include "seqfront/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace seqfront {

std::string to_string(TokenKind k) {
  switch (k) {
    case TokenKind::phone: return "phone";
    case TokenKind::stress: return "stress";
    case TokenKind::syl_boundary: return "syl_boundary";
    case TokenKind::word_sep: return "word_sep";
    case TokenKind::pros_boundary: return "pros_boundary";
    case TokenKind::character: return "character";
    case TokenKind::special: return "special";
  }
  throw Error("unreachable token kind");
}

TokenKind token_kind_from_string(const std::string& s) {
  if (s == "phone") return TokenKind::phone;
  if (s == "stress") return TokenKind::stress;
  if (s == "syl_boundary") return TokenKind::syl_boundary;
  if (s == "word_sep") return TokenKind::word_sep;
  if (s == "pros_boundary") return TokenKind::pros_boundary;
  if (s == "character") return TokenKind::character;
  if (s == "special") return TokenKind::special;
  throw InvalidInputError("unknown token kind '" + s + "'");
}

std::string PronSequence::format() const {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i].surface;
  }
  return out;
}

int PronSequence::count_kind(TokenKind k) const {
  int n = 0;
  for (const auto& t : tokens) n += t.kind == k;
  return n;
}

Vocab Vocab::with_specials() {
  Vocab v;
  v.add("<pad>", TokenKind::special);
  v.add("<bos>", TokenKind::special);
  v.add("<eos>", TokenKind::special);
  return v;
}

int Vocab::add(const std::string& surface, TokenKind kind) {
  require(!surface.empty(), "vocab: empty surface");
  auto it = index.find(surface);
  if (it != index.end()) {
    require(kinds[it->second] == kind,
            "vocab: token '" + surface + "' re-registered with a different kind");
    return it->second;
  }
  int id = size();
  surfaces.push_back(surface);
  kinds.push_back(kind);
  index.emplace(surface, id);
  return id;
}

int Vocab::id(const std::string& surface) const {
  auto it = index.find(surface);
  require(it != index.end(), "token '" + surface + "' not in vocabulary");
  return it->second;
}

TokenKind Vocab::kind_of(int id) const {
  require(id >= 0 && id < size(), "vocab id out of range");
  return kinds[id];
}

uint64_t Vocab::hash() const {
  std::string all;
  for (int i = 0; i < size(); ++i) {
    all += surfaces[i];
    all += '\t';
    all += to_string(kinds[i]);
    all += '\n';
  }
  return fnv1a64(all.data(), all.size());
}

PronToken Vocab::token(const std::string& surface) const {
  return PronToken{kind_of(id(surface)), surface};
}

PronSequence Vocab::parse(const std::string& line) const {
  PronSequence p;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) p.tokens.push_back(token(tok));
  return p;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  require(bool(out), "cannot write vocab file '" + path + "'");
  for (int i = 0; i < size(); ++i) out << surfaces[i] << '\t' << to_string(kinds[i]) << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), "cannot open vocab file '" + path + "'");
  Vocab v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    require(tab != std::string::npos,
            "vocab file '" + path + "' line " + std::to_string(lineno) + ": missing kind tag");
    v.add(line.substr(0, tab), token_kind_from_string(line.substr(tab + 1)));
  }
  require(v.size() >= 3, "vocab file '" + path + "' lacks the reserved special rows");
  require(v.surfaces[0] == "<pad>" && v.surfaces[1] == "<bos>" && v.surfaces[2] == "<eos>",
          "vocab file '" + path + "' must start with <pad>, <bos>, <eos>");
  return v;
}

TextSequence TextSequence::from_raw(const std::string& raw) {
  require(!raw.empty(), "empty text sequence");
  TextSequence t;
  t.raw = raw;
  std::istringstream ss(raw);
  std::string w;
  while (ss >> w) t.words.push_back(w);
  require(!t.words.empty(), "text sequence has no words");
  return t;
}

void TextSequence::materialize_ids(const Vocab& char_vocab) {
  chars.clear();
  chars.reserve(raw.size());
  for (char c : raw) chars.push_back(char_vocab.id(std::string(1, c)));
}

void register_chars(Vocab& v, const std::string& raw) {
  for (char c : raw) v.add(std::string(1, c), TokenKind::character);
}

std::string Lexicon::normalize(const std::string& word) {
  std::string out;
  out.reserve(word.size());
  for (char c : word) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void Lexicon::add(const std::string& word, PronSequence pron) {
  require(!word.empty(), "lexicon: empty word");
  require(!pron.tokens.empty(), "lexicon: empty pronunciation for '" + word + "'");
  require(pron.count_kind(TokenKind::word_sep) == 0,
          "lexicon: entry for '" + word + "' contains a word separator");
  std::string key = normalize(word);
  auto it = entries.find(key);
  if (it != entries.end()) {
    require(it->second == pron, "lexicon: conflicting pronunciations for '" + key + "'");
    return;
  }
  entries.emplace(std::move(key), std::move(pron));
}

const PronSequence* Lexicon::find(const std::string& word) const {
  auto it = entries.find(normalize(word));
  return it == entries.end() ? nullptr : &it->second;
}

void Lexicon::save(const std::string& path) const {
  std::ofstream out(path);
  require(bool(out), "cannot write lexicon file '" + path + "'");
  for (const auto& [word, pron] : entries) out << word << '\t' << pron.format() << '\n';
}

Lexicon Lexicon::load(const std::string& path, const Vocab& taxonomy) {
  std::ifstream in(path);
  require(bool(in), "cannot open lexicon file '" + path + "'");
  Lexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    require(tab != std::string::npos,
            "lexicon file '" + path + "' line " + std::to_string(lineno) + ": missing TAB");
    lex.add(line.substr(0, tab), taxonomy.parse(line.substr(tab + 1)));
  }
  require(!lex.entries.empty(), "lexicon file '" + path + "' is empty");
  return lex;
}

std::string to_string(WordCategory c) {
  switch (c) {
    case WordCategory::main_covered: return "main_covered";
    case WordCategory::extra_exclusive: return "extra_exclusive";
    case WordCategory::oov: return "oov";
  }
  throw Error("unreachable word category");
}

WordCategory classify_word(const std::string& word, const std::set<std::string>& bs_vocab,
                           const std::set<std::string>& ts_vocab) {
  require(!word.empty(), "classify_word: empty word");
  std::string key = Lexicon::normalize(word);
  if (bs_vocab.count(key)) return WordCategory::main_covered;
  if (ts_vocab.count(key)) return WordCategory::extra_exclusive;
  return WordCategory::oov;
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::BS: return "BS";
    case DatasetKind::TS: return "TS";
    case DatasetKind::pseudo_TS: return "pseudo_TS";
  }
  throw Error("unreachable dataset kind");
}

void Dataset::validate() const {
  for (size_t i = 0; i < samples.size(); ++i) {
    const Utterance& u = samples[i];
    const std::string at = " (sample " + std::to_string(i) + ")";
    switch (kind) {
      case DatasetKind::BS:
        require(u.pron.has_value() && !u.features.has_value(),
                "BS sample must have a pronunciation and no features" + at);
        require(!u.pron_is_pseudo, "BS pronunciations are references, not pseudo" + at);
        break;
      case DatasetKind::TS:
        require(!u.pron.has_value() && u.features.has_value(),
                "TS sample must have features and no pronunciation" + at);
        break;
      case DatasetKind::pseudo_TS:
        require(u.pron.has_value() && u.features.has_value() && u.pron_is_pseudo,
                "pseudo_TS sample must have features and a pseudo pronunciation" + at);
        break;
    }
  }
}

Dataset build_bootstrap_dataset(const std::vector<std::string>& sentences,
                                const Lexicon& lexicon) {
  require(!lexicon.entries.empty(), "build_bootstrap_dataset: empty lexicon");
  Dataset d;
  d.kind = DatasetKind::BS;
  for (const std::string& s : sentences) {
    if (s.empty()) continue;
    TextSequence text = TextSequence::from_raw(s);
    PronSequence target;
    bool covered = true;
    for (size_t w = 0; w < text.words.size(); ++w) {
      const PronSequence* pron = lexicon.find(text.words[w]);
      if (!pron) {
        covered = false;
        break;
      }
      if (w) target.tokens.push_back(PronToken{TokenKind::word_sep, kWordSep});
      target.tokens.insert(target.tokens.end(), pron->tokens.begin(), pron->tokens.end());
    }
    if (!covered) continue;
    Utterance u;
    u.text = std::move(text);
    u.pron = std::move(target);
    for (const std::string& w : u.text.words) d.coverage_vocab.insert(Lexicon::normalize(w));
    d.samples.push_back(std::move(u));
  }
  require(!d.samples.empty(), "build_bootstrap_dataset: no sentence is fully covered");
  return d;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), "cannot open file '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  require(bool(out), "cannot write file '" + path + "'");
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace seqfront
