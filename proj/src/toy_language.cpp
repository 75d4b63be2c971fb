#include "seqfront/toy_language.hpp"

#include "seqfront/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace seqfront::toy {

namespace {

const std::vector<std::string> kConsonantPool = {"p", "t", "k", "b", "d", "g", "m",
                                                 "n", "s", "z", "f", "v", "r", "l",
                                                 "w", "j", "h", "c", "q", "x"};
const std::vector<std::string> kVowelPool = {"a",  "e",  "i",  "o",  "u",  "@",  "ai", "ei",
                                             "oi", "uh", "oo", "ii", "ee", "uu", "ao"};

std::string pool_surface(const std::vector<std::string>& pool, int i) {
  const int n = static_cast<int>(pool.size());
  if (i < n) return pool[i];
  return pool[i % n] + std::to_string(i / n + 1);
}

void shuffle_indices(std::vector<int>& idx, std::mt19937_64& g) {
  for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng::below(g, i)]);
}

}  // namespace

std::vector<std::string> ToyLanguage::rule_phones(const std::string& word) const {
  std::vector<std::string> out;
  out.reserve(word.size());
  for (size_t i = 0; i < word.size(); ++i) {
    const char c = word[i];
    require(c >= 'A' && c < 'A' + static_cast<int>(graphemes.size()),
                  "word '" + word + "' uses a grapheme outside the toy alphabet");
    const auto& rule = rules[c - 'A'];
    out.push_back(i % 2 == 0 ? consonants[rule[0]] : vowels[rule[1]]);
  }
  return out;
}

PronSequence syllabify(const std::vector<std::string>& phones) {
  require(!phones.empty(), "cannot syllabify an empty phone sequence");
  PronSequence p;
  for (size_t i = 0; i < phones.size(); i += 2) {
    if (i > 0) p.tokens.push_back({TokenKind::syl_boundary, kSylBoundary});
    p.tokens.push_back({TokenKind::stress, i == 0 ? "1" : "0"});
    p.tokens.push_back({TokenKind::phone, phones[i]});
    if (i + 1 < phones.size()) p.tokens.push_back({TokenKind::phone, phones[i + 1]});
  }
  return p;
}

PronSequence ToyLanguage::apply_rules(const std::string& word) const {
  return syllabify(rule_phones(word));
}

PronSequence ToyLanguage::pronounce(const std::string& word) const {
  std::vector<std::string> ph = rule_phones(word);
  auto it = exceptions.find(word);
  if (it != exceptions.end()) ph[it->second.first] = it->second.second;
  return syllabify(ph);
}

std::pair<Lexicon, ToyLanguage> gen_toy_language(const ToyConfig& cfg, uint64_t seed,
                                                 int proto_dim) {
  cfg.validate();
  require_config(cfg.n_graphemes <= 26, "toy.n_graphemes must be <= 26 (single letters)");
  require_config(proto_dim >= 1, "prototype dimension must be >= 1");

  ToyLanguage lang;
  for (int i = 0; i < cfg.n_graphemes; ++i) lang.graphemes.push_back(std::string(1, 'A' + i));

  const int n_vowels = std::clamp(cfg.n_phones / 3, 1, cfg.n_phones - 1);
  const int n_cons = cfg.n_phones - n_vowels;
  if (cfg.irregular_fraction > 0.0)
    require_config(n_vowels >= 2 && n_cons >= 2,
                   "toy.n_phones too small to form irregular substitutions");
  for (int i = 0; i < n_cons; ++i) lang.consonants.push_back(pool_surface(kConsonantPool, i));
  for (int i = 0; i < n_vowels; ++i) lang.vowels.push_back(pool_surface(kVowelPool, i));

  // Rule table. Consonants are assigned distinct when the inventory allows,
  // so regular words rarely collide.
  auto g_rules = rng::substream(seed, "toy.rules");
  lang.rules.resize(cfg.n_graphemes);
  if (n_cons >= cfg.n_graphemes) {
    std::vector<int> idx(n_cons);
    for (int i = 0; i < n_cons; ++i) idx[i] = i;
    shuffle_indices(idx, g_rules);
    for (int i = 0; i < cfg.n_graphemes; ++i) lang.rules[i][0] = idx[i];
  } else {
    for (int i = 0; i < cfg.n_graphemes; ++i)
      lang.rules[i][0] = static_cast<int>(rng::below(g_rules, n_cons));
  }
  for (int i = 0; i < cfg.n_graphemes; ++i)
    lang.rules[i][1] = static_cast<int>(rng::below(g_rules, n_vowels));

  // Unique word types of uniform random length.
  auto g_words = rng::substream(seed, "toy.words");
  std::set<std::string> seen;
  std::vector<std::string> words;
  const long max_attempts = 200L * cfg.n_word_types + 1000;
  long attempts = 0;
  while (static_cast<int>(words.size()) < cfg.n_word_types) {
    require_config(++attempts <= max_attempts,
                   "toy word space too small for the requested n_word_types");
    const int len = cfg.word_len_range[0] +
                    static_cast<int>(rng::below(
                        g_words, cfg.word_len_range[1] - cfg.word_len_range[0] + 1));
    std::string w;
    for (int i = 0; i < len; ++i)
      w += lang.graphemes[rng::below(g_words, lang.graphemes.size())];
    if (seen.insert(w).second) words.push_back(w);
  }

  // Irregular exceptions: one same-class phone substitution per chosen word.
  auto g_exc = rng::substream(seed, "toy.exceptions");
  const int n_exc = static_cast<int>(std::lround(cfg.irregular_fraction * cfg.n_word_types));
  std::vector<int> order(words.size());
  for (size_t i = 0; i < words.size(); ++i) order[i] = static_cast<int>(i);
  shuffle_indices(order, g_exc);
  for (int e = 0; e < n_exc; ++e) {
    const std::string& w = words[order[e]];
    const int pos = static_cast<int>(rng::below(g_exc, w.size()));
    const std::vector<std::string>& cls = pos % 2 == 0 ? lang.consonants : lang.vowels;
    const std::string current = pos % 2 == 0 ? lang.consonants[lang.rules[w[pos] - 'A'][0]]
                                             : lang.vowels[lang.rules[w[pos] - 'A'][1]];
    std::string repl;
    do {
      repl = cls[rng::below(g_exc, cls.size())];
    } while (repl == current);
    lang.exceptions[w] = {pos, repl};
  }

  // Feature prototypes: unit-norm gaussian directions, seeded durations.
  auto g_proto = rng::substream(seed, "toy.protos");
  auto add_protos = [&](const std::vector<std::string>& names) {
    for (const auto& name : names) {
      PhoneProto proto;
      proto.duration = cfg.phone_duration_range[0] +
                       static_cast<int>(rng::below(g_proto, cfg.phone_duration_range[1] -
                                                                cfg.phone_duration_range[0] + 1));
      Eigen::VectorXd v(proto_dim);
      for (int d = 0; d < proto_dim; ++d) v(d) = rng::gauss(g_proto);
      proto.proto = (v / v.norm()).cast<float>();
      lang.prototypes[name] = std::move(proto);
    }
  };
  add_protos(lang.consonants);
  add_protos(lang.vowels);

  Lexicon lex;
  for (const auto& w : words) lex.add(w, lang.pronounce(w));
  return {std::move(lex), std::move(lang)};
}

std::array<std::vector<std::string>, 3> split_coverage(const Lexicon& lexicon,
                                                       const std::array<double, 3>& fractions,
                                                       uint64_t seed) {
  for (double f : fractions) require_config(f >= 0.0, "coverage fractions must be nonnegative");
  require_config(std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) <= 1e-9,
                 "coverage fractions must sum to 1");

  std::vector<std::string> words;
  words.reserve(lexicon.size());
  for (const auto& [w, _] : lexicon.entries) words.push_back(w);  // map order: sorted

  auto g = rng::substream(seed, "toy.split");
  for (size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng::below(g, i)]);

  const auto n = static_cast<long>(words.size());
  const long n_main = std::lround(fractions[0] * n);
  const long n_extra = std::min(std::lround(fractions[1] * n), n - n_main);
  std::array<std::vector<std::string>, 3> out;
  out[0].assign(words.begin(), words.begin() + n_main);
  out[1].assign(words.begin() + n_main, words.begin() + n_main + n_extra);
  out[2].assign(words.begin() + n_main + n_extra, words.end());
  return out;
}

std::vector<std::string> sample_sentences(const std::vector<WeightedWordSet>& sets, int n,
                                          std::array<int, 2> len_range, uint64_t seed) {
  require_config(n > 0, "sample_sentences requires n > 0");
  require_config(len_range[0] >= 1 && len_range[0] <= len_range[1],
                 "sentence length range must satisfy 1 <= lo <= hi");
  std::vector<const WeightedWordSet*> live;
  double total = 0.0;
  for (const auto& s : sets) {
    require_config(s.weight >= 0.0, "mixing weights must be nonnegative");
    if (!s.words.empty() && s.weight > 0.0) {
      live.push_back(&s);
      total += s.weight;
    }
  }
  require(!live.empty(), "sample_sentences needs at least one nonempty weighted set");

  auto g = rng::substream(seed, "toy.sentences");
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int len =
        len_range[0] + static_cast<int>(rng::below(g, len_range[1] - len_range[0] + 1));
    std::string sent;
    for (int w = 0; w < len; ++w) {
      double r = rng::uniform01(g) * total;
      const WeightedWordSet* pick = live.back();
      for (const auto* s : live) {
        if (r < s->weight) {
          pick = s;
          break;
        }
        r -= s->weight;
      }
      if (w > 0) sent += ' ';
      sent += pick->words[rng::below(g, pick->words.size())];
    }
    out.push_back(std::move(sent));
  }
  return out;
}

PronSequence sentence_pron(const Lexicon& lexicon, const std::vector<std::string>& words) {
  require(!words.empty(), "sentence has no words");
  PronSequence p;
  for (size_t i = 0; i < words.size(); ++i) {
    const PronSequence* entry = lexicon.find(words[i]);
    require(entry != nullptr, "word '" + words[i] + "' missing from lexicon");
    if (i > 0) p.tokens.push_back({TokenKind::word_sep, kWordSep});
    p.tokens.insert(p.tokens.end(), entry->tokens.begin(), entry->tokens.end());
  }
  return p;
}

std::vector<float> toy_waveform(const PronSequence& pron, const ToyLanguage& lang,
                                const FeatureConfig& feat, uint64_t seed) {
  constexpr double kPi = 3.14159265358979323846;
  const int hop = feat.hop_samples();
  auto g = rng::substream(seed, "toy.wave");
  std::vector<float> wave;
  // Phone index -> tone frequency, one step per phone, capped under Nyquist.
  auto tone = [&](const std::string& surface) {
    int idx = 0;
    for (const auto& c : lang.consonants) {
      if (c == surface) break;
      ++idx;
    }
    if (idx == static_cast<int>(lang.consonants.size())) {
      for (const auto& v : lang.vowels) {
        if (v == surface) break;
        ++idx;
      }
    }
    const double f = 400.0 * std::pow(2.0, idx / 8.0);
    return std::min(f, 0.45 * feat.sample_rate);
  };
  for (const auto& tok : pron.tokens) {
    if (tok.kind != TokenKind::phone) continue;
    auto it = lang.prototypes.find(tok.surface);
    require(it != lang.prototypes.end(), "phone '" + tok.surface + "' has no prototype");
    const double f = tone(tok.surface);
    const int n = it->second.duration * hop;
    const size_t start = wave.size();
    for (int i = 0; i < n; ++i)
      wave.push_back(static_cast<float>(
          0.3 * std::sin(2.0 * kPi * f * (start + i) / feat.sample_rate) +
          0.005 * rng::gauss(g)));
  }
  // Window tail so the last frame is complete.
  const size_t need = wave.size() + feat.window_samples() - hop;
  while (wave.size() < need) wave.push_back(0.0f);
  return wave;
}

namespace {

Lexicon sub_lexicon(const Lexicon& lex, const std::vector<std::string>& words) {
  Lexicon out;
  for (const auto& w : words) out.add(w, *lex.find(w));
  return out;
}

// Appends one-word sentences for every type in `need` not yet covered.
void guarantee_coverage(std::vector<std::string>& sentences,
                        const std::vector<std::string>& need) {
  std::set<std::string> covered;
  for (const auto& s : sentences)
    for (const auto& w : TextSequence::from_raw(s).words) covered.insert(w);
  std::vector<std::string> missing;
  for (const auto& w : need)
    if (!covered.count(w)) missing.push_back(w);
  std::sort(missing.begin(), missing.end());
  sentences.insert(sentences.end(), missing.begin(), missing.end());
}

}  // namespace

ToyCorpus build_toy_corpus(const ToyConfig& cfg, const FeatureConfig& feat, uint64_t seed) {
  ToyCorpus c;
  const int proto_dim = feat.kind == FeatureKind::synthetic ? feat.n_channels : 12;
  std::tie(c.lexicon, c.language) = gen_toy_language(cfg, seed, proto_dim);
  c.language.frame_rate = feat.frame_rate();

  auto sets = split_coverage(c.lexicon, cfg.coverage_fractions, rng::derive_seed(seed, "toy.split"));
  c.main_words = std::move(sets[0]);
  c.extra_words = std::move(sets[1]);
  c.oov_words = std::move(sets[2]);

  c.vocab = Vocab::with_specials();
  for (const auto& g : c.language.graphemes) register_chars(c.vocab, g);
  register_chars(c.vocab, " ");
  for (const auto& p : c.language.consonants) c.vocab.add(p, TokenKind::phone);
  for (const auto& p : c.language.vowels) c.vocab.add(p, TokenKind::phone);
  c.vocab.add("1", TokenKind::stress);
  c.vocab.add("0", TokenKind::stress);
  c.vocab.add(kSylBoundary, TokenKind::syl_boundary);
  c.vocab.add(kWordSep, TokenKind::word_sep);
  c.vocab.add(kProsBoundary, TokenKind::pros_boundary);

  const double w = cfg.ts_extra_weight;
  Lexicon main_lex = sub_lexicon(c.lexicon, c.main_words);

  auto bs_sents = sample_sentences({{c.main_words, 1.0}}, cfg.n_bs_sentences,
                                   cfg.sentence_len_range, rng::derive_seed(seed, "toy.bs"));
  guarantee_coverage(bs_sents, c.main_words);
  c.bs = build_bootstrap_dataset(bs_sents, main_lex);

  auto ts_sents =
      sample_sentences({{c.main_words, 1.0 - w}, {c.extra_words, w}}, cfg.n_ts_sentences,
                       cfg.sentence_len_range, rng::derive_seed(seed, "toy.ts"));
  guarantee_coverage(ts_sents, c.extra_words);
  c.ts.kind = DatasetKind::TS;
  for (size_t i = 0; i < ts_sents.size(); ++i) {
    Utterance u;
    u.text = TextSequence::from_raw(ts_sents[i]);
    PronSequence truth = sentence_pron(c.lexicon, u.text.words);
    const uint64_t utt_seed = rng::derive_seed(seed, "toy.feat", i);
    if (feat.kind == FeatureKind::synthetic) {
      u.features = synth_features(truth, c.language.prototypes, cfg.noise_sd, utt_seed,
                                  feat.frame_rate());
    } else {
      std::vector<float> wav = toy_waveform(truth, c.language, feat, utt_seed);
      u.features = feat.kind == FeatureKind::mel ? mel_spectrogram(wav, feat) : mfcc(wav, feat);
    }
    for (const auto& word : u.text.words) c.ts.coverage_vocab.insert(Lexicon::normalize(word));
    c.ts.samples.push_back(std::move(u));
  }

  c.val = build_bootstrap_dataset(
      sample_sentences({{c.main_words, 1.0 - w}, {c.extra_words, w}}, cfg.n_val_sentences,
                       cfg.sentence_len_range, rng::derive_seed(seed, "toy.val")),
      c.lexicon);
  c.test = build_bootstrap_dataset(
      sample_sentences({{c.main_words, 1.0 - w}, {c.extra_words, w}}, cfg.n_test_sentences,
                       cfg.sentence_len_range, rng::derive_seed(seed, "toy.test")),
      c.lexicon);

  for (auto* d : {&c.bs, &c.ts, &c.val, &c.test})
    for (auto& u : d->samples) u.text.materialize_ids(c.vocab);

  c.bs.validate();
  c.ts.validate();
  c.val.validate();
  c.test.validate();
  return c;
}

}  // namespace seqfront::toy
