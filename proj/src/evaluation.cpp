#include "seqfront/evaluation.hpp"

#include "seqfront/rng.hpp"

#include <algorithm>
#include <cmath>

namespace seqfront {

EditCounts phone_edit_distance(const std::vector<std::string>& ref,
                               const std::vector<std::string>& hyp) {
  const int R = static_cast<int>(ref.size()), H = static_cast<int>(hyp.size());
  std::vector<std::vector<int>> dp(R + 1, std::vector<int>(H + 1, 0));
  for (int i = 1; i <= R; ++i) dp[i][0] = i;
  for (int j = 1; j <= H; ++j) dp[0][j] = j;
  for (int i = 1; i <= R; ++i)
    for (int j = 1; j <= H; ++j) {
      const int subc = dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      dp[i][j] = std::min({subc, dp[i - 1][j] + 1, dp[i][j - 1] + 1});
    }

  EditCounts out;
  out.distance = dp[R][H];
  int i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] && ref[i - 1] == hyp[j - 1]) {
      --i, --j;
    } else if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + 1) {
      ++out.sub, --i, --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++out.del, --i;
    } else {
      ++out.ins, --j;
    }
  }
  return out;
}

std::vector<std::string> phones_of(const PronSequence& p) {
  std::vector<std::string> out;
  for (const auto& t : p.tokens)
    if (t.kind == TokenKind::phone) out.push_back(t.surface);
  return out;
}

WordGroups segment_words(const PronSequence& p, int expected_words) {
  require(expected_words >= 1, "segment_words: need at least one expected word");
  WordGroups out;
  out.groups.emplace_back();
  for (const auto& t : p.tokens) {
    if (t.kind == TokenKind::word_sep) {
      out.groups.emplace_back();
    } else {
      out.groups.back().tokens.push_back(t);
    }
  }
  out.mismatched = static_cast<int>(out.groups.size()) != expected_words;
  return out;
}

WordAlignment align_words(const std::vector<PronSequence>& ref,
                          const std::vector<PronSequence>& hyp) {
  require(!ref.empty(), "align_words: empty reference");
  const int R = static_cast<int>(ref.size()), H = static_cast<int>(hyp.size());
  std::vector<std::vector<std::string>> rp(R), hp(H);
  for (int i = 0; i < R; ++i) rp[i] = phones_of(ref[i]);
  for (int j = 0; j < H; ++j) hp[j] = phones_of(hyp[j]);

  // dp over (refs consumed, hyps consumed); skipping a ref deletes all its
  // phones, skipping a hyp inserts all of its phones
  constexpr int kInf = 1 << 28;
  std::vector<std::vector<int>> dp(R + 1, std::vector<int>(H + 1, kInf));
  dp[0][0] = 0;
  for (int i = 1; i <= R; ++i) dp[i][0] = dp[i - 1][0] + static_cast<int>(rp[i - 1].size());
  for (int j = 1; j <= H; ++j) dp[0][j] = dp[0][j - 1] + static_cast<int>(hp[j - 1].size());
  std::vector<std::vector<int>> pair_cost(R, std::vector<int>(H, 0));
  for (int i = 1; i <= R; ++i)
    for (int j = 1; j <= H; ++j) {
      pair_cost[i - 1][j - 1] = phone_edit_distance(rp[i - 1], hp[j - 1]).distance;
      dp[i][j] = std::min({dp[i - 1][j - 1] + pair_cost[i - 1][j - 1],
                           dp[i - 1][j] + static_cast<int>(rp[i - 1].size()),
                           dp[i][j - 1] + static_cast<int>(hp[j - 1].size())});
    }

  WordAlignment out;
  out.total_cost = dp[R][H];
  int i = R, j = H;
  std::vector<AlignedWord> rev;
  std::vector<int> unmatched;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + pair_cost[i - 1][j - 1]) {
      rev.push_back({i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + static_cast<int>(rp[i - 1].size())) {
      rev.push_back({i - 1, std::nullopt});
      --i;
    } else {
      unmatched.push_back(j - 1);
      --j;
    }
  }
  out.pairs.assign(rev.rbegin(), rev.rend());
  out.unmatched_hyp.assign(unmatched.rbegin(), unmatched.rend());
  return out;
}

double CategoryStats::per() const {
  return ref_phones == 0 ? 0.0 : 100.0 * double(edits) / double(ref_phones);
}

double CategoryStats::waccp() const {
  return words == 0 ? 0.0 : 100.0 * double(phone_correct) / double(words);
}

double CategoryStats::wacc() const {
  return words == 0 ? 0.0 : 100.0 * double(full_correct) / double(words);
}

namespace {

// WAcc comparison view: phones, stress and syllable boundaries only.
std::vector<PronToken> wacc_tokens(const PronSequence& p) {
  std::vector<PronToken> out;
  for (const auto& t : p.tokens)
    if (t.kind == TokenKind::phone || t.kind == TokenKind::stress ||
        t.kind == TokenKind::syl_boundary)
      out.push_back(t);
  return out;
}

void tally(CategoryStats& s, const ScoredWord& w) {
  s.words += 1;
  s.ref_phones += w.ref_phones;
  s.edits += w.edits;
  s.phone_correct += w.phone_match;
  s.full_correct += w.full_match;
}

}  // namespace

EvalReport score_dataset(const std::vector<EvalInput>& items,
                         const std::set<std::string>& bs_vocab,
                         const std::set<std::string>& ts_vocab) {
  EvalReport rep;
  for (const auto& item : items) {
    require(!item.words.empty(), "score_dataset: utterance without words");
    const int n_words = static_cast<int>(item.words.size());
    WordGroups ref_g = segment_words(item.ref, n_words);
    WordGroups hyp_g = segment_words(item.hyp, n_words);
    require(!ref_g.mismatched, "score_dataset: reference word count mismatch");
    WordAlignment al = align_words(ref_g.groups, hyp_g.groups);

    std::vector<ScoredWord> scored(al.pairs.size());
    for (size_t k = 0; k < al.pairs.size(); ++k) {
      const AlignedWord& aw = al.pairs[k];
      ScoredWord& w = scored[k];
      w.category = classify_word(item.words[aw.ref_index], bs_vocab, ts_vocab);
      const auto ref_ph = phones_of(ref_g.groups[aw.ref_index]);
      w.ref_phones = static_cast<int>(ref_ph.size());
      if (aw.hyp_index) {
        const PronSequence& h = hyp_g.groups[*aw.hyp_index];
        w.edits = phone_edit_distance(ref_ph, phones_of(h)).distance;
        w.phone_match = w.edits == 0;
        w.full_match = wacc_tokens(ref_g.groups[aw.ref_index]) == wacc_tokens(h);
      } else {
        w.edits = w.ref_phones;  // whole word deleted
      }
    }
    // phones of never-matched hypothesis words are insertions, charged to
    // the nearest preceding aligned reference word (the first one if none)
    for (int hj : al.unmatched_hyp) {
      size_t charge = 0;
      for (size_t k = 0; k < al.pairs.size(); ++k)
        if (al.pairs[k].hyp_index && *al.pairs[k].hyp_index < hj) charge = k;
      scored[charge].edits += static_cast<int>(phones_of(hyp_g.groups[hj]).size());
      scored[charge].phone_match = false;
      scored[charge].full_match = false;
    }
    for (const auto& w : scored) {
      tally(rep.all, w);
      tally(rep.by_category[w.category], w);
      rep.words.push_back(w);
    }
  }
  return rep;
}

double paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                        int n_resamples, uint64_t seed) {
  require(a.size() == b.size(), "paired_bootstrap: outcome lists differ in length");
  require(!a.empty(), "paired_bootstrap: empty outcome lists");
  require(n_resamples >= 1, "paired_bootstrap: need at least one resample");
  const size_t n = a.size();
  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];

  auto g = rng::substream(seed, "paired_bootstrap");
  long le = 0, ge = 0;
  for (int r = 0; r < n_resamples; ++r) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += d[rng::below(g, n)];
    if (s <= 0.0) ++le;
    if (s >= 0.0) ++ge;
  }
  const double p = 2.0 * std::min(double(le + 1), double(ge + 1)) / double(n_resamples + 1);
  return std::min(p, 1.0);
}

Dataset shuffle_targets(const Dataset& ts, uint64_t seed) {
  require(ts.size() >= 2, "shuffle_targets: need at least two samples");
  for (const auto& s : ts.samples)
    require(s.features.has_value(), "shuffle_targets: sample without features");

  const size_t n = ts.size();
  std::vector<size_t> perm(n);
  auto g = rng::substream(seed, "shuffle_targets");
  bool fixed_point = true;
  while (fixed_point) {
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    for (size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng::below(g, i + 1)]);
    fixed_point = false;
    for (size_t i = 0; i < n; ++i) fixed_point |= perm[i] == i;
  }

  Dataset out = ts;
  for (size_t i = 0; i < n; ++i) out.samples[i].features = ts.samples[perm[i]].features;
  return out;
}

}  // namespace seqfront
