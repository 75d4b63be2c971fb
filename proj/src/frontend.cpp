#include "seqfront/frontend.hpp"

#include "seqfront/rng.hpp"

#include <algorithm>
#include <functional>
#include <cmath>

namespace seqfront {

namespace {
constexpr double kSqrt2Pi = 2.5066282746310005;
}

TokenBatch make_char_batch(const std::vector<const TextSequence*>& texts) {
  require(!texts.empty(), "make_char_batch: empty batch");
  TokenBatch b;
  int L = 0;
  for (const auto* x : texts) {
    require(!x->chars.empty(), "make_char_batch: text has no materialized char ids");
    b.lengths.push_back(static_cast<int>(x->chars.size()));
    L = std::max(L, b.lengths.back());
  }
  const int B = static_cast<int>(texts.size());
  b.steps.assign(L, std::vector<int>(B, Vocab::pad_id));
  b.mask = Eigen::MatrixXf::Zero(L, B);
  for (int j = 0; j < B; ++j)
    for (int i = 0; i < b.lengths[j]; ++i) {
      b.steps[i][j] = texts[j]->chars[i];
      b.mask(i, j) = 1.0f;
    }
  return b;
}

TargetBatch make_target_batch(const std::vector<const PronSequence*>& targets, const Vocab& v) {
  require(!targets.empty(), "make_target_batch: empty batch");
  TargetBatch tb;
  std::vector<std::vector<int>> ids(targets.size());
  int T = 0;
  for (size_t j = 0; j < targets.size(); ++j) {
    require(!targets[j]->tokens.empty(), "make_target_batch: empty pronunciation");
    for (const auto& tok : targets[j]->tokens) ids[j].push_back(v.id(tok.surface));
    ids[j].push_back(Vocab::eos_id);
    T = std::max(T, static_cast<int>(ids[j].size()));
    tb.total_tokens += static_cast<long>(ids[j].size());
  }
  const int B = static_cast<int>(targets.size());
  tb.in.steps.assign(T, std::vector<int>(B, Vocab::pad_id));
  tb.out.steps.assign(T, std::vector<int>(B, Vocab::pad_id));
  tb.in.mask = Eigen::MatrixXf::Zero(T, B);
  tb.out.mask = tb.in.mask;
  for (int j = 0; j < B; ++j) {
    const int n = static_cast<int>(ids[j].size());
    tb.in.lengths.push_back(n);
    tb.out.lengths.push_back(n);
    for (int i = 0; i < n; ++i) {
      tb.in.steps[i][j] = i == 0 ? Vocab::bos_id : ids[j][i - 1];
      tb.out.steps[i][j] = ids[j][i];
      tb.in.mask(i, j) = 1.0f;
      tb.out.mask(i, j) = 1.0f;
    }
  }
  return tb;
}

template <class S>
FrontendModelT<S>::FrontendModelT(const ModelConfig& c, int vocab, uint64_t master_seed)
    : cfg(c), vocab_size(vocab) {
  cfg.validate();
  require(vocab_size > 3, "frontend: vocabulary has no tokens beyond the specials");
  const int H = cfg.hidden_dim, E = cfg.embed_dim, K = cfg.gmm_components;

  char_embed = nn::EmbeddingT<S>("embed.char", E, vocab_size);
  pron_embed = nn::EmbeddingT<S>("embed.pron", E, vocab_size);
  for (int i = 0; i < cfg.n_layers; ++i) {
    const int in = i == 0 ? E : H;
    enc_fwd.emplace_back("enc.l" + std::to_string(i) + ".fwd", H / 2, in);
    enc_bwd.emplace_back("enc.l" + std::to_string(i) + ".bwd", H / 2, in);
  }
  att_lstm = nn::LSTMT<S>("dec.att_lstm", H, H + E);
  att_mlp1 = nn::LinearT<S>("dec.att_mlp1", cfg.attention_dim, H);
  att_mlp2 = nn::LinearT<S>("dec.att_mlp2", 3 * K, cfg.attention_dim);
  dec_lstm = nn::LSTMT<S>("dec.lstm", H, 2 * H);
  proj = nn::LinearT<S>("dec.proj", vocab_size, H);

  char_embed.init(master_seed);
  pron_embed.init(master_seed);
  for (auto& l : enc_fwd) l.init(master_seed);
  for (auto& l : enc_bwd) l.init(master_seed);
  att_lstm.init(master_seed);
  att_mlp1.init(master_seed);
  att_mlp2.init(master_seed);
  dec_lstm.init(master_seed);
  proj.init(master_seed);
}

template <class S>
void FrontendModelT<S>::collect(ad::ParamRefs<S>& out) {
  encoder_params(out);
  decoder_params(out);
}

template <class S>
void FrontendModelT<S>::encoder_params(ad::ParamRefs<S>& out) {
  char_embed.collect(out);
  for (auto& l : enc_fwd) l.collect(out);
  for (auto& l : enc_bwd) l.collect(out);
}

template <class S>
void FrontendModelT<S>::decoder_params(ad::ParamRefs<S>& out) {
  pron_embed.collect(out);
  att_lstm.collect(out);
  att_mlp1.collect(out);
  att_mlp2.collect(out);
  dec_lstm.collect(out);
  proj.collect(out);
}

template <class S>
void FrontendModelT<S>::attention_params(ad::ParamRefs<S>& out) {
  att_mlp1.collect(out);
  att_mlp2.collect(out);
}

namespace {

template <class S>
ad::VarT<S> maybe_dropout(ad::TapeT<S>& t, ad::VarT<S> x, double rate, RunMode mode,
                          std::mt19937_64* rng) {
  if (mode != RunMode::train || rate <= 0.0) return x;
  require(rng != nullptr, "train-mode forward needs a dropout generator");
  return nn::dropout(t, x, static_cast<S>(rate), *rng, true);
}

}  // namespace

template <class S>
EncodedT<S> FrontendModelT<S>::encode(ad::TapeT<S>& t, const TokenBatch& chars, RunMode mode,
                                      std::mt19937_64* drop_rng) {
  const int L = chars.max_len(), B = chars.batch();
  const int Hd = cfg.hidden_dim / 2;
  require(L > 0, "encode: empty input");

  std::vector<ad::VarT<S>> mrow(L);
  for (int i = 0; i < L; ++i) mrow[i] = t.leaf(chars.mask.row(i).template cast<S>());

  std::vector<ad::VarT<S>> x(L);
  for (int i = 0; i < L; ++i) {
    x[i] = maybe_dropout(t, char_embed.apply(t, chars.steps[i]), cfg.dropout, mode, drop_rng);
  }

  for (int li = 0; li < cfg.n_layers; ++li) {
    auto& fwd = enc_fwd[li];
    auto& bwd = enc_bwd[li];
    std::vector<ad::VarT<S>> hf(L), hb(L);
    ad::VarT<S> h = nn::zeros(t, Hd, B), c = nn::zeros(t, Hd, B);
    for (int i = 0; i < L; ++i) {
      auto [h2, c2] = fwd.step(t, x[i], h, c);
      h = nn::masked_mix(t, mrow[i], h2, h);
      c = nn::masked_mix(t, mrow[i], c2, c);
      hf[i] = h;
    }
    h = nn::zeros(t, Hd, B);
    c = nn::zeros(t, Hd, B);
    for (int i = L - 1; i >= 0; --i) {
      auto [h2, c2] = bwd.step(t, x[i], h, c);
      h = nn::masked_mix(t, mrow[i], h2, h);
      c = nn::masked_mix(t, mrow[i], c2, c);
      hb[i] = h;
    }
    for (int i = 0; i < L; ++i)
      x[i] = maybe_dropout(t, t.vcat({hf[i], hb[i]}), cfg.dropout, mode, drop_rng);
  }

  EncodedT<S> enc;
  enc.e = std::move(x);
  enc.mask_var = t.leaf(chars.mask.template cast<S>());
  Mat<S> grid(L, B);
  for (int i = 0; i < L; ++i) grid.row(i).setConstant(static_cast<S>(i));
  enc.pos_grid = t.leaf(std::move(grid));
  enc.ones_col = t.leaf(Mat<S>::Ones(L, 1));
  enc.lengths = chars.lengths;
  return enc;
}

template <class S>
DecStateT<S> FrontendModelT<S>::initial_state(ad::TapeT<S>& t, int batch) const {
  const int H = cfg.hidden_dim, K = cfg.gmm_components;
  return {nn::zeros(t, H, batch), nn::zeros(t, H, batch), nn::zeros(t, H, batch),
          nn::zeros(t, H, batch), nn::zeros(t, H, batch), nn::zeros(t, K, batch)};
}

template <class S>
StepVarsT<S> FrontendModelT<S>::decode_step(ad::TapeT<S>& t, const EncodedT<S>& enc,
                                            DecStateT<S>& st, ad::VarT<S> p_emb,
                                            ad::VarT<S> step_mask, RunMode mode,
                                            std::mt19937_64* drop_rng) {
  const int K = cfg.gmm_components;
  auto mix = [&](ad::VarT<S> fresh, ad::VarT<S> old) {
    return step_mask.valid() ? nn::masked_mix(t, step_mask, fresh, old) : fresh;
  };

  auto [a2, ac2] = att_lstm.step(t, t.vcat({st.c, p_emb}), st.a, st.a_cell);
  ad::VarT<S> a_new = mix(a2, st.a);
  ad::VarT<S> a_cell = mix(ac2, st.a_cell);
  ad::VarT<S> a_drop = maybe_dropout(t, a_new, cfg.dropout, mode, drop_rng);

  GmmAttention<S> at = gmm_attention_step(t, enc.e, enc.mask_var, enc.pos_grid, enc.ones_col,
                                          a_drop, att_mlp1, att_mlp2, st.mu, K);
  ad::VarT<S> mu_new = mix(at.mu, st.mu);
  ad::VarT<S> c_new = mix(at.c, st.c);

  auto [d2, dc2] = dec_lstm.step(t, t.vcat({c_new, a_drop}), st.d, st.d_cell);
  ad::VarT<S> d_new = mix(d2, st.d);
  ad::VarT<S> d_cell = mix(dc2, st.d_cell);
  ad::VarT<S> l = proj.apply(t, maybe_dropout(t, d_new, cfg.dropout, mode, drop_rng));

  st = {a_new, a_cell, d_new, d_cell, c_new, mu_new};
  return {a_new, c_new, d_new, l, at.alpha};
}

template <class S>
GmmAttention<S> gmm_attention_step(ad::TapeT<S>& t, const std::vector<ad::VarT<S>>& memory,
                                   ad::VarT<S> mask_var, ad::VarT<S> pos_grid,
                                   ad::VarT<S> ones_col, ad::VarT<S> query, nn::LinearT<S>& mlp1,
                                   nn::LinearT<S>& mlp2, ad::VarT<S> mu_prev, int n_components) {
  const int K = n_components;
  require(mlp2.W.value.rows() == 3 * K, "gmm_attention_step: MLP output is not 3K rows");

  ad::VarT<S> mlp = mlp2.apply(t, t.tanh_(mlp1.apply(t, query)));
  ad::VarT<S> w = t.softmax_cols(t.slice_rows(mlp, 0, K));
  ad::VarT<S> delta = t.softplus(t.slice_rows(mlp, K, K));
  // width floor keeps the density finite if softplus underflows
  ad::VarT<S> sigma = t.add_scalar(t.softplus(t.slice_rows(mlp, 2 * K, K)), S(1e-6));
  ad::VarT<S> mu_new = t.add(mu_prev, delta);

  ad::VarT<S> alpha_raw;
  for (int k = 0; k < K; ++k) {
    ad::VarT<S> mu_k = t.slice_rows(mu_new, k, 1);
    ad::VarT<S> sg_k = t.slice_rows(sigma, k, 1);
    ad::VarT<S> w_k = t.slice_rows(w, k, 1);
    ad::VarT<S> diff = t.sub(pos_grid, t.matmul(ones_col, mu_k));
    ad::VarT<S> z = t.div_rowvec(t.square(diff), t.scale(t.square(sg_k), S(2)));
    ad::VarT<S> dens = t.div_rowvec(t.exp_(t.neg(z)), t.scale(sg_k, static_cast<S>(kSqrt2Pi)));
    ad::VarT<S> term = t.mul_rowvec(dens, w_k);
    alpha_raw = k == 0 ? term : t.add(alpha_raw, term);
  }
  ad::VarT<S> masked = t.mul(alpha_raw, mask_var);
  ad::VarT<S> alpha = t.div_rowvec(masked, t.add_scalar(t.sum_rows(masked), S(1e-20)));
  return {t.context_sum(memory, alpha), alpha, mu_new};
}

template GmmAttention<float> gmm_attention_step(ad::TapeT<float>&,
                                                const std::vector<ad::VarT<float>>&,
                                                ad::VarT<float>, ad::VarT<float>, ad::VarT<float>,
                                                ad::VarT<float>, nn::LinearT<float>&,
                                                nn::LinearT<float>&, ad::VarT<float>, int);
template GmmAttention<double> gmm_attention_step(ad::TapeT<double>&,
                                                 const std::vector<ad::VarT<double>>&,
                                                 ad::VarT<double>, ad::VarT<double>,
                                                 ad::VarT<double>, ad::VarT<double>,
                                                 nn::LinearT<double>&, nn::LinearT<double>&,
                                                 ad::VarT<double>, int);

template <class S>
typename FrontendModelT<S>::ForwardResult FrontendModelT<S>::forward_teacher_forced(
    ad::TapeT<S>& t, const TokenBatch& chars, const TargetBatch& targets, RunMode mode,
    std::mt19937_64* drop_rng) {
  const int T = targets.out.max_len(), B = targets.out.batch();
  require(B == chars.batch(), "forward: chars/targets batch mismatch");

  EncodedT<S> enc = encode(t, chars, mode, drop_rng);
  DecStateT<S> st = initial_state(t, B);

  ForwardResult r;
  r.taps.e = enc.e;
  r.taps.e_mask = chars.mask;
  r.taps.t_mask = targets.out.mask;
  r.total_tokens = targets.total_tokens;

  ad::VarT<S> loss_cols;
  for (int i = 0; i < T; ++i) {
    ad::VarT<S> p_emb =
        maybe_dropout(t, pron_embed.apply(t, targets.in.steps[i]), cfg.dropout, mode, drop_rng);
    ad::VarT<S> m = t.leaf(targets.out.mask.row(i).template cast<S>());
    StepVarsT<S> sv = decode_step(t, enc, st, p_emb, m, mode, drop_rng);

    std::vector<S> mvec(B);
    for (int j = 0; j < B; ++j) mvec[j] = static_cast<S>(targets.out.mask(i, j));
    ad::VarT<S> ce = t.cross_entropy_cols(sv.l, targets.out.steps[i], mvec);
    loss_cols = i == 0 ? ce : t.add(loss_cols, ce);

    r.taps.a.push_back(sv.a);
    r.taps.c.push_back(sv.c);
    r.taps.d.push_back(sv.d);
    r.taps.l.push_back(sv.l);
  }
  r.loss = t.scale(t.sum_all(loss_cols), static_cast<S>(1.0 / double(r.total_tokens)));
  return r;
}

template <class S>
std::vector<int> FrontendModelT<S>::allowed_output_ids(const Vocab& v) {
  std::vector<int> ids;
  ids.push_back(Vocab::eos_id);
  for (int i = 0; i < v.size(); ++i) {
    switch (v.kinds[i]) {
      case TokenKind::phone:
      case TokenKind::stress:
      case TokenKind::syl_boundary:
      case TokenKind::word_sep:
      case TokenKind::pros_boundary:
        ids.push_back(i);
        break;
      default:
        break;
    }
  }
  return ids;
}

namespace {

// column-stable log softmax
template <class S>
Eigen::VectorXd log_softmax_col(const Mat<S>& m, int col) {
  Eigen::VectorXd v = m.col(col).template cast<double>();
  const double mx = v.maxCoeff();
  const double lse = mx + std::log((v.array() - mx).exp().sum());
  return v.array() - lse;
}

template <class S>
Mat<S> gather_cols(const Mat<S>& m, const std::vector<int>& cols) {
  Mat<S> out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

}  // namespace

template <class S>
std::vector<Hypothesis> FrontendModelT<S>::beam_search(const std::vector<int>& char_ids,
                                                       int beam_size,
                                                       const std::vector<int>& allowed_ids) {
  require(beam_size >= 1, "beam_search: beam_size must be >= 1");
  require(!char_ids.empty(), "beam_search: empty input");
  require(!allowed_ids.empty(), "beam_search: empty output alphabet");
  const int L = static_cast<int>(char_ids.size());
  const int max_len = cfg.max_len_factor * L;
  const int B = beam_size;

  // all columns share the sentence; live hypotheses occupy a prefix of them
  TokenBatch chars;
  chars.steps.assign(L, std::vector<int>(B, 0));
  chars.mask = Eigen::MatrixXf::Ones(L, B);
  chars.lengths.assign(B, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < B; ++j) chars.steps[i][j] = char_ids[i];

  ad::TapeT<S> t;
  t.grad_enabled = false;
  EncodedT<S> enc = encode(t, chars, RunMode::eval, nullptr);
  const int base = t.checkpoint();
  const int H = cfg.hidden_dim, K = cfg.gmm_components;

  DecValuesT<S> vals{Mat<S>::Zero(H, B), Mat<S>::Zero(H, B), Mat<S>::Zero(H, B),
                     Mat<S>::Zero(H, B), Mat<S>::Zero(H, B), Mat<S>::Zero(K, B)};
  std::vector<std::vector<int>> hyp_ids(1);
  std::vector<double> hyp_score(1, 0.0);
  std::vector<int> prev(B, Vocab::bos_id);
  int live = 1;
  std::vector<Hypothesis> done;

  auto lex_less = [](const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };

  for (int step = 0; step < max_len && live > 0; ++step) {
    DecStateT<S> st{t.leaf(vals.a),      t.leaf(vals.a_cell), t.leaf(vals.d),
                    t.leaf(vals.d_cell), t.leaf(vals.c),      t.leaf(vals.mu)};
    ad::VarT<S> p_emb = pron_embed.apply(t, prev);
    StepVarsT<S> sv = decode_step(t, enc, st, p_emb, ad::VarT<S>{}, RunMode::eval, nullptr);

    const Mat<S> logits = sv.l.val();
    DecValuesT<S> next{st.a.val(), st.a_cell.val(), st.d.val(),
                       st.d_cell.val(), st.c.val(), st.mu.val()};
    t.truncate(base);

    struct Cand {
      double score;
      int parent;
      int token;
    };
    std::vector<Cand> cands;
    for (int j = 0; j < live; ++j) {
      Eigen::VectorXd lp = log_softmax_col(logits, j);
      for (int id : allowed_ids) cands.push_back({hyp_score[j] + lp(id), j, id});
    }
    auto cand_less = [&](const Cand& x, const Cand& y) {
      if (x.score != y.score) return x.score > y.score;
      if (x.parent != y.parent) return lex_less(hyp_ids[x.parent], hyp_ids[y.parent]);
      return x.token < y.token;
    };
    std::sort(cands.begin(), cands.end(), cand_less);

    // Only the top beam_size candidates survive; end-of-sequence ones among
    // them finalize, the rest stay live. With beam 1 this is exactly greedy.
    std::vector<std::vector<int>> new_ids;
    std::vector<double> new_score;
    std::vector<int> parents, tokens;
    for (int ci = 0; ci < static_cast<int>(cands.size()) && ci < beam_size; ++ci) {
      const Cand& cd = cands[ci];
      if (cd.token == Vocab::eos_id) {
        done.push_back({hyp_ids[cd.parent], cd.score, false});
      } else {
        new_ids.push_back(hyp_ids[cd.parent]);
        new_ids.back().push_back(cd.token);
        new_score.push_back(cd.score);
        parents.push_back(cd.parent);
        tokens.push_back(cd.token);
      }
    }

    live = static_cast<int>(parents.size());
    if (live == 0) break;
    // no live hypothesis can improve once the kept list is full and ahead
    if (static_cast<int>(done.size()) >= beam_size) {
      std::vector<double> ds;
      for (const auto& h : done) ds.push_back(h.log_prob);
      std::nth_element(ds.begin(), ds.begin() + (beam_size - 1), ds.end(),
                       std::greater<double>());
      if (new_score[0] < ds[beam_size - 1]) break;
    }

    std::vector<int> pad = parents;
    pad.resize(B, parents[0]);  // dead columns recompute a live one, ignored
    vals = {gather_cols(next.a, pad),      gather_cols(next.a_cell, pad),
            gather_cols(next.d, pad),      gather_cols(next.d_cell, pad),
            gather_cols(next.c, pad),      gather_cols(next.mu, pad)};
    hyp_ids = std::move(new_ids);
    hyp_score = std::move(new_score);
    for (int j = 0; j < B; ++j) prev[j] = j < live ? tokens[j] : tokens[0];

    if (step == max_len - 1)
      for (int j = 0; j < live; ++j) done.push_back({hyp_ids[j], hyp_score[j], true});
  }

  std::sort(done.begin(), done.end(), [&](const Hypothesis& x, const Hypothesis& y) {
    if (x.log_prob != y.log_prob) return x.log_prob > y.log_prob;
    return lex_less(x.ids, y.ids);
  });
  if (static_cast<int>(done.size()) > beam_size) done.resize(beam_size);
  return done;
}

template <class S>
std::vector<Hypothesis> FrontendModelT<S>::greedy_decode(
    const std::vector<const TextSequence*>& texts, const std::vector<int>& allowed_ids) {
  require(!allowed_ids.empty(), "greedy_decode: empty output alphabet");
  TokenBatch chars = make_char_batch(texts);
  const int B = chars.batch();
  const int H = cfg.hidden_dim, K = cfg.gmm_components;

  ad::TapeT<S> t;
  t.grad_enabled = false;
  EncodedT<S> enc = encode(t, chars, RunMode::eval, nullptr);
  const int base = t.checkpoint();

  DecValuesT<S> vals{Mat<S>::Zero(H, B), Mat<S>::Zero(H, B), Mat<S>::Zero(H, B),
                     Mat<S>::Zero(H, B), Mat<S>::Zero(H, B), Mat<S>::Zero(K, B)};
  std::vector<Hypothesis> out(B);
  std::vector<int> prev(B, Vocab::bos_id);
  std::vector<bool> finished(B, false);
  int max_steps = 0;
  for (int j = 0; j < B; ++j) max_steps = std::max(max_steps, cfg.max_len_factor * chars.lengths[j]);

  for (int step = 0; step < max_steps; ++step) {
    bool any = false;
    for (int j = 0; j < B; ++j) any = any || !finished[j];
    if (!any) break;

    DecStateT<S> st{t.leaf(vals.a),      t.leaf(vals.a_cell), t.leaf(vals.d),
                    t.leaf(vals.d_cell), t.leaf(vals.c),      t.leaf(vals.mu)};
    ad::VarT<S> p_emb = pron_embed.apply(t, prev);
    StepVarsT<S> sv = decode_step(t, enc, st, p_emb, ad::VarT<S>{}, RunMode::eval, nullptr);
    const Mat<S> logits = sv.l.val();
    vals = {st.a.val(), st.a_cell.val(), st.d.val(), st.d_cell.val(), st.c.val(), st.mu.val()};
    t.truncate(base);

    for (int j = 0; j < B; ++j) {
      if (finished[j]) continue;
      int best = allowed_ids[0];
      for (int id : allowed_ids)
        if (logits(id, j) > logits(best, j)) best = id;
      out[j].log_prob += log_softmax_col(logits, j)(best);
      if (best == Vocab::eos_id) {
        finished[j] = true;
      } else {
        out[j].ids.push_back(best);
        prev[j] = best;
        if (static_cast<int>(out[j].ids.size()) >= cfg.max_len_factor * chars.lengths[j]) {
          finished[j] = true;
          out[j].truncated = true;
        }
      }
    }
  }
  return out;
}

template <class S>
MatD FrontendModelT<S>::encode_single(const std::vector<int>& char_ids) {
  require(!char_ids.empty(), "encode_single: empty input");
  TokenBatch chars;
  const int L = static_cast<int>(char_ids.size());
  chars.steps.assign(L, std::vector<int>(1, 0));
  for (int i = 0; i < L; ++i) chars.steps[i][0] = char_ids[i];
  chars.mask = Eigen::MatrixXf::Ones(L, 1);
  chars.lengths = {L};

  ad::TapeT<S> t;
  t.grad_enabled = false;
  EncodedT<S> enc = encode(t, chars, RunMode::eval, nullptr);
  MatD e(L, cfg.hidden_dim);
  for (int i = 0; i < L; ++i) e.row(i) = enc.e[i].val().col(0).template cast<double>();
  return e;
}

template <class S>
std::pair<TapBundle, double> FrontendModelT<S>::teacher_forced_single(
    const std::vector<int>& char_ids, const std::vector<int>& target_ids) {
  require(!target_ids.empty(), "teacher_forced_single: empty target");
  TokenBatch chars;
  const int L = static_cast<int>(char_ids.size());
  chars.steps.assign(L, std::vector<int>(1, 0));
  for (int i = 0; i < L; ++i) chars.steps[i][0] = char_ids[i];
  chars.mask = Eigen::MatrixXf::Ones(L, 1);
  chars.lengths = {L};

  TargetBatch tb;
  const int T = static_cast<int>(target_ids.size()) + 1;  // EOS appended
  tb.in.steps.assign(T, std::vector<int>(1, 0));
  tb.out.steps.assign(T, std::vector<int>(1, 0));
  tb.in.mask = Eigen::MatrixXf::Ones(T, 1);
  tb.out.mask = tb.in.mask;
  tb.in.lengths = {T};
  tb.out.lengths = {T};
  tb.total_tokens = T;
  for (int i = 0; i < T; ++i) {
    tb.in.steps[i][0] = i == 0 ? Vocab::bos_id : target_ids[i - 1];
    tb.out.steps[i][0] = i < T - 1 ? target_ids[i] : Vocab::eos_id;
  }

  ad::TapeT<S> t;
  t.grad_enabled = false;
  ForwardResult r = forward_teacher_forced(t, chars, tb, RunMode::eval, nullptr);

  TapBundle b;
  b.e.resize(L, cfg.hidden_dim);
  for (int i = 0; i < L; ++i) b.e.row(i) = r.taps.e[i].val().col(0).template cast<double>();
  b.a.resize(T, cfg.hidden_dim);
  b.c.resize(T, cfg.hidden_dim);
  b.d.resize(T, cfg.hidden_dim);
  b.l.resize(T, vocab_size);
  for (int i = 0; i < T; ++i) {
    b.a.row(i) = r.taps.a[i].val().col(0).template cast<double>();
    b.c.row(i) = r.taps.c[i].val().col(0).template cast<double>();
    b.d.row(i) = r.taps.d[i].val().col(0).template cast<double>();
    b.l.row(i) = r.taps.l[i].val().col(0).template cast<double>();
  }
  return {std::move(b), static_cast<double>(r.loss.val()(0, 0))};
}

PronSequence hypothesis_to_pron(const Hypothesis& h, const Vocab& v) {
  PronSequence p;
  for (int id : h.ids) p.tokens.push_back({v.kind_of(id), v.surfaces[id]});
  return p;
}

template struct FrontendModelT<float>;
template struct FrontendModelT<double>;

}  // namespace seqfront
