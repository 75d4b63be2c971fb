#pragma once

#include "seqfront/config.hpp"
#include "seqfront/corpus.hpp"
#include "seqfront/nn.hpp"

#include <optional>
#include <string>
#include <vector>

namespace seqfront {

enum class RunMode { train, eval };

// Ids arranged for lockstep batching: steps[t][b] is column b's token at
// step t (padded with pad_id), mask marks real steps.
struct TokenBatch {
  std::vector<std::vector<int>> steps;
  Eigen::MatrixXf mask;  // [T_max x B]
  std::vector<int> lengths;

  int max_len() const { return static_cast<int>(steps.size()); }
  int batch() const { return lengths.empty() ? 0 : static_cast<int>(lengths.size()); }
};

TokenBatch make_char_batch(const std::vector<const TextSequence*>& texts);

struct TargetBatch {
  TokenBatch in;   // BOS-shifted decoder inputs
  TokenBatch out;  // targets with EOS appended
  long total_tokens = 0;
};

TargetBatch make_target_batch(const std::vector<const PronSequence*>& targets, const Vocab& v);

template <class S>
struct EncodedT {
  std::vector<ad::VarT<S>> e;  // one [H x B] Var per position
  ad::VarT<S> mask_var;        // [L_max x B] leaf of the position mask
  ad::VarT<S> pos_grid;        // [L_max x B] leaf, pos_grid(j, b) = j
  ad::VarT<S> ones_col;        // [L_max x 1] leaf, broadcasts row vectors
  std::vector<int> lengths;
};

// Decoder recurrence (Eqs. 2-5) state; threaded as Vars through a pass.
template <class S>
struct DecStateT {
  ad::VarT<S> a, a_cell, d, d_cell, c, mu;
};

// Same state as plain values, for threading across tape truncations.
template <class S>
struct DecValuesT {
  Mat<S> a, a_cell, d, d_cell, c, mu;
};

template <class S>
struct StepVarsT {
  ad::VarT<S> a, c, d, l, alpha;
};

// The five tap levels of one teacher-forced pass, per-step [dim x B] Vars.
template <class S>
struct TapVarsT {
  std::vector<ad::VarT<S>> e, a, c, d, l;
  Eigen::MatrixXf e_mask, t_mask;  // [L_max x B], [T_max x B]
};

// Single-sequence snapshot of the taps (rows = positions/steps).
struct TapBundle {
  MatD e, a, c, d, l;
};

struct Hypothesis {
  std::vector<int> ids;  // without the terminating EOS
  double log_prob = 0.0;
  bool truncated = false;  // hit max_len before EOS
};

template <class S>
struct GmmAttention {
  ad::VarT<S> c, alpha, mu;
};

// One monotonic GMM attention (V2) step over an arbitrary memory. An MLP on
// the query yields mixture weights (softmax) plus step sizes and widths
// (softplus); means advance by the steps so they never move backwards, and
// the weights are normalized Gaussian densities at integer positions, masked
// to the valid prefix and renormalized. memory holds [M x B] position Vars;
// mask_var/pos_grid are [P x B], ones_col is [P x 1].
template <class S>
GmmAttention<S> gmm_attention_step(ad::TapeT<S>& t, const std::vector<ad::VarT<S>>& memory,
                                   ad::VarT<S> mask_var, ad::VarT<S> pos_grid,
                                   ad::VarT<S> ones_col, ad::VarT<S> query, nn::LinearT<S>& mlp1,
                                   nn::LinearT<S>& mlp2, ad::VarT<S> mu_prev, int n_components);

// Seq2Seq frontend: stacked BiLSTM text encoder, then a pronunciation
// decoder made of an attention LSTM, monotonic GMM attention (V2), a
// decoder LSTM and a projection:
//   a_t = LSTM_att(a_{t-1}, c_{t-1}, p_{t-1})
//   c_t = GMMAttention(e_{1:L}, a_t)
//   d_t = LSTM_dec(d_{t-1}, c_t, a_t)
//   l_t = Projection(d_t)
// Attention mixture weights come from a softmax, step sizes and widths from
// a softplus, over a small MLP on a_t; means advance by the step sizes, so
// they never move backwards. Alignment weights are normalized Gaussian
// densities at integer positions, renormalized over valid positions.
template <class S>
struct FrontendModelT {
  ModelConfig cfg;
  int vocab_size = 0;

  nn::EmbeddingT<S> char_embed, pron_embed;
  std::vector<nn::LSTMT<S>> enc_fwd, enc_bwd;
  nn::LSTMT<S> att_lstm;
  nn::LinearT<S> att_mlp1, att_mlp2;
  nn::LSTMT<S> dec_lstm;
  nn::LinearT<S> proj;

  FrontendModelT() = default;
  FrontendModelT(const ModelConfig& cfg, int vocab_size, uint64_t master_seed);

  int hidden() const { return cfg.hidden_dim; }

  void collect(ad::ParamRefs<S>& out);            // all parameters
  void encoder_params(ad::ParamRefs<S>& out);     // theta_e (char embedding + BiLSTM stack)
  void decoder_params(ad::ParamRefs<S>& out);     // theta_p (everything else)
  void attention_params(ad::ParamRefs<S>& out);   // the attention MLP alone

  EncodedT<S> encode(ad::TapeT<S>& t, const TokenBatch& chars, RunMode mode,
                     std::mt19937_64* drop_rng);

  DecStateT<S> initial_state(ad::TapeT<S>& t, int batch) const;

  // One Eq. 2-5 step. p_emb is the (already embedded, already dropped-out)
  // previous token; st is advanced in place. step_mask freezes finished
  // columns; pass an invalid Var to skip masking.
  StepVarsT<S> decode_step(ad::TapeT<S>& t, const EncodedT<S>& enc, DecStateT<S>& st,
                           ad::VarT<S> p_emb, ad::VarT<S> step_mask, RunMode mode,
                           std::mt19937_64* drop_rng);

  struct ForwardResult {
    TapVarsT<S> taps;
    ad::VarT<S> loss;  // token-averaged cross entropy, [1 x 1]
    long total_tokens = 0;
  };

  ForwardResult forward_teacher_forced(ad::TapeT<S>& t, const TokenBatch& chars,
                                       const TargetBatch& targets, RunMode mode,
                                       std::mt19937_64* drop_rng);

  // Tokens decoding may emit: pronunciation taxonomy plus EOS.
  static std::vector<int> allowed_output_ids(const Vocab& v);

  std::vector<Hypothesis> beam_search(const std::vector<int>& char_ids, int beam_size,
                                      const std::vector<int>& allowed_ids);

  // Lockstep greedy decode of many sequences; max_len = 3 * L per column.
  std::vector<Hypothesis> greedy_decode(const std::vector<const TextSequence*>& texts,
                                        const std::vector<int>& allowed_ids);

  // ---- single-sequence wrappers (eval mode) ----
  MatD encode_single(const std::vector<int>& char_ids);  // [L x H]
  std::pair<TapBundle, double> teacher_forced_single(const std::vector<int>& char_ids,
                                                     const std::vector<int>& target_ids);
};

using FrontendModel = FrontendModelT<float>;

PronSequence hypothesis_to_pron(const Hypothesis& h, const Vocab& v);

}  // namespace seqfront
