#pragma once

#include "seqfront/frontend.hpp"

#include <random>
#include <vector>

namespace seqfront {

// Teacher-forcing frame batch: frames[f] is [D x B]; mask marks real frames.
struct FrameBatch {
  std::vector<Eigen::MatrixXf> frames;
  Eigen::MatrixXf mask;  // [F_max x B]
  std::vector<int> lengths;
  long total_frames = 0;

  int max_len() const { return static_cast<int>(frames.size()); }
  int batch() const { return lengths.empty() ? 0 : static_cast<int>(lengths.size()); }
  int dim() const { return frames.empty() ? 0 : static_cast<int>(frames[0].rows()); }
};

FrameBatch make_frame_batch(const std::vector<const AcousticSequence*>& seqs);

// Attention memory assembled from one tap level of a teacher-forced pass.
template <class S>
struct TapMemoryT {
  std::vector<ad::VarT<S>> mem;  // [M x B] per position
  ad::VarT<S> mask_var, pos_grid, ones_col;
  int dim = 0;
};

// Soft categorical relaxation: softmax over (logits + Gumbel noise) / tau,
// fresh noise per call, column-major fill for reproducibility.
template <class S>
ad::VarT<S> gumbel_softmax(ad::TapeT<S>& t, ad::VarT<S> logits, double tau, std::mt19937_64& g);

// L1 -> e, L2 -> a, L3 -> c, L4 -> d, L5 -> Gumbel-Softmax samples of each l
// multiplied into the pronunciation embedding table. Gradients flow through
// the chosen representation into whatever produced it.
template <class S>
TapMemoryT<S> tap_memory(ad::TapeT<S>& t, TapLevel level, const TapVarsT<S>& taps,
                         nn::EmbeddingT<S>& pron_embed, double tau, std::mt19937_64& g);

// Row count of the memory a given tap level yields (what the head's mem_dim
// must be): the embedding width at L5, the model width everywhere else.
inline int tap_memory_dim(const ModelConfig& cfg) {
  return cfg.tap_level == TapLevel::L5 ? cfg.embed_dim : cfg.hidden_dim;
}

template <class S>
struct AcousticForwardT {
  // point heads (L1/L2 losses): per-frame [D x B] before and after postnet
  std::vector<ad::VarT<S>> pre, post;
  // LMM head: per-frame [3*K*D x B], rows = K*D weight logits, K*D means,
  // K*D raw scales
  std::vector<ad::VarT<S>> lmm;
};

// Tacotron2-flavoured acoustic decoder: prenet on the previous ground-truth
// frame, attention LSTM, monotonic GMM attention over the tapped memory,
// decoder LSTM, projection of [d; c] to frames (or LMM parameters), plus a
// residual conv postnet for point heads. Training-only; it never runs free.
template <class S>
struct AcousticHeadT {
  ModelConfig cfg;
  int feat_dim = 0;
  int mem_dim = 0;

  nn::LinearT<S> prenet1, prenet2;
  nn::LSTMT<S> att_lstm;
  nn::LinearT<S> att_mlp1, att_mlp2;
  nn::LSTMT<S> dec_lstm;
  nn::LinearT<S> frame_proj;
  std::vector<nn::Conv1dT<S>> postnet;

  AcousticHeadT() = default;
  AcousticHeadT(const ModelConfig& cfg, int feat_dim, int mem_dim, uint64_t master_seed);

  void collect(ad::ParamRefs<S>& out);  // theta_a

  bool lmm_head() const { return cfg.acoustic_loss == AcousticLoss::LMM_NLL; }

  // Teacher-forced decode over exactly max_len(m) steps; no stop token. The
  // prenet dropout stays live in every mode, so a generator is mandatory.
  AcousticForwardT<S> forward(ad::TapeT<S>& t, const TapMemoryT<S>& memory, const FrameBatch& m,
                              std::mt19937_64& g);

  // Loss for this head's kind, averaged over valid frames and dimensions:
  // L1/L2 on both pre- and postnet frames summed, or the LMM NLL.
  ad::VarT<S> loss(ad::TapeT<S>& t, const AcousticForwardT<S>& out, const FrameBatch& m) const;
};

using AcousticHead = AcousticHeadT<float>;

}  // namespace seqfront
