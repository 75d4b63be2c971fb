#include "seqfront/acoustic_head.hpp"

#include "seqfront/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace seqfront {

FrameBatch make_frame_batch(const std::vector<const AcousticSequence*>& seqs) {
  require(!seqs.empty(), "make_frame_batch: empty batch");
  FrameBatch b;
  int F = 0;
  const int D = static_cast<int>(seqs[0]->dim());
  for (const auto* s : seqs) {
    s->validate();
    require(static_cast<int>(s->dim()) == D, "make_frame_batch: feature dimension mismatch");
    b.lengths.push_back(static_cast<int>(s->n_frames()));
    b.total_frames += s->n_frames();
    F = std::max(F, b.lengths.back());
  }
  const int B = static_cast<int>(seqs.size());
  b.frames.assign(F, Eigen::MatrixXf::Zero(D, B));
  b.mask = Eigen::MatrixXf::Zero(F, B);
  for (int j = 0; j < B; ++j)
    for (int f = 0; f < b.lengths[j]; ++f) {
      b.frames[f].col(j) = seqs[j]->frames.row(f).transpose();
      b.mask(f, j) = 1.0f;
    }
  return b;
}

template <class S>
ad::VarT<S> gumbel_softmax(ad::TapeT<S>& t, ad::VarT<S> logits, double tau, std::mt19937_64& g) {
  require(tau > 0.0, "gumbel_softmax: temperature must be positive");
  Mat<S> noise(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < noise.cols(); ++j)
    for (Eigen::Index i = 0; i < noise.rows(); ++i) {
      const double u = std::max(rng::uniform01(g), 1e-300);
      noise(i, j) = static_cast<S>(-std::log(std::max(-std::log(u), 1e-300)));
    }
  return t.softmax_cols(
      t.scale(t.add(logits, t.leaf(std::move(noise))), static_cast<S>(1.0 / tau)));
}

template <class S>
TapMemoryT<S> tap_memory(ad::TapeT<S>& t, TapLevel level, const TapVarsT<S>& taps,
                         nn::EmbeddingT<S>& pron_embed, double tau, std::mt19937_64& g) {
  TapMemoryT<S> mm;
  const Eigen::MatrixXf* mask = nullptr;
  switch (level) {
    case TapLevel::L1:
      require(!taps.e.empty(), "tap: bundle is missing encoder states");
      mm.mem = taps.e;
      mask = &taps.e_mask;
      break;
    case TapLevel::L2:
      require(!taps.a.empty(), "tap: bundle is missing attention states");
      mm.mem = taps.a;
      mask = &taps.t_mask;
      break;
    case TapLevel::L3:
      require(!taps.c.empty(), "tap: bundle is missing context vectors");
      mm.mem = taps.c;
      mask = &taps.t_mask;
      break;
    case TapLevel::L4:
      require(!taps.d.empty(), "tap: bundle is missing decoder states");
      mm.mem = taps.d;
      mask = &taps.t_mask;
      break;
    case TapLevel::L5:
      require(!taps.l.empty(), "tap: bundle is missing logits");
      for (const auto& l : taps.l)
        mm.mem.push_back(t.matmul(t.param(pron_embed.table), gumbel_softmax(t, l, tau, g)));
      mask = &taps.t_mask;
      break;
  }
  const int P = static_cast<int>(mm.mem.size());
  const int B = static_cast<int>(mm.mem[0].cols());
  require(mask->rows() == P && mask->cols() == B, "tap: mask does not match the memory");
  mm.mask_var = t.leaf(mask->template cast<S>());
  Mat<S> grid(P, B);
  for (int i = 0; i < P; ++i) grid.row(i).setConstant(static_cast<S>(i));
  mm.pos_grid = t.leaf(std::move(grid));
  mm.ones_col = t.leaf(Mat<S>::Ones(P, 1));
  mm.dim = static_cast<int>(mm.mem[0].rows());
  return mm;
}

template <class S>
AcousticHeadT<S>::AcousticHeadT(const ModelConfig& c, int fd, int md, uint64_t master_seed)
    : cfg(c), feat_dim(fd), mem_dim(md) {
  cfg.validate();
  require(feat_dim > 0, "acoustic head: feature dimension must be positive");
  require(mem_dim > 0, "acoustic head: memory dimension must be positive");

  const int H = cfg.hidden_dim, K = cfg.gmm_components;
  prenet1 = nn::LinearT<S>("ahead.prenet1", cfg.prenet_units, feat_dim);
  prenet2 = nn::LinearT<S>("ahead.prenet2", cfg.prenet_units, cfg.prenet_units);
  att_lstm = nn::LSTMT<S>("ahead.att_lstm", H, cfg.prenet_units + mem_dim);
  att_mlp1 = nn::LinearT<S>("ahead.att_mlp1", cfg.attention_dim, H);
  att_mlp2 = nn::LinearT<S>("ahead.att_mlp2", 3 * K, cfg.attention_dim);
  dec_lstm = nn::LSTMT<S>("ahead.dec_lstm", H, mem_dim + H);
  const int out_rows = lmm_head() ? 3 * cfg.lmm_components * feat_dim : feat_dim;
  frame_proj = nn::LinearT<S>("ahead.frame_proj", out_rows, H + mem_dim);
  if (!lmm_head()) {
    for (int i = 0; i < cfg.postnet_layers; ++i) {
      const int in = i == 0 ? feat_dim : cfg.postnet_channels;
      const int out = i == cfg.postnet_layers - 1 ? feat_dim : cfg.postnet_channels;
      postnet.emplace_back("ahead.postnet" + std::to_string(i), out, in, cfg.postnet_kernel);
    }
  }

  prenet1.init(master_seed);
  prenet2.init(master_seed);
  att_lstm.init(master_seed);
  att_mlp1.init(master_seed);
  att_mlp2.init(master_seed);
  dec_lstm.init(master_seed);
  frame_proj.init(master_seed);
  for (auto& l : postnet) l.init(master_seed);
}

template <class S>
void AcousticHeadT<S>::collect(ad::ParamRefs<S>& out) {
  prenet1.collect(out);
  prenet2.collect(out);
  att_lstm.collect(out);
  att_mlp1.collect(out);
  att_mlp2.collect(out);
  dec_lstm.collect(out);
  frame_proj.collect(out);
  for (auto& l : postnet) l.collect(out);
}

template <class S>
AcousticForwardT<S> AcousticHeadT<S>::forward(ad::TapeT<S>& t, const TapMemoryT<S>& memory,
                                              const FrameBatch& m, std::mt19937_64& g) {
  const int F = m.max_len(), B = m.batch();
  require(F > 0, "acoustic forward: no frames");
  require(m.dim() == feat_dim, "acoustic forward: feature dimension mismatch");
  require(!memory.mem.empty(), "acoustic forward: empty memory");
  require(static_cast<int>(memory.mem[0].rows()) == mem_dim,
          "acoustic forward: memory dimension mismatch");
  require(static_cast<int>(memory.mem[0].cols()) == B, "acoustic forward: batch mismatch");

  const int H = cfg.hidden_dim, K = cfg.gmm_components;
  const S pdrop = static_cast<S>(cfg.prenet_dropout);
  ad::VarT<S> a = nn::zeros(t, H, B), a_cell = nn::zeros(t, H, B);
  ad::VarT<S> d = nn::zeros(t, H, B), d_cell = nn::zeros(t, H, B);
  ad::VarT<S> c = nn::zeros(t, mem_dim, B);
  ad::VarT<S> mu = nn::zeros(t, K, B);
  ad::VarT<S> prev = nn::zeros(t, feat_dim, B);  // frame 0 sees silence

  AcousticForwardT<S> out;
  for (int f = 0; f < F; ++f) {
    ad::VarT<S> p = nn::dropout(t, nn::relu(t, prenet1.apply(t, prev)), pdrop, g, true);
    p = nn::dropout(t, nn::relu(t, prenet2.apply(t, p)), pdrop, g, true);

    auto [a2, ac2] = att_lstm.step(t, t.vcat({p, c}), a, a_cell);
    a = a2;
    a_cell = ac2;
    GmmAttention<S> at = gmm_attention_step(t, memory.mem, memory.mask_var, memory.pos_grid,
                                            memory.ones_col, a, att_mlp1, att_mlp2, mu, K);
    c = at.c;
    mu = at.mu;
    auto [d2, dc2] = dec_lstm.step(t, t.vcat({c, a}), d, d_cell);
    d = d2;
    d_cell = dc2;

    ad::VarT<S> y = frame_proj.apply(t, t.vcat({d, c}));
    (lmm_head() ? out.lmm : out.pre).push_back(y);
    prev = t.leaf(m.frames[f].template cast<S>());  // teacher forcing
  }

  if (!lmm_head()) {
    std::vector<ad::VarT<S>> h = out.pre;
    for (size_t li = 0; li < postnet.size(); ++li) {
      h = postnet[li].apply(t, h);
      if (li + 1 < postnet.size())
        for (auto& v : h) v = t.tanh_(v);
    }
    out.post.reserve(out.pre.size());
    for (int f = 0; f < F; ++f) out.post.push_back(t.add(out.pre[f], h[f]));
  }
  return out;
}

namespace {

// Elementwise Laplacian-mixture NLL. raw rows: K*D weight logits, K*D means,
// K*D raw scales; both logsumexps are max-shifted so a far-off component can
// underflow without dragging the whole term to -inf.
template <class S>
ad::VarT<S> lmm_frame_nll(ad::TapeT<S>& t, ad::VarT<S> raw, ad::VarT<S> mf, int D, int K) {
  std::vector<ad::VarT<S>> wl(K), mu(K), b(K);
  for (int k = 0; k < K; ++k) {
    wl[k] = t.slice_rows(raw, k * D, D);
    mu[k] = t.slice_rows(raw, K * D + k * D, D);
    b[k] = t.add_scalar(t.softplus(t.slice_rows(raw, 2 * K * D + k * D, D)), S(1e-4));
  }
  ad::VarT<S> wmax = wl[0];
  for (int k = 1; k < K; ++k) wmax = t.max_elem(wmax, wl[k]);
  ad::VarT<S> zsum;
  for (int k = 0; k < K; ++k) {
    ad::VarT<S> e = t.exp_(t.sub(wl[k], wmax));
    zsum = k == 0 ? e : t.add(zsum, e);
  }
  ad::VarT<S> lse_w = t.add(wmax, t.log_(zsum));

  std::vector<ad::VarT<S>> s(K);
  for (int k = 0; k < K; ++k) {
    ad::VarT<S> logw = t.sub(wl[k], lse_w);
    ad::VarT<S> logb2 = t.log_(t.scale(b[k], S(2)));
    ad::VarT<S> dist = t.div(t.abs_(t.sub(mf, mu[k])), b[k]);
    s[k] = t.sub(t.sub(logw, logb2), dist);
  }
  ad::VarT<S> smax = s[0];
  for (int k = 1; k < K; ++k) smax = t.max_elem(smax, s[k]);
  ad::VarT<S> esum;
  for (int k = 0; k < K; ++k) {
    ad::VarT<S> e = t.exp_(t.sub(s[k], smax));
    esum = k == 0 ? e : t.add(esum, e);
  }
  return t.neg(t.add(smax, t.log_(esum)));
}

}  // namespace

template <class S>
ad::VarT<S> AcousticHeadT<S>::loss(ad::TapeT<S>& t, const AcousticForwardT<S>& out,
                                   const FrameBatch& m) const {
  const int F = m.max_len();
  require(F > 0, "acoustic loss: no frames");

  ad::VarT<S> total;
  for (int f = 0; f < F; ++f) {
    ad::VarT<S> mf = t.leaf(m.frames[f].template cast<S>());
    ad::VarT<S> err;
    if (lmm_head()) {
      require(static_cast<int>(out.lmm.size()) == F, "acoustic loss: frame count mismatch");
      err = lmm_frame_nll(t, out.lmm[f], mf, feat_dim, cfg.lmm_components);
    } else {
      require(static_cast<int>(out.pre.size()) == F && out.post.size() == out.pre.size(),
              "acoustic loss: frame count mismatch");
      if (cfg.acoustic_loss == AcousticLoss::L1) {
        err = t.add(t.abs_(t.sub(out.pre[f], mf)), t.abs_(t.sub(out.post[f], mf)));
      } else {
        err = t.add(t.square(t.sub(out.pre[f], mf)), t.square(t.sub(out.post[f], mf)));
      }
    }
    ad::VarT<S> masked = t.mul_rowvec(err, t.leaf(m.mask.row(f).template cast<S>()));
    ad::VarT<S> s = t.sum_all(masked);
    total = f == 0 ? s : t.add(total, s);
  }
  ad::VarT<S> result =
      t.scale(total, static_cast<S>(1.0 / (double(m.total_frames) * double(feat_dim))));

  if (!std::isfinite(static_cast<double>(result.val()(0, 0)))) {
    const auto& frames = lmm_head() ? out.lmm : out.post;
    int bad = -1;
    for (int j = 0; j < m.batch() && bad < 0; ++j)
      for (const auto& x : frames)
        if (!x.val().col(j).allFinite()) {
          bad = j;
          break;
        }
    throw NumericError("acoustic loss is non-finite (batch column " + std::to_string(bad) + ")");
  }
  return result;
}

template ad::VarT<float> gumbel_softmax(ad::TapeT<float>&, ad::VarT<float>, double,
                                        std::mt19937_64&);
template ad::VarT<double> gumbel_softmax(ad::TapeT<double>&, ad::VarT<double>, double,
                                         std::mt19937_64&);
template TapMemoryT<float> tap_memory(ad::TapeT<float>&, TapLevel, const TapVarsT<float>&,
                                      nn::EmbeddingT<float>&, double, std::mt19937_64&);
template TapMemoryT<double> tap_memory(ad::TapeT<double>&, TapLevel, const TapVarsT<double>&,
                                       nn::EmbeddingT<double>&, double, std::mt19937_64&);
template struct AcousticHeadT<float>;
template struct AcousticHeadT<double>;

}  // namespace seqfront
