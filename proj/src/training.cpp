#include "seqfront/training.hpp"

#include "seqfront/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace seqfront {

void Adam::init(const ad::ParamRefs<float>& ps) {
  t = 0;
  m.clear();
  v.clear();
  for (const auto* p : ps) {
    m.push_back(MatF::Zero(p->value.rows(), p->value.cols()));
    v.push_back(MatF::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(const ad::ParamRefs<float>& ps) {
  require(m.size() == ps.size(), "Adam: parameter list changed size");
  double sq = 0.0;
  for (const auto* p : ps) sq += p->grad.cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  const float scale = (clip > 0.0 && norm > clip) ? float(clip / norm) : 1.0f;

  ++t;
  const float b1 = float(beta1), b2 = float(beta2);
  const float c1 = 1.0f - std::pow(b1, float(t));
  const float c2 = 1.0f - std::pow(b2, float(t));
  for (size_t i = 0; i < ps.size(); ++i) {
    const MatF g = ps[i]->grad * scale;
    m[i] = b1 * m[i] + (1.0f - b1) * g;
    v[i] = b2 * v[i] + (1.0f - b2) * g.cwiseProduct(g);
    ps[i]->value -=
        (float(lr) * (m[i] / c1).array() / ((v[i] / c2).array().sqrt() + float(eps))).matrix();
  }
}

void Adam::pack(Checkpoint& ck, const ad::ParamRefs<float>& ps) const {
  require(m.size() == ps.size(), "Adam: moments not initialized for this parameter list");
  ck.opt_step = t;
  for (size_t i = 0; i < ps.size(); ++i) {
    ck.set("adam.m." + ps[i]->name, m[i]);
    ck.set("adam.v." + ps[i]->name, v[i]);
  }
}

void Adam::unpack(const Checkpoint& ck, const ad::ParamRefs<float>& ps) {
  init(ps);
  t = ck.opt_step;
  for (size_t i = 0; i < ps.size(); ++i) {
    const MatF* mm = ck.find("adam.m." + ps[i]->name);
    const MatF* vv = ck.find("adam.v." + ps[i]->name);
    require(mm && vv, "checkpoint: missing optimizer state for " + ps[i]->name);
    require(mm->rows() == m[i].rows() && mm->cols() == m[i].cols(),
            "checkpoint: optimizer shape mismatch for " + ps[i]->name);
    m[i] = *mm;
    v[i] = *vv;
  }
}

EpochSampler::EpochSampler(int n, uint64_t master, std::string name)
    : n_(n), master_(master), name_(std::move(name)) {}

int EpochSampler::at(long draw) {
  require(n_ > 0, "EpochSampler: empty source");
  require(draw >= 0, "EpochSampler: negative draw index");
  const long epoch = draw / n_;
  if (epoch != epoch_) {
    perm_.resize(n_);
    for (int i = 0; i < n_; ++i) perm_[i] = i;
    auto g = rng::substream(master_, name_, static_cast<uint64_t>(epoch));
    for (int i = n_ - 1; i > 0; --i)
      std::swap(perm_[i], perm_[rng::below(g, static_cast<uint64_t>(i) + 1)]);
    epoch_ = epoch;
  }
  return perm_[draw % n_];
}

HalfHalfComposer::HalfHalfComposer(int n_bs, int n_ts, int batch_size, uint64_t master)
    : half_(batch_size / 2),
      bs_(n_bs, master, "compose.bs"),
      ts_(n_ts, master, "compose.ts") {
  require_config(batch_size >= 2 && batch_size % 2 == 0,
                 "batch_size must be even for half/half composition");
  require(n_bs > 0 && n_ts > 0, "HalfHalfComposer: both sources must be nonempty");
}

HalfHalfComposer::Batch HalfHalfComposer::at_step(long step) {
  require(step >= 0, "HalfHalfComposer: negative step");
  Batch b;
  for (int i = 0; i < half_; ++i) {
    b.bs.push_back(bs_.at(step * half_ + i));
    b.ts.push_back(ts_.at(step * half_ + i));
  }
  return b;
}

ad::VarT<float> pron_loss(ad::TapeT<float>& t, FrontendModelT<float>& fr, const Vocab& v,
                          const std::vector<const Utterance*>& samples, RunMode mode,
                          std::mt19937_64* drop_rng) {
  require(!samples.empty(), "pron_loss: empty batch");
  std::vector<const TextSequence*> texts;
  std::vector<const PronSequence*> prons;
  for (const auto* u : samples) {
    require(u->pron.has_value(), "pron_loss: sample without pronunciation");
    texts.push_back(&u->text);
    prons.push_back(&*u->pron);
  }
  TokenBatch chars = make_char_batch(texts);
  TargetBatch targets = make_target_batch(prons, v);
  return fr.forward_teacher_forced(t, chars, targets, mode, drop_rng).loss;
}

Trainer::Trainer(FrontendModelT<float>& fr, AcousticHeadT<float>* head, const Vocab& v,
                 const ExperimentConfig& cfg)
    : fr_(fr), head_(head), vocab_(v), cfg_(cfg) {
  cfg_.validate();
  fr_.collect(params_);
  if (head_) head_->collect(params_);
  opt_.lr = cfg_.model.learning_rate;
  opt_.beta1 = cfg_.train.adam_beta1;
  opt_.beta2 = cfg_.train.adam_beta2;
  opt_.eps = cfg_.train.adam_eps;
  opt_.clip = cfg_.train.clip_norm;
  opt_.init(params_);
}

namespace {

// The L_a branch: tap the frontend run on the TS half, decode the acoustic
// features from it. Level 1 only needs the encoder; levels 2-5 teacher-force
// the pronunciation decoder with the pseudo labels (inputs only; their
// cross entropy never joins the objective).
ad::VarT<float> acoustic_branch(ad::TapeT<float>& t, FrontendModelT<float>& fr,
                                AcousticHeadT<float>& head, const Vocab& v,
                                const std::vector<const Utterance*>& ts_half,
                                const ExperimentConfig& cfg, long step_index) {
  std::vector<const AcousticSequence*> feats;
  std::vector<const TextSequence*> texts;
  for (const auto* u : ts_half) {
    require(u->features.has_value(), "acoustic branch: sample without features");
    feats.push_back(&*u->features);
    texts.push_back(&u->text);
  }
  FrameBatch frames = make_frame_batch(feats);
  TokenBatch chars = make_char_batch(texts);
  auto drop = rng::substream(cfg.seed, "train.dropout_ts", step_index);

  TapVarsT<float> taps;
  if (cfg.model.tap_level == TapLevel::L1) {
    EncodedT<float> enc = fr.encode(t, chars, RunMode::train, &drop);
    taps.e = enc.e;
    taps.e_mask = chars.mask;
  } else {
    std::vector<const PronSequence*> prons;
    for (const auto* u : ts_half) {
      require(u->pron.has_value(), "acoustic branch: tap levels 2-5 need pseudo labels");
      prons.push_back(&*u->pron);
    }
    TargetBatch targets = make_target_batch(prons, v);
    taps = fr.forward_teacher_forced(t, chars, targets, RunMode::train, &drop).taps;
  }

  auto gumbel = rng::substream(cfg.seed, "train.gumbel", step_index);
  TapMemoryT<float> memory =
      tap_memory(t, cfg.model.tap_level, taps, fr.pron_embed, cfg.model.gumbel_temperature,
                 gumbel);
  auto prenet = rng::substream(cfg.seed, "train.prenet", step_index);
  AcousticForwardT<float> out = head.forward(t, memory, frames, prenet);
  return head.loss(t, out, frames);
}

}  // namespace

StepLosses Trainer::step(const std::vector<const Utterance*>& bs_half,
                         const std::vector<const Utterance*>& ts_half, long step_index) {
  StepLosses out;
  for (auto* p : params_) p->zero_grad();

  ad::TapeT<float> t;
  auto drop = rng::substream(cfg_.seed, "train.dropout", step_index);
  ad::VarT<float> lp = pron_loss(t, fr_, vocab_, bs_half, RunMode::train, &drop);
  out.lp = lp.val()(0, 0);

  ad::VarT<float> total = lp;
  if (head_ && cfg_.model.lambda > 0.0 && !ts_half.empty()) {
    ad::VarT<float> la = acoustic_branch(t, fr_, *head_, vocab_, ts_half, cfg_, step_index);
    out.la = la.val()(0, 0);
    total = t.add(lp, t.scale(la, float(cfg_.model.lambda)));
  }
  out.lmtl = total.val()(0, 0);
  if (!std::isfinite(out.lmtl)) {
    const std::string sample = !std::isfinite(out.lp) || ts_half.empty()
                                   ? bs_half.front()->text.raw
                                   : ts_half.front()->text.raw;
    throw NumericError("non-finite loss at step " + std::to_string(step_index) +
                       " (L_p=" + std::to_string(out.lp) + ", L_a=" + std::to_string(out.la) +
                       ", first sample '" + sample + "')");
  }

  t.backward(total);
  opt_.step(params_);
  return out;
}

double Trainer::validation_loss(const Dataset& val) {
  require(val.size() > 0, "validation_loss: empty set");
  const size_t chunk = static_cast<size_t>(std::max(1, cfg_.model.batch_size));
  double weighted = 0.0;
  long tokens = 0;
  for (size_t i = 0; i < val.size(); i += chunk) {
    std::vector<const TextSequence*> texts;
    std::vector<const PronSequence*> prons;
    for (size_t j = i; j < std::min(val.size(), i + chunk); ++j) {
      require(val.samples[j].pron.has_value(), "validation_loss: sample without reference");
      texts.push_back(&val.samples[j].text);
      prons.push_back(&*val.samples[j].pron);
    }
    ad::TapeT<float> t;
    TokenBatch chars = make_char_batch(texts);
    TargetBatch targets = make_target_batch(prons, vocab_);
    auto fwd = fr_.forward_teacher_forced(t, chars, targets, RunMode::eval, nullptr);
    weighted += double(fwd.loss.val()(0, 0)) * double(fwd.total_tokens);
    tokens += fwd.total_tokens;
  }
  return weighted / double(tokens);
}

void write_curves(const std::string& path, const std::vector<CurveRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), "write_curves: cannot open " + path);
  f << "step\tL_p\tL_a\tL_MTL\tval_metric\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld\t%.9g\t%.9g\t%.9g", r.step, r.lp, r.la, r.lmtl);
    f << buf;
    if (r.has_val) {
      std::snprintf(buf, sizeof(buf), "\t%.9g", r.val_metric);
      f << buf;
    } else {
      f << "\t";
    }
    f << "\n";
  }
  require(f.good(), "write_curves: short write to " + path);
}

EvalReport decode_and_score(FrontendModelT<float>& fr, const Vocab& v, const Dataset& data,
                            const std::set<std::string>& bs_cover,
                            const std::set<std::string>& ts_cover, int beam_size) {
  require(data.size() > 0, "decode_and_score: empty set");
  const auto allowed = FrontendModelT<float>::allowed_output_ids(v);
  std::vector<EvalInput> items;
  const size_t chunk = 64;
  for (size_t i = 0; i < data.size(); i += chunk) {
    std::vector<const TextSequence*> texts;
    for (size_t j = i; j < std::min(data.size(), i + chunk); ++j)
      texts.push_back(&data.samples[j].text);
    std::vector<Hypothesis> hyps;
    if (beam_size <= 1) {
      hyps = fr.greedy_decode(texts, allowed);
    } else {
      for (const auto* txt : texts)
        hyps.push_back(fr.beam_search(txt->chars, beam_size, allowed).front());
    }
    for (size_t j = 0; j < texts.size(); ++j) {
      const Utterance& u = data.samples[i + j];
      require(u.pron.has_value(), "decode_and_score: sample without reference");
      items.push_back({*u.pron, hypothesis_to_pron(hyps[j], v), u.text.words});
    }
  }
  return score_dataset(items, bs_cover, ts_cover);
}

namespace {

double selector_metric(Trainer& tr, FrontendModelT<float>& fr, const Vocab& v,
                       const ValSelector& sel, int beam_size) {
  require(sel.val != nullptr, "train_loop: no validation set");
  if (!sel.by_per) return tr.validation_loss(*sel.val);
  static const std::set<std::string> kEmpty;
  const auto& bsc = sel.bs_cover ? *sel.bs_cover : kEmpty;
  const auto& tsc = sel.ts_cover ? *sel.ts_cover : kEmpty;
  EvalReport rep = decode_and_score(fr, v, *sel.val, bsc, tsc, beam_size);
  auto it = rep.by_category.find(WordCategory::extra_exclusive);
  return it != rep.by_category.end() ? it->second.per() : rep.all.per();
}

}  // namespace

TrainResult train_loop(Trainer& tr, const Dataset& bs, const Dataset* ts,
                       const ValSelector& sel, int steps, const ExperimentConfig& cfg,
                       const Checkpoint* resume) {
  require(steps >= 1, "train_loop: need at least one step");
  require(bs.size() > 0, "train_loop: empty training set");
  const bool mixed = ts != nullptr && ts->size() > 0;
  const int batch = cfg.model.batch_size;
  require_config(batch >= 2 && batch % 2 == 0, "batch_size must be even");

  EpochSampler bs_stream(static_cast<int>(bs.size()), cfg.seed, "compose.bs");
  EpochSampler ts_stream(mixed ? static_cast<int>(ts->size()) : 1, cfg.seed, "compose.ts");
  const int bs_per_step = mixed ? batch / 2 : batch;
  const int ts_per_step = mixed ? batch / 2 : 0;

  const uint64_t cfg_hash = config_hash(cfg);
  long start = 0;
  if (resume) {
    require(resume->config_hash == cfg_hash, "resume: checkpoint config differs from the run");
    require(resume->step <= steps, "resume: checkpoint is past this run's step budget");
    unpack_params(*resume, tr.params());
    tr.opt().unpack(*resume, tr.params());
    start = resume->step;
  }

  TrainResult out;
  double best = std::numeric_limits<double>::infinity();
  auto snapshot = [&](long completed, double best_metric) {
    Checkpoint ck;
    ck.config_hash = cfg_hash;
    ck.master_seed = cfg.seed;
    ck.step = static_cast<int>(completed);
    ck.lambda = cfg.model.lambda;
    ck.tap_level = cfg.model.tap_level;
    ck.best_metric = best_metric;
    pack_params(ck, tr.params());
    tr.opt().pack(ck, tr.params());
    return ck;
  };

  for (long s = start; s < steps; ++s) {
    std::vector<const Utterance*> bs_half, ts_half;
    for (int i = 0; i < bs_per_step; ++i)
      bs_half.push_back(&bs.samples[bs_stream.at(s * bs_per_step + i)]);
    for (int i = 0; i < ts_per_step; ++i)
      ts_half.push_back(&ts->samples[ts_stream.at(s * ts_per_step + i)]);

    StepLosses losses = tr.step(bs_half, ts_half, s);
    CurveRow row;
    row.step = s + 1;
    row.lp = losses.lp;
    row.la = losses.la;
    row.lmtl = losses.lmtl;

    if ((s + 1) % cfg.train.eval_every == 0 || s + 1 == steps) {
      const double metric =
          selector_metric(tr, tr.frontend(), tr.vocab(), sel, cfg.model.eval_beam_size);
      require(std::isfinite(metric), "train_loop: non-finite validation metric");
      row.val_metric = metric;
      row.has_val = true;
      if (metric < best) {
        best = metric;
        out.best = snapshot(s + 1, best);
      }
    }
    out.curve.push_back(row);
  }
  out.best_val = best;
  out.last = snapshot(steps, best);
  if (out.best.tensors.empty()) out.best = out.last;
  return out;
}

TrainResult pretrain(FrontendModelT<float>& fr, const Vocab& v, const Dataset& bs,
                     const Dataset& val, const ExperimentConfig& cfg) {
  require(bs.kind == DatasetKind::BS, "pretrain: dataset kind must be BS");
  Trainer tr(fr, nullptr, v, cfg);
  ValSelector sel;
  sel.val = &val;
  sel.by_per = false;
  return train_loop(tr, bs, nullptr, sel, cfg.train.pretrain_steps, cfg, nullptr);
}

PseudoResult generate_pseudo(FrontendModelT<float>& fr, const Vocab& v, const Dataset& ts,
                             int beam_size) {
  require(ts.kind == DatasetKind::TS, "generate_pseudo: dataset kind must be TS");
  require(ts.size() > 0, "generate_pseudo: empty TS set");
  require(beam_size >= 1, "generate_pseudo: beam size must be positive");

  PseudoResult out;
  out.data.kind = DatasetKind::pseudo_TS;
  out.data.coverage_vocab = ts.coverage_vocab;
  const auto allowed = FrontendModelT<float>::allowed_output_ids(v);
  for (const auto& s : ts.samples) {
    require(s.features.has_value(), "generate_pseudo: TS sample without features");
    bool ok = false;
    try {
      auto hyps = fr.beam_search(s.text.chars, beam_size, allowed);
      if (!hyps.empty() && !hyps.front().ids.empty()) {
        Utterance u = s;
        u.pron = hypothesis_to_pron(hyps.front(), v);
        u.pron_is_pseudo = true;
        out.data.samples.push_back(std::move(u));
        ok = true;
      }
    } catch (const Error&) {
    }
    if (!ok) {
      ++out.dropped;
      std::fprintf(stderr, "[pseudo] dropped undecodable sample '%s'\n", s.text.raw.c_str());
    }
  }
  if (double(out.dropped) > 0.05 * double(ts.size()))
    throw NumericError("pseudo labelling dropped " + std::to_string(out.dropped) + " of " +
                       std::to_string(ts.size()) + " samples");
  return out;
}

}  // namespace seqfront
