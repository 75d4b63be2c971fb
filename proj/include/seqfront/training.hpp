#pragma once

#include "seqfront/acoustic_head.hpp"
#include "seqfront/checkpoint.hpp"
#include "seqfront/evaluation.hpp"
#include "seqfront/frontend.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace seqfront {

// Adam with global-norm gradient clipping. Moments align with the parameter
// list order, so the list must be stable across steps and checkpoints.
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, clip = 1.0;
  int t = 0;
  std::vector<MatF> m, v;

  void init(const ad::ParamRefs<float>& ps);
  void step(const ad::ParamRefs<float>& ps);
  void pack(Checkpoint& ck, const ad::ParamRefs<float>& ps) const;
  void unpack(const Checkpoint& ck, const ad::ParamRefs<float>& ps);
};

// Epoch-shuffled without-replacement draws, stateless in the draw counter:
// draw c lands in epoch c/n at slot c%n of that epoch's permutation. Any
// training step can be replayed without threading sampler state around.
class EpochSampler {
 public:
  EpochSampler(int n, uint64_t master, std::string name);
  int at(long draw);
  int size() const { return n_; }

 private:
  int n_ = 0;
  long epoch_ = -1;
  uint64_t master_ = 0;
  std::string name_;
  std::vector<int> perm_;
};

// Half/half batch composition over the two sources; each half is an
// independent exhaustive epoch stream.
class HalfHalfComposer {
 public:
  // batch_size must be even (ConfigError otherwise)
  HalfHalfComposer(int n_bs, int n_ts, int batch_size, uint64_t master);

  struct Batch {
    std::vector<int> bs, ts;
  };
  Batch at_step(long step);
  int half() const { return half_; }

 private:
  int half_ = 0;
  EpochSampler bs_, ts_;
};

// Teacher-forced token cross entropy over explicit samples (the L_p term).
// Every sample needs a pronunciation.
ad::VarT<float> pron_loss(ad::TapeT<float>& t, FrontendModelT<float>& fr, const Vocab& v,
                          const std::vector<const Utterance*>& samples, RunMode mode,
                          std::mt19937_64* drop_rng);

struct StepLosses {
  double lp = 0.0, la = 0.0, lmtl = 0.0;
};

// One optimizer step of L_MTL = L_p + lambda * L_a (Eq. 6 shape). The BS
// half feeds only L_p, the TS half only L_a; with lambda = 0, no head, or an
// empty TS half the acoustic branch is skipped outright and the step is
// bit-identical to single-task training. All per-step randomness comes from
// named substreams of (seed, step_index), which is what makes checkpoint
// resume exact.
class Trainer {
 public:
  Trainer(FrontendModelT<float>& fr, AcousticHeadT<float>* head, const Vocab& v,
          const ExperimentConfig& cfg);

  StepLosses step(const std::vector<const Utterance*>& bs_half,
                  const std::vector<const Utterance*>& ts_half, long step_index);

  double validation_loss(const Dataset& val);  // mean teacher-forced L_p, eval mode

  ad::ParamRefs<float>& params() { return params_; }
  Adam& opt() { return opt_; }
  FrontendModelT<float>& frontend() { return fr_; }
  const Vocab& vocab() const { return vocab_; }

 private:
  FrontendModelT<float>& fr_;
  AcousticHeadT<float>* head_;
  const Vocab& vocab_;
  ExperimentConfig cfg_;
  ad::ParamRefs<float> params_;
  Adam opt_;
};

struct CurveRow {
  long step = 0;
  double lp = 0.0, la = 0.0, lmtl = 0.0;
  double val_metric = 0.0;
  bool has_val = false;
};

// step TAB L_p TAB L_a TAB L_MTL TAB val metric (blank when absent)
void write_curves(const std::string& path, const std::vector<CurveRow>& rows);

struct TrainResult {
  Checkpoint best, last;
  std::vector<CurveRow> curve;
  double best_val = 0.0;
};

// Decodes the val/test set (greedy when beam_size <= 1, else beam top-1)
// and scores it against references.
EvalReport decode_and_score(FrontendModelT<float>& fr, const Vocab& v, const Dataset& data,
                            const std::set<std::string>& bs_cover,
                            const std::set<std::string>& ts_cover, int beam_size = 1);

struct ValSelector {
  const Dataset* val = nullptr;              // pron-labelled
  const std::set<std::string>* bs_cover = nullptr;
  const std::set<std::string>* ts_cover = nullptr;
  bool by_per = false;  // extra-exclusive PER when true, mean val L_p otherwise
};

// Shared pretrain / MTL loop: runs `steps` optimizer steps, validates every
// eval_every, tracks the best checkpoint by the selector's metric (lower is
// better). `resume` restores parameters, optimizer state and step counter.
TrainResult train_loop(Trainer& tr, const Dataset& bs, const Dataset* ts,
                       const ValSelector& sel, int steps, const ExperimentConfig& cfg,
                       const Checkpoint* resume);

// Frontend-only training on D_BS, selected by validation L_p.
TrainResult pretrain(FrontendModelT<float>& fr, const Vocab& v, const Dataset& bs,
                     const Dataset& val, const ExperimentConfig& cfg);

struct PseudoResult {
  Dataset data;  // kind pseudo_TS; every sample has text, pseudo pron, features
  int dropped = 0;
};

// Beam-decodes pseudo pronunciations for a TS set (top-1 of beam_size).
// Samples that fail to decode are dropped; more than 5% drops aborts.
PseudoResult generate_pseudo(FrontendModelT<float>& fr, const Vocab& v, const Dataset& ts,
                             int beam_size);

}  // namespace seqfront
