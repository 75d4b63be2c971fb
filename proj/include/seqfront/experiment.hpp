#pragma once
// Experiment orchestration: the toy corpus, cached training stages, and the
// ablation suite. Checkpoints are content-addressed by the exact recipe that
// produced them (stage name, full config, step budget, upstream checkpoint),
// so re-running a finished experiment is a file read. Datasets are never
// cached: rebuilding one from the seed takes milliseconds and is bit-exact.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqfront/checkpoint.hpp"
#include "seqfront/evaluation.hpp"
#include "seqfront/toy_language.hpp"
#include "seqfront/training.hpp"

namespace seqfront {

// Everything that can change the bits of a stage's checkpoint.
std::string stage_key(const std::string& stage, const ExperimentConfig& cfg, int steps,
                      const Checkpoint* init);

struct StageResult {
  Checkpoint last;              // end-of-run parameters + optimizer state
  Checkpoint best;              // by the stage's validation metric
  std::vector<CurveRow> curve;  // empty when served from cache
  bool from_cache = false;
};

// The corpus for cfg, grown from the "toy" substream of the master seed.
toy::ToyCorpus build_corpus(const ExperimentConfig& cfg);

// Frontend-only training (baseline / pre-train), selected by validation
// extra-exclusive PER. Empty cache_dir disables caching.
StageResult run_frontend_stage(const std::string& stage, const ExperimentConfig& cfg,
                               const toy::ToyCorpus& corpus, int steps,
                               const std::string& cache_dir);

// MTL training: frontend plus acoustic head on bs + ts, optionally starting
// from `init` (parameters only; fresh optimizer). `ts` is explicit so callers
// can pass the shuffled or pseudo-labelled variant. Same selection metric.
StageResult run_mtl_stage(const std::string& stage, const ExperimentConfig& cfg,
                          const toy::ToyCorpus& corpus, const Dataset& ts,
                          const Checkpoint* init, int steps, const std::string& cache_dir);

// Fresh model carrying the checkpoint's frontend weights ("ahead." entries
// are ignored).
FrontendModelT<float> frontend_from(const Checkpoint& ck, const ModelConfig& m,
                                    int vocab_size);

// Test-set report for a trained frontend checkpoint.
EvalReport eval_checkpoint(const Checkpoint& ck, const ExperimentConfig& cfg,
                           const toy::ToyCorpus& corpus, const Dataset& data);

struct AblationRow {
  std::string model;
  std::string features;
  double per = 0.0, waccp = 0.0, wacc = 0.0;  // extra-exclusive block
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::map<std::string, EvalReport> full;  // model -> all categories
  std::map<std::string, std::vector<CurveRow>> curves;  // model -> training curve
  double p_mtl_vs_baseline = 1.0;          // paired bootstrap over test words
};

// The ablation suite on one seed: baselines at hidden {128, 256, 384} plus
// the full width, the configured MTL run (pseudo-labelling its TS set first
// when the tap level needs it), and the shuffled-target control.
AblationReport run_ablations(const ExperimentConfig& cfg, const std::string& cache_dir);

}  // namespace seqfront
