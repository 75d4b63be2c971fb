#include "seqfront/experiment.hpp"

#include <algorithm>
#include <filesystem>

#include "seqfront/report.hpp"
#include "seqfront/rng.hpp"

namespace seqfront {

namespace fs = std::filesystem;

std::string stage_key(const std::string& stage, const ExperimentConfig& cfg, int steps,
                      const Checkpoint* init) {
  std::string recipe = stage + "|" + std::to_string(config_hash(cfg)) + "|" +
                       std::to_string(steps);
  if (init) {
    recipe += "|" + std::to_string(init->config_hash) + "." + std::to_string(init->step) +
              "." + std::to_string(init->master_seed);
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(recipe.data(), recipe.size())));
  return stage + "-" + buf;
}

toy::ToyCorpus build_corpus(const ExperimentConfig& cfg) {
  cfg.validate();
  return toy::build_toy_corpus(cfg.toy, cfg.features, rng::derive_seed(cfg.seed, "toy"));
}

namespace {

struct CachePaths {
  std::string last, best, curve;
  bool usable = false;
};

CachePaths cache_paths(const std::string& cache_dir, const std::string& key) {
  CachePaths p;
  if (cache_dir.empty()) return p;
  p.usable = true;
  p.last = (fs::path(cache_dir) / (key + ".last.ckpt")).string();
  p.best = (fs::path(cache_dir) / (key + ".best.ckpt")).string();
  p.curve = (fs::path(cache_dir) / (key + ".curve.tsv")).string();
  return p;
}

std::optional<StageResult> try_cache(const CachePaths& p, uint64_t want_hash) {
  if (!p.usable || !fs::exists(p.last) || !fs::exists(p.best)) return std::nullopt;
  StageResult r;
  r.last = Checkpoint::load(p.last);
  r.best = Checkpoint::load(p.best);
  require(r.last.config_hash == want_hash && r.best.config_hash == want_hash,
          "stage cache: checkpoint was built from a different config");
  if (fs::exists(p.curve)) r.curve = read_curves(p.curve);
  r.from_cache = true;
  return r;
}

void store_cache(const CachePaths& p, const StageResult& r) {
  if (!p.usable) return;
  fs::create_directories(fs::path(p.last).parent_path());
  r.last.save(p.last);
  r.best.save(p.best);
  write_curves(p.curve, r.curve);
}

StageResult finish(TrainResult&& tr, const Vocab& v) {
  StageResult r;
  r.last = std::move(tr.last);
  r.best = std::move(tr.best);
  r.curve = std::move(tr.curve);
  r.last.vocab_hash = v.hash();
  r.best.vocab_hash = v.hash();
  return r;
}

}  // namespace

StageResult run_frontend_stage(const std::string& stage, const ExperimentConfig& cfg,
                               const toy::ToyCorpus& corpus, int steps,
                               const std::string& cache_dir) {
  const auto paths = cache_paths(cache_dir, stage_key(stage, cfg, steps, nullptr));
  if (auto hit = try_cache(paths, config_hash(cfg))) return std::move(*hit);

  FrontendModelT<float> fr(cfg.model, corpus.vocab.size(), cfg.seed);
  Trainer tr(fr, nullptr, corpus.vocab, cfg);
  ValSelector sel;
  sel.val = &corpus.val;
  sel.bs_cover = &corpus.bs.coverage_vocab;
  sel.ts_cover = &corpus.ts.coverage_vocab;
  sel.by_per = true;
  StageResult r = finish(train_loop(tr, corpus.bs, nullptr, sel, steps, cfg, nullptr),
                         corpus.vocab);
  store_cache(paths, r);
  return r;
}

StageResult run_mtl_stage(const std::string& stage, const ExperimentConfig& cfg,
                          const toy::ToyCorpus& corpus, const Dataset& ts,
                          const Checkpoint* init, int steps, const std::string& cache_dir) {
  require(ts.size() > 0, "mtl stage: empty TS set");
  const auto paths = cache_paths(cache_dir, stage_key(stage, cfg, steps, init));
  if (auto hit = try_cache(paths, config_hash(cfg))) return std::move(*hit);

  FrontendModelT<float> fr(cfg.model, corpus.vocab.size(), cfg.seed);
  const int feat_dim = static_cast<int>(ts.samples.front().features->dim());
  AcousticHeadT<float> head(cfg.model, feat_dim, tap_memory_dim(cfg.model), cfg.seed);
  Trainer tr(fr, &head, corpus.vocab, cfg);
  if (init) {
    Checkpoint fe = *init;
    fe.drop_namespace("ahead.");
    ad::ParamRefs<float> fp;
    fr.collect(fp);
    unpack_params(fe, fp);
  }
  ValSelector sel;
  sel.val = &corpus.val;
  sel.bs_cover = &corpus.bs.coverage_vocab;
  sel.ts_cover = &ts.coverage_vocab;
  sel.by_per = true;
  StageResult r =
      finish(train_loop(tr, corpus.bs, &ts, sel, steps, cfg, nullptr), corpus.vocab);
  store_cache(paths, r);
  return r;
}

FrontendModelT<float> frontend_from(const Checkpoint& ck, const ModelConfig& m,
                                    int vocab_size) {
  FrontendModelT<float> fr(m, vocab_size, ck.master_seed);
  Checkpoint fe = ck;
  fe.drop_namespace("ahead.");
  ad::ParamRefs<float> fp;
  fr.collect(fp);
  unpack_params(fe, fp);
  return fr;
}

EvalReport eval_checkpoint(const Checkpoint& ck, const ExperimentConfig& cfg,
                           const toy::ToyCorpus& corpus, const Dataset& data) {
  require(ck.vocab_hash == 0 || ck.vocab_hash == corpus.vocab.hash(),
          "eval: checkpoint vocabulary differs from the corpus");
  FrontendModelT<float> fr = frontend_from(ck, cfg.model, corpus.vocab.size());
  return decode_and_score(fr, corpus.vocab, data, corpus.bs.coverage_vocab,
                          corpus.ts.coverage_vocab, cfg.model.eval_beam_size);
}

namespace {

AblationRow make_row(const std::string& model, const ExperimentConfig& cfg,
                     const EvalReport& rep) {
  AblationRow row;
  row.model = model;
  row.features = to_string(cfg.features.kind);
  auto it = rep.by_category.find(WordCategory::extra_exclusive);
  const CategoryStats& s = it != rep.by_category.end() ? it->second : rep.all;
  row.per = s.per();
  row.waccp = s.waccp();
  row.wacc = s.wacc();
  return row;
}

}  // namespace

AblationReport run_ablations(const ExperimentConfig& cfg, const std::string& cache_dir) {
  cfg.validate();
  const toy::ToyCorpus corpus = build_corpus(cfg);
  const int total_steps = cfg.train.pretrain_steps + cfg.train.mtl_steps;

  AblationReport rep;
  std::vector<int> dims = {128, 256, 384};
  if (std::find(dims.begin(), dims.end(), cfg.model.hidden_dim) == dims.end())
    dims.push_back(cfg.model.hidden_dim);
  std::sort(dims.begin(), dims.end(), std::greater<int>());

  EvalReport base_full;
  for (int h : dims) {
    auto c = cfg;
    c.model.hidden_dim = h;
    auto r = run_frontend_stage("baseline", c, corpus, total_steps, cache_dir);
    EvalReport er = eval_checkpoint(r.best, c, corpus, corpus.test);
    const std::string name = "baseline-h" + std::to_string(h);
    rep.rows.push_back(make_row(name, c, er));
    rep.full[name] = er;
    rep.curves[name] = std::move(r.curve);
    if (h == cfg.model.hidden_dim) base_full = std::move(er);
  }

  // MTL: pre-train (unless from scratch at tap L1), pseudo-label when the
  // tap level consumes decoder-side variables, then the joint run.
  const bool from_scratch = cfg.train.from_scratch;
  require_config(!from_scratch || cfg.model.tap_level == TapLevel::L1,
                 "from_scratch only makes sense at tap level 1");
  StageResult pre;
  if (!from_scratch)
    pre = run_frontend_stage("pretrain", cfg, corpus, cfg.train.pretrain_steps, cache_dir);

  Dataset ts_mtl = corpus.ts;
  if (cfg.model.tap_level != TapLevel::L1) {
    FrontendModelT<float> fr = frontend_from(pre.last, cfg.model, corpus.vocab.size());
    ts_mtl = generate_pseudo(fr, corpus.vocab, corpus.ts, cfg.model.beam_size).data;
  }

  const Checkpoint* init = from_scratch ? nullptr : &pre.last;
  const int mtl_steps = from_scratch ? total_steps : cfg.train.mtl_steps;
  auto mtl = run_mtl_stage("mtl", cfg, corpus, ts_mtl, init, mtl_steps, cache_dir);
  EvalReport mtl_eval = eval_checkpoint(mtl.best, cfg, corpus, corpus.test);
  const std::string mtl_name = "mtl-" + to_string(cfg.model.tap_level);
  rep.rows.push_back(make_row(mtl_name, cfg, mtl_eval));
  rep.full[mtl_name] = mtl_eval;
  rep.curves[mtl_name] = std::move(mtl.curve);

  Dataset shuffled = shuffle_targets(ts_mtl, rng::derive_seed(cfg.seed, "shuffle"));
  auto shuf = run_mtl_stage("mtl-shuffled", cfg, corpus, shuffled, init, mtl_steps, cache_dir);
  EvalReport shuf_eval = eval_checkpoint(shuf.best, cfg, corpus, corpus.test);
  rep.rows.push_back(make_row("shuffled-control", cfg, shuf_eval));
  rep.full["shuffled-control"] = shuf_eval;
  rep.curves["shuffled-control"] = std::move(shuf.curve);

  auto outcomes = [](const EvalReport& r) {
    std::vector<double> o;
    for (const auto& w : r.words) o.push_back(double(w.edits));
    return o;
  };
  rep.p_mtl_vs_baseline =
      paired_bootstrap(outcomes(mtl_eval), outcomes(base_full), cfg.eval.n_resamples,
                       rng::derive_seed(cfg.seed, "bootstrap"));
  return rep;
}

}  // namespace seqfront
