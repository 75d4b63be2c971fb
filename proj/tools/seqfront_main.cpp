// Command-line driver: build-data, pretrain, pseudo, train-mtl, evaluate,
// ablate, report. Every invocation resolves one config (file + overrides +
// convenience flags), writes its artifacts into a run directory, and drops a
// manifest.json there that is sufficient to re-run the stage exactly.
//
// Exit codes: 0 ok, 2 config/input error, 3 missing upstream artifact,
// 4 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "seqfront/experiment.hpp"
#include "seqfront/report.hpp"
#include "seqfront/rng.hpp"

namespace fs = std::filesystem;
using namespace seqfront;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Flags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;
  std::optional<std::string> tap;
  std::optional<double> lambda;
  std::optional<std::string> features;
  std::optional<std::string> loss;
  std::string out;
  std::string cache = "cache";

  std::string ckpt;      // pretrain/evaluate input checkpoint
  std::string pseudo;    // pseudo pronunciation file for train-mtl
  std::string hyp;       // hypothesis pron file for evaluate
  std::string run_dir;   // report input
  bool from_scratch = false;
};

ExperimentConfig resolve_config(const Flags& f) {
  std::vector<std::string> overrides;
  if (f.seed) overrides.push_back("seed=" + std::to_string(*f.seed));
  if (f.tap) overrides.push_back("model.tap_level=" + *f.tap);
  if (f.lambda) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "model.lambda=%.17g", *f.lambda);
    overrides.push_back(buf);
  }
  if (f.features) overrides.push_back("features.kind=" + *f.features);
  if (f.loss) overrides.push_back("model.acoustic_loss=" + *f.loss);
  if (f.from_scratch) overrides.push_back("train.from_scratch=true");
  // --set wins over the convenience flags
  overrides.insert(overrides.end(), f.sets.begin(), f.sets.end());
  return f.config_path.empty() ? load_config("", overrides)
                               : load_config_file(f.config_path, overrides);
}

std::string run_dir_for(const std::string& verb, const ExperimentConfig& cfg,
                        const Flags& f) {
  if (!f.out.empty()) return f.out;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%08llx",
                static_cast<unsigned long long>(config_hash(cfg) >> 32));
  return "runs/" + verb + "-s" + std::to_string(cfg.seed) + "-" + buf;
}

void write_manifest(const std::string& dir, const std::string& verb,
                    const ExperimentConfig& cfg, const nlohmann::json& inputs,
                    const std::vector<std::string>& outputs) {
  nlohmann::json m;
  m["verb"] = verb;
  m["version"] = kVersion;
  m["seed"] = cfg.seed;
  m["config"] = nlohmann::json::parse(dump_config(cfg));
  m["config_hash"] = config_hash(cfg);
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
  require(out.good(), "cannot write manifest in " + dir);
  out << m.dump(2) << "\n";
}

Checkpoint need_checkpoint(const std::string& path, const std::string& stage) {
  if (path.empty() || !fs::exists(path))
    throw DependencyError("missing checkpoint '" + path + "'; run the " + stage +
                          " stage first");
  return Checkpoint::load(path);
}

// raw sentence TAB space-joined pron tokens
void write_labelled(const std::string& path, const Dataset& d) {
  std::vector<std::string> lines;
  for (const auto& s : d.samples) {
    require(s.pron.has_value(), "dataset sample without pronunciation");
    lines.push_back(s.text.raw + "\t" + s.pron->format());
  }
  write_lines(path, lines);
}

int cmd_build_data(const Flags& f, const ExperimentConfig& cfg) {
  const std::string dir = run_dir_for("build-data", cfg, f);
  fs::create_directories(dir);
  toy::ToyCorpus corpus = build_corpus(cfg);

  corpus.vocab.save((fs::path(dir) / "vocab.tsv").string());
  corpus.lexicon.save((fs::path(dir) / "lexicon.tsv").string());
  write_labelled((fs::path(dir) / "bs.tsv").string(), corpus.bs);
  write_labelled((fs::path(dir) / "val.tsv").string(), corpus.val);
  write_labelled((fs::path(dir) / "test.tsv").string(), corpus.test);
  std::vector<std::string> ts_lines, refs;
  for (const auto& s : corpus.ts.samples) ts_lines.push_back(s.text.raw);
  for (const auto& s : corpus.test.samples) refs.push_back(s.pron->format());
  write_lines((fs::path(dir) / "ts.txt").string(), ts_lines);
  write_lines((fs::path(dir) / "test_refs.txt").string(), refs);
  write_lines((fs::path(dir) / "words_main.txt").string(), corpus.main_words);
  write_lines((fs::path(dir) / "words_extra.txt").string(), corpus.extra_words);
  write_lines((fs::path(dir) / "words_oov.txt").string(), corpus.oov_words);

  write_manifest(dir, "build-data", cfg, nlohmann::json::object(),
                 {"vocab.tsv", "lexicon.tsv", "bs.tsv", "ts.txt", "val.tsv", "test.tsv",
                  "test_refs.txt", "words_main.txt", "words_extra.txt", "words_oov.txt"});
  std::printf("wrote %s (bs=%zu ts=%zu val=%zu test=%zu, vocab=%d)\n", dir.c_str(),
              corpus.bs.size(), corpus.ts.size(), corpus.val.size(), corpus.test.size(),
              corpus.vocab.size());
  return 0;
}

void write_stage_outputs(const std::string& dir, const std::string& prefix,
                         const StageResult& r) {
  r.best.save((fs::path(dir) / (prefix + ".best.ckpt")).string());
  r.last.save((fs::path(dir) / (prefix + ".last.ckpt")).string());
  if (!r.curve.empty()) {
    const std::string tsv = (fs::path(dir) / "curves.tsv").string();
    write_curves(tsv, r.curve);
    write_line_svg((fs::path(dir) / "curves.svg").string(), prefix + " training curves",
                   "step", "loss / val metric", curve_series(r.curve));
  }
}

int cmd_pretrain(const Flags& f, const ExperimentConfig& cfg) {
  const std::string dir = run_dir_for("pretrain", cfg, f);
  fs::create_directories(dir);
  toy::ToyCorpus corpus = build_corpus(cfg);
  StageResult r =
      run_frontend_stage("pretrain", cfg, corpus, cfg.train.pretrain_steps, f.cache);
  write_stage_outputs(dir, "pretrain", r);
  write_manifest(dir, "pretrain", cfg, nlohmann::json::object(),
                 {"pretrain.best.ckpt", "pretrain.last.ckpt", "curves.tsv", "curves.svg"});
  std::printf("%s: best val metric %.4f at step %d%s\n", dir.c_str(),
              r.best.best_metric, r.best.step, r.from_cache ? " (cached)" : "");
  return 0;
}

int cmd_pseudo(const Flags& f, const ExperimentConfig& cfg) {
  const std::string dir = run_dir_for("pseudo", cfg, f);
  fs::create_directories(dir);
  toy::ToyCorpus corpus = build_corpus(cfg);
  Checkpoint ck = need_checkpoint(f.ckpt, "pretrain");
  FrontendModelT<float> fr = frontend_from(ck, cfg.model, corpus.vocab.size());
  PseudoResult pr = generate_pseudo(fr, corpus.vocab, corpus.ts, cfg.model.beam_size);
  write_labelled((fs::path(dir) / "pseudo.tsv").string(), pr.data);
  write_manifest(dir, "pseudo", cfg, {{"checkpoint", f.ckpt}}, {"pseudo.tsv"});
  std::printf("%s: %zu pseudo labels (%d dropped)\n", dir.c_str(), pr.data.size(),
              pr.dropped);
  return 0;
}

// Rebuilds the pseudo-labelled TS set from a pseudo.tsv written earlier.
Dataset ts_with_pseudo(const toy::ToyCorpus& corpus, const std::string& path) {
  std::map<std::string, PronSequence> by_raw;
  for (const std::string& line : read_lines(path)) {
    auto tab = line.find('\t');
    require(tab != std::string::npos, "pseudo file: line without TAB: '" + line + "'");
    by_raw.emplace(line.substr(0, tab), corpus.vocab.parse(line.substr(tab + 1)));
  }
  Dataset out;
  out.kind = DatasetKind::pseudo_TS;
  out.coverage_vocab = corpus.ts.coverage_vocab;
  for (const auto& s : corpus.ts.samples) {
    auto it = by_raw.find(s.text.raw);
    if (it == by_raw.end()) continue;  // dropped at labelling time
    Utterance u = s;
    u.pron = it->second;
    u.pron_is_pseudo = true;
    out.samples.push_back(std::move(u));
  }
  require(!out.samples.empty(), "pseudo file matches no TS sentence");
  return out;
}

int cmd_train_mtl(const Flags& f, const ExperimentConfig& cfg) {
  const std::string dir = run_dir_for("train-mtl", cfg, f);
  fs::create_directories(dir);
  toy::ToyCorpus corpus = build_corpus(cfg);

  require_config(!cfg.train.from_scratch || cfg.model.tap_level == TapLevel::L1,
                 "from_scratch is only available at tap level L1");
  std::optional<Checkpoint> init;
  if (!cfg.train.from_scratch) {
    if (f.ckpt.empty() || !fs::exists(f.ckpt))
      throw DependencyError("train-mtl needs --ckpt with a pretrain checkpoint "
                            "(stage: pretrain); or --from-scratch at tap L1");
    init = Checkpoint::load(f.ckpt);
  }

  Dataset ts = corpus.ts;
  if (cfg.model.tap_level != TapLevel::L1) {
    if (f.pseudo.empty() || !fs::exists(f.pseudo))
      throw DependencyError("tap levels L2-L5 need --pseudo with pseudo labels "
                            "(stage: pseudo)");
    ts = ts_with_pseudo(corpus, f.pseudo);
  }

  StageResult r = run_mtl_stage("train-mtl", cfg, corpus, ts,
                                init ? &*init : nullptr, cfg.train.mtl_steps, f.cache);
  write_stage_outputs(dir, "mtl", r);
  nlohmann::json inputs;
  if (!f.ckpt.empty()) inputs["checkpoint"] = f.ckpt;
  if (!f.pseudo.empty()) inputs["pseudo"] = f.pseudo;
  write_manifest(dir, "train-mtl", cfg, inputs,
                 {"mtl.best.ckpt", "mtl.last.ckpt", "curves.tsv", "curves.svg"});
  std::printf("%s: best val metric %.4f at step %d%s\n", dir.c_str(),
              r.best.best_metric, r.best.step, r.from_cache ? " (cached)" : "");
  return 0;
}

int cmd_evaluate(const Flags& f, const ExperimentConfig& cfg) {
  const std::string dir = run_dir_for("evaluate", cfg, f);
  fs::create_directories(dir);
  toy::ToyCorpus corpus = build_corpus(cfg);

  EvalReport rep;
  nlohmann::json inputs;
  if (!f.hyp.empty()) {
    std::vector<std::string> lines = read_lines(f.hyp);
    require(lines.size() == corpus.test.size(),
            "hypothesis file has " + std::to_string(lines.size()) + " lines, test set has " +
                std::to_string(corpus.test.size()));
    std::vector<EvalInput> items;
    for (size_t i = 0; i < lines.size(); ++i) {
      const Utterance& u = corpus.test.samples[i];
      items.push_back({*u.pron, corpus.vocab.parse(lines[i]), u.text.words});
    }
    rep = score_dataset(items, corpus.bs.coverage_vocab, corpus.ts.coverage_vocab);
    inputs["hypotheses"] = f.hyp;
  } else {
    Checkpoint ck = need_checkpoint(f.ckpt, "pretrain or train-mtl");
    rep = eval_checkpoint(ck, cfg, corpus, corpus.test);
    inputs["checkpoint"] = f.ckpt;
  }

  const std::string table = render_eval_table(rep);
  std::ofstream(fs::path(dir) / "eval.txt") << table;
  write_eval_tsv((fs::path(dir) / "eval.tsv").string(), rep);
  write_bar_svg((fs::path(dir) / "eval_per.svg").string(), "PER by word category",
                {"PER"}, category_bars({{"eval", rep}}));
  write_manifest(dir, "evaluate", cfg, inputs, {"eval.txt", "eval.tsv", "eval_per.svg"});
  std::fputs(table.c_str(), stdout);
  return 0;
}

void render_ablation_outputs(const std::string& dir, const AblationReport& rep) {
  std::ofstream(fs::path(dir) / "report.txt") << render_ablation_table(rep);
  write_ablation_tsv((fs::path(dir) / "report.tsv").string(), rep);
  std::vector<std::pair<std::string, EvalReport>> reports(rep.full.begin(), rep.full.end());
  std::vector<std::string> names;
  for (const auto& [name, er] : reports) names.push_back(name);
  write_bar_svg((fs::path(dir) / "per_by_category.svg").string(),
                "PER by word category", names, category_bars(reports));
}

int cmd_ablate(const Flags& f, const ExperimentConfig& cfg) {
  const std::string dir = run_dir_for("ablate", cfg, f);
  fs::create_directories(dir);
  AblationReport rep = run_ablations(cfg, f.cache);

  write_ablation_json((fs::path(dir) / "ablation.json").string(), rep);
  render_ablation_outputs(dir, rep);
  std::vector<std::string> outputs = {"ablation.json", "report.txt", "report.tsv",
                                      "per_by_category.svg"};
  std::vector<Series> val_series;
  for (const auto& [name, curve] : rep.curves) {
    if (curve.empty()) continue;
    write_curves((fs::path(dir) / ("curves-" + name + ".tsv")).string(), curve);
    outputs.push_back("curves-" + name + ".tsv");
    Series s;
    s.name = name;
    for (const auto& r : curve)
      if (r.has_val) s.points.push_back({double(r.step), r.val_metric});
    if (!s.points.empty()) val_series.push_back(std::move(s));
  }
  if (!val_series.empty()) {
    write_line_svg((fs::path(dir) / "val_metric.svg").string(),
                   "validation extra-exclusive PER", "step", "PER %", val_series);
    outputs.push_back("val_metric.svg");
  }
  write_manifest(dir, "ablate", cfg, nlohmann::json::object(), outputs);
  std::fputs(render_ablation_table(rep).c_str(), stdout);
  return 0;
}

int cmd_report(const Flags& f, const ExperimentConfig& cfg) {
  const std::string src = f.run_dir.empty() ? run_dir_for("ablate", cfg, f) : f.run_dir;
  const std::string json_path = (fs::path(src) / "ablation.json").string();
  if (!fs::exists(json_path))
    throw DependencyError("no ablation.json in '" + src + "'; run ablate first");
  AblationReport rep = read_ablation_json(json_path);
  const std::string dir = f.out.empty() ? src : f.out;
  fs::create_directories(dir);
  render_ablation_outputs(dir, rep);

  std::vector<std::string> outputs = {"report.txt", "report.tsv", "per_by_category.svg"};
  for (const auto& entry : fs::directory_iterator(src)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("curves-", 0) == 0 && entry.path().extension() == ".tsv") {
      auto rows = read_curves(entry.path().string());
      const std::string stem = entry.path().stem().string();
      write_line_svg((fs::path(dir) / (stem + ".svg")).string(), stem, "step",
                     "loss / val metric", curve_series(rows));
      outputs.push_back(stem + ".svg");
    }
  }
  write_manifest(dir, "report", cfg, {{"run", src}}, outputs);
  std::fputs(render_ablation_table(rep).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seq2seq frontend multi-task training toolkit"};
  app.require_subcommand(1);
  Flags f;

  app.add_option("--config", f.config_path, "JSON config file");
  app.add_option("--set", f.sets, "dotted override, e.g. model.hidden_dim=128")
      ->take_all();
  app.add_option("--seed", f.seed, "master seed");
  app.add_option("--tap", f.tap, "tap level L1..L5");
  app.add_option("--lambda", f.lambda, "acoustic loss weight");
  app.add_option("--features", f.features, "feature kind: mel|mfcc|synthetic");
  app.add_option("--loss", f.loss, "acoustic loss: l1|l2|lmm");
  app.add_option("--out", f.out, "run directory (default runs/<verb>-s<seed>-<hash>)");
  app.add_option("--cache", f.cache, "checkpoint cache directory");

  auto* build = app.add_subcommand("build-data", "generate the toy corpus files");
  auto* pretrain = app.add_subcommand("pretrain", "train the frontend on D_BS");
  auto* pseudo = app.add_subcommand("pseudo", "beam-decode pseudo labels for D_TS");
  pseudo->add_option("--ckpt", f.ckpt, "pretrain checkpoint");
  auto* mtl = app.add_subcommand("train-mtl", "joint frontend + acoustic-head training");
  mtl->add_option("--ckpt", f.ckpt, "pretrain checkpoint to start from");
  mtl->add_option("--pseudo", f.pseudo, "pseudo.tsv from the pseudo stage (taps L2-L5)");
  mtl->add_flag("--from-scratch", f.from_scratch, "skip pre-training (tap L1 only)");
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint or hypothesis file");
  eval->add_option("--ckpt", f.ckpt, "checkpoint to decode");
  eval->add_option("--hyp", f.hyp, "hypothesis pron file (one line per test sentence)");
  auto* ablate = app.add_subcommand("ablate", "baselines, MTL and shuffled control");
  auto* report = app.add_subcommand("report", "re-render tables and plots from a run");
  report->add_option("--run", f.run_dir, "ablate run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ExperimentConfig cfg = resolve_config(f);
    if (build->parsed()) return cmd_build_data(f, cfg);
    if (pretrain->parsed()) return cmd_pretrain(f, cfg);
    if (pseudo->parsed()) return cmd_pseudo(f, cfg);
    if (mtl->parsed()) return cmd_train_mtl(f, cfg);
    if (eval->parsed()) return cmd_evaluate(f, cfg);
    if (ablate->parsed()) return cmd_ablate(f, cfg);
    if (report->parsed()) return cmd_report(f, cfg);
    std::fprintf(stderr, "no command\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const InvalidInputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const DependencyError& e) {
    std::fprintf(stderr, "dependency error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
