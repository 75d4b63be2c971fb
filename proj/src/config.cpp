#include "seqfront/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace seqfront {

using json = nlohmann::json;

std::string to_string(TapLevel t) { return "L" + std::to_string(static_cast<int>(t)); }

std::string to_string(AcousticLoss l) {
  switch (l) {
    case AcousticLoss::L1: return "l1";
    case AcousticLoss::L2: return "l2";
    case AcousticLoss::LMM_NLL: return "lmm";
  }
  throw ConfigError("unreachable acoustic loss");
}

std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::mel: return "mel";
    case FeatureKind::mfcc: return "mfcc";
    case FeatureKind::synthetic: return "synthetic";
  }
  throw ConfigError("unreachable feature kind");
}

TapLevel tap_level_from_string(const std::string& s) {
  for (int i = 1; i <= 5; ++i)
    if (s == "L" + std::to_string(i)) return static_cast<TapLevel>(i);
  throw ConfigError("tap_level must be one of L1..L5, got '" + s + "'");
}

AcousticLoss acoustic_loss_from_string(const std::string& s) {
  if (s == "l1") return AcousticLoss::L1;
  if (s == "l2") return AcousticLoss::L2;
  if (s == "lmm") return AcousticLoss::LMM_NLL;
  throw ConfigError("acoustic_loss must be one of l1|l2|lmm, got '" + s + "'");
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "mel") return FeatureKind::mel;
  if (s == "mfcc") return FeatureKind::mfcc;
  if (s == "synthetic") return FeatureKind::synthetic;
  throw ConfigError("features.kind must be one of mel|mfcc|synthetic, got '" + s + "'");
}

FeatureConfig FeatureConfig::mel_default() {
  return FeatureConfig{FeatureKind::mel, 24000, 80, 0.050, 0.0125};
}

FeatureConfig FeatureConfig::mfcc_default() {
  return FeatureConfig{FeatureKind::mfcc, 16000, 13, 0.025, 0.010};
}

FeatureConfig FeatureConfig::synthetic_default() {
  // prototype blocks carry no waveform; sample_rate/window only define the
  // nominal 100 fps frame rate recorded in feature files
  return FeatureConfig{FeatureKind::synthetic, 16000, 12, 0.010, 0.010};
}

void ModelConfig::validate() const {
  require_config(embed_dim > 0, "model.embed_dim must be positive");
  require_config(hidden_dim > 0, "model.hidden_dim must be positive");
  require_config(hidden_dim % 2 == 0, "model.hidden_dim must be even (bidirectional halves)");
  require_config(n_layers > 0, "model.n_layers must be positive");
  require_config(dropout >= 0.0 && dropout < 1.0, "model.dropout must be in [0, 1)");
  require_config(gmm_components > 0, "model.gmm_components must be positive");
  require_config(lmm_components > 0, "model.lmm_components must be positive");
  require_config(learning_rate > 0.0, "model.learning_rate must be positive");
  require_config(batch_size > 0, "model.batch_size must be positive");
  require_config(beam_size >= 1, "model.beam_size must be >= 1");
  require_config(lambda >= 0.0, "model.lambda must be >= 0");
  require_config(attention_dim > 0, "model.attention_dim must be positive");
  require_config(prenet_units > 0, "model.prenet_units must be positive");
  require_config(prenet_dropout >= 0.0 && prenet_dropout < 1.0,
                 "model.prenet_dropout must be in [0, 1)");
  require_config(postnet_channels > 0, "model.postnet_channels must be positive");
  require_config(postnet_layers > 0, "model.postnet_layers must be positive");
  require_config(postnet_kernel > 0 && postnet_kernel % 2 == 1,
                 "model.postnet_kernel must be odd and positive");
  require_config(gumbel_temperature > 0.0, "model.gumbel_temperature must be positive");
  require_config(max_len_factor >= 1, "model.max_len_factor must be >= 1");
  require_config(eval_beam_size >= 1, "model.eval_beam_size must be >= 1");
}

void FeatureConfig::validate() const {
  require_config(sample_rate > 0, "features.sample_rate must be positive");
  require_config(n_channels > 0, "features.n_channels must be positive");
  require_config(window > 0.0, "features.window must be positive");
  require_config(hop > 0.0, "features.hop must be positive");
  require_config(hop <= window, "features.hop must not exceed features.window");
  require_config(window_samples() >= 1, "features.window shorter than one sample");
  require_config(hop_samples() >= 1, "features.hop shorter than one sample");
}

void ToyConfig::validate() const {
  require_config(n_graphemes >= 2, "toy.n_graphemes must be >= 2");
  require_config(n_phones >= 2, "toy.n_phones must be >= 2");
  require_config(n_word_types >= 10, "toy.n_word_types must be >= 10");
  require_config(word_len_range[0] >= 1 && word_len_range[0] <= word_len_range[1],
                 "toy.word_len_range must satisfy 1 <= lo <= hi");
  require_config(irregular_fraction >= 0.0 && irregular_fraction <= 1.0,
                 "toy.irregular_fraction must be in [0, 1]");
  double fsum = 0.0;
  for (double f : coverage_fractions) {
    require_config(f >= 0.0, "toy.coverage_fractions must be nonnegative");
    fsum += f;
  }
  require_config(std::abs(fsum - 1.0) <= 1e-9, "toy.coverage_fractions must sum to 1");
  require_config(n_bs_sentences > 0, "toy.n_bs_sentences must be positive");
  require_config(n_ts_sentences > 0, "toy.n_ts_sentences must be positive");
  require_config(n_val_sentences > 0, "toy.n_val_sentences must be positive");
  require_config(n_test_sentences > 0, "toy.n_test_sentences must be positive");
  require_config(sentence_len_range[0] >= 1 && sentence_len_range[0] <= sentence_len_range[1],
                 "toy.sentence_len_range must satisfy 1 <= lo <= hi");
  require_config(ts_extra_weight >= 0.0 && ts_extra_weight <= 1.0,
                 "toy.ts_extra_weight must be in [0, 1]");
  require_config(noise_sd >= 0.0, "toy.noise_sd must be >= 0");
  require_config(phone_duration_range[0] >= 1 &&
                     phone_duration_range[0] <= phone_duration_range[1],
                 "toy.phone_duration_range must satisfy 1 <= lo <= hi");
}

void TrainConfig::validate() const {
  require_config(pretrain_steps >= 0, "train.pretrain_steps must be >= 0");
  require_config(mtl_steps >= 0, "train.mtl_steps must be >= 0");
  require_config(eval_every > 0, "train.eval_every must be positive");
  require_config(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "train.adam_beta1 must be in [0, 1)");
  require_config(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "train.adam_beta2 must be in [0, 1)");
  require_config(adam_eps > 0.0, "train.adam_eps must be positive");
  require_config(clip_norm > 0.0, "train.clip_norm must be positive");
}

void EvalConfig::validate() const {
  require_config(n_resamples >= 1, "eval.n_resamples must be >= 1");
  require_config(alpha > 0.0 && alpha < 1.0, "eval.alpha must be in (0, 1)");
}

void ExperimentConfig::validate() const {
  model.validate();
  features.validate();
  toy.validate();
  train.validate();
  eval.validate();
  require_config(!data_dir.empty(), "data_dir must be nonempty");
  require_config(!out_dir.empty(), "out_dir must be nonempty");
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown config key '" + where + item.key() + "'");
  }
}

template <class T>
void get_to_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for config key '") + key + "': " + e.what());
  }
}

void get_enum_if(const json& j, const char* key, TapLevel& out) {
  if (j.contains(key)) out = tap_level_from_string(j.at(key).get<std::string>());
}
void get_enum_if(const json& j, const char* key, AcousticLoss& out) {
  if (j.contains(key)) out = acoustic_loss_from_string(j.at(key).get<std::string>());
}

void parse_model(const json& j, ModelConfig& m) {
  check_keys(j,
             {"embed_dim", "hidden_dim", "n_layers", "dropout", "gmm_components",
              "lmm_components", "learning_rate", "batch_size", "beam_size", "lambda",
              "tap_level", "acoustic_loss", "attention_dim", "prenet_units", "prenet_dropout",
              "postnet_channels", "postnet_layers", "postnet_kernel", "gumbel_temperature",
              "max_len_factor", "eval_beam_size"},
             "model.");
  get_to_if(j, "embed_dim", m.embed_dim);
  get_to_if(j, "hidden_dim", m.hidden_dim);
  get_to_if(j, "n_layers", m.n_layers);
  get_to_if(j, "dropout", m.dropout);
  get_to_if(j, "gmm_components", m.gmm_components);
  get_to_if(j, "lmm_components", m.lmm_components);
  get_to_if(j, "learning_rate", m.learning_rate);
  get_to_if(j, "batch_size", m.batch_size);
  get_to_if(j, "beam_size", m.beam_size);
  get_to_if(j, "lambda", m.lambda);
  get_enum_if(j, "tap_level", m.tap_level);
  get_enum_if(j, "acoustic_loss", m.acoustic_loss);
  get_to_if(j, "attention_dim", m.attention_dim);
  get_to_if(j, "prenet_units", m.prenet_units);
  get_to_if(j, "prenet_dropout", m.prenet_dropout);
  get_to_if(j, "postnet_channels", m.postnet_channels);
  get_to_if(j, "postnet_layers", m.postnet_layers);
  get_to_if(j, "postnet_kernel", m.postnet_kernel);
  get_to_if(j, "gumbel_temperature", m.gumbel_temperature);
  get_to_if(j, "max_len_factor", m.max_len_factor);
  get_to_if(j, "eval_beam_size", m.eval_beam_size);
}

void parse_features(const json& j, FeatureConfig& f) {
  check_keys(j, {"kind", "sample_rate", "n_channels", "window", "hop"}, "features.");
  if (j.contains("kind")) {
    f.kind = feature_kind_from_string(j.at("kind").get<std::string>());
    // a fresh kind resets the per-kind defaults before explicit overrides
    switch (f.kind) {
      case FeatureKind::mel: f = FeatureConfig::mel_default(); break;
      case FeatureKind::mfcc: f = FeatureConfig::mfcc_default(); break;
      case FeatureKind::synthetic: f = FeatureConfig::synthetic_default(); break;
    }
  }
  get_to_if(j, "sample_rate", f.sample_rate);
  get_to_if(j, "n_channels", f.n_channels);
  get_to_if(j, "window", f.window);
  get_to_if(j, "hop", f.hop);
}

void parse_toy(const json& j, ToyConfig& t) {
  check_keys(j,
             {"n_graphemes", "n_phones", "n_word_types", "word_len_range", "irregular_fraction",
              "coverage_fractions", "n_bs_sentences", "n_ts_sentences", "n_val_sentences",
              "n_test_sentences", "sentence_len_range", "ts_extra_weight", "noise_sd",
              "phone_duration_range"},
             "toy.");
  get_to_if(j, "n_graphemes", t.n_graphemes);
  get_to_if(j, "n_phones", t.n_phones);
  get_to_if(j, "n_word_types", t.n_word_types);
  get_to_if(j, "word_len_range", t.word_len_range);
  get_to_if(j, "irregular_fraction", t.irregular_fraction);
  get_to_if(j, "coverage_fractions", t.coverage_fractions);
  get_to_if(j, "n_bs_sentences", t.n_bs_sentences);
  get_to_if(j, "n_ts_sentences", t.n_ts_sentences);
  get_to_if(j, "n_val_sentences", t.n_val_sentences);
  get_to_if(j, "n_test_sentences", t.n_test_sentences);
  get_to_if(j, "sentence_len_range", t.sentence_len_range);
  get_to_if(j, "ts_extra_weight", t.ts_extra_weight);
  get_to_if(j, "noise_sd", t.noise_sd);
  get_to_if(j, "phone_duration_range", t.phone_duration_range);
}

void parse_train(const json& j, TrainConfig& t) {
  check_keys(j,
             {"pretrain_steps", "mtl_steps", "eval_every", "adam_beta1", "adam_beta2",
              "adam_eps", "clip_norm", "from_scratch"},
             "train.");
  get_to_if(j, "pretrain_steps", t.pretrain_steps);
  get_to_if(j, "mtl_steps", t.mtl_steps);
  get_to_if(j, "eval_every", t.eval_every);
  get_to_if(j, "adam_beta1", t.adam_beta1);
  get_to_if(j, "adam_beta2", t.adam_beta2);
  get_to_if(j, "adam_eps", t.adam_eps);
  get_to_if(j, "clip_norm", t.clip_norm);
  get_to_if(j, "from_scratch", t.from_scratch);
}

void parse_eval(const json& j, EvalConfig& e) {
  check_keys(j, {"n_resamples", "alpha"}, "eval.");
  get_to_if(j, "n_resamples", e.n_resamples);
  get_to_if(j, "alpha", e.alpha);
}

json dump_model(const ModelConfig& m) {
  return json{{"embed_dim", m.embed_dim},
              {"hidden_dim", m.hidden_dim},
              {"n_layers", m.n_layers},
              {"dropout", m.dropout},
              {"gmm_components", m.gmm_components},
              {"lmm_components", m.lmm_components},
              {"learning_rate", m.learning_rate},
              {"batch_size", m.batch_size},
              {"beam_size", m.beam_size},
              {"lambda", m.lambda},
              {"tap_level", to_string(m.tap_level)},
              {"acoustic_loss", to_string(m.acoustic_loss)},
              {"attention_dim", m.attention_dim},
              {"prenet_units", m.prenet_units},
              {"prenet_dropout", m.prenet_dropout},
              {"postnet_channels", m.postnet_channels},
              {"postnet_layers", m.postnet_layers},
              {"postnet_kernel", m.postnet_kernel},
              {"gumbel_temperature", m.gumbel_temperature},
              {"max_len_factor", m.max_len_factor},
              {"eval_beam_size", m.eval_beam_size}};
}

}  // namespace

ExperimentConfig load_config(const std::string& json_text,
                             const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like section.key=value, got '" + ov + "'");
    std::string path = ov.substr(0, eq);
    std::string val = ov.substr(eq + 1);
    json parsed = json::parse(val, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) parsed = val;  // bare strings stay strings

    json* cur = &j;
    size_t pos = 0;
    while (true) {
      size_t dot = path.find('.', pos);
      std::string part = path.substr(pos, dot - pos);
      if (part.empty()) throw ConfigError("override has an empty path segment: '" + ov + "'");
      if (dot == std::string::npos) {
        (*cur)[part] = parsed;
        break;
      }
      cur = &(*cur)[part];
      if (!cur->is_object() && !cur->is_null())
        throw ConfigError("override path crosses a non-object: '" + ov + "'");
      if (cur->is_null()) *cur = json::object();
      pos = dot + 1;
    }
  }

  check_keys(j, {"seed", "data_dir", "out_dir", "model", "features", "toy", "train", "eval"},
             "");
  ExperimentConfig cfg;
  get_to_if(j, "seed", cfg.seed);
  get_to_if(j, "data_dir", cfg.data_dir);
  get_to_if(j, "out_dir", cfg.out_dir);
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("features")) parse_features(j.at("features"), cfg.features);
  if (j.contains("toy")) parse_toy(j.at("toy"), cfg.toy);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path,
                                  const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str(), overrides);
}

std::string dump_config(const ExperimentConfig& cfg) {
  json j{{"seed", cfg.seed},
         {"data_dir", cfg.data_dir},
         {"out_dir", cfg.out_dir},
         {"model", dump_model(cfg.model)},
         {"features",
          json{{"kind", to_string(cfg.features.kind)},
               {"sample_rate", cfg.features.sample_rate},
               {"n_channels", cfg.features.n_channels},
               {"window", cfg.features.window},
               {"hop", cfg.features.hop}}},
         {"toy",
          json{{"n_graphemes", cfg.toy.n_graphemes},
               {"n_phones", cfg.toy.n_phones},
               {"n_word_types", cfg.toy.n_word_types},
               {"word_len_range", cfg.toy.word_len_range},
               {"irregular_fraction", cfg.toy.irregular_fraction},
               {"coverage_fractions", cfg.toy.coverage_fractions},
               {"n_bs_sentences", cfg.toy.n_bs_sentences},
               {"n_ts_sentences", cfg.toy.n_ts_sentences},
               {"n_val_sentences", cfg.toy.n_val_sentences},
               {"n_test_sentences", cfg.toy.n_test_sentences},
               {"sentence_len_range", cfg.toy.sentence_len_range},
               {"ts_extra_weight", cfg.toy.ts_extra_weight},
               {"noise_sd", cfg.toy.noise_sd},
               {"phone_duration_range", cfg.toy.phone_duration_range}}},
         {"train",
          json{{"pretrain_steps", cfg.train.pretrain_steps},
               {"mtl_steps", cfg.train.mtl_steps},
               {"eval_every", cfg.train.eval_every},
               {"adam_beta1", cfg.train.adam_beta1},
               {"adam_beta2", cfg.train.adam_beta2},
               {"adam_eps", cfg.train.adam_eps},
               {"clip_norm", cfg.train.clip_norm},
               {"from_scratch", cfg.train.from_scratch}}},
         {"eval", json{{"n_resamples", cfg.eval.n_resamples}, {"alpha", cfg.eval.alpha}}}};
  return j.dump(2);
}

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string s = dump_config(cfg);
  return fnv1a64(s.data(), s.size());
}

}  // namespace seqfront
