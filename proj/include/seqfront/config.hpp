#pragma once

#include "seqfront/common.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace seqfront {

// Which intermediate representation the acoustic decoder attends to.
enum class TapLevel { L1 = 1, L2, L3, L4, L5 };

enum class AcousticLoss { L1, L2, LMM_NLL };

enum class FeatureKind { mel, mfcc, synthetic };

std::string to_string(TapLevel t);
std::string to_string(AcousticLoss l);
std::string to_string(FeatureKind k);
TapLevel tap_level_from_string(const std::string& s);
AcousticLoss acoustic_loss_from_string(const std::string& s);
FeatureKind feature_kind_from_string(const std::string& s);

struct ModelConfig {
  int embed_dim = 256;
  int hidden_dim = 512;
  // Encoder BiLSTM stack depth. The decoders' 2 layers are structural: the
  // attention LSTM plus the decoder LSTM.
  int n_layers = 2;
  double dropout = 0.3;
  int gmm_components = 5;
  int lmm_components = 2;
  double learning_rate = 5e-5;
  int batch_size = 36;
  int beam_size = 30;
  double lambda = 1.0;
  TapLevel tap_level = TapLevel::L1;
  AcousticLoss acoustic_loss = AcousticLoss::L1;

  // knobs the reference hyperparameter list does not pin down
  int attention_dim = 128;       // GMM attention MLP width
  int prenet_units = 256;
  double prenet_dropout = 0.5;
  int postnet_channels = 512;
  int postnet_layers = 5;
  int postnet_kernel = 5;
  double gumbel_temperature = 1.0;
  int max_len_factor = 3;        // inference cap: 3 x input length
  int eval_beam_size = 1;        // decoding width for metric runs; pseudo-labelling uses beam_size

  void validate() const;
};

struct FeatureConfig {
  FeatureKind kind = FeatureKind::synthetic;
  int sample_rate = 24000;
  int n_channels = 80;
  double window = 0.050;  // seconds
  double hop = 0.0125;    // seconds

  static FeatureConfig mel_default();        // 24 kHz / 80 / 50 ms / 12.5 ms
  static FeatureConfig mfcc_default();       // 16 kHz / 13 / 25 ms / 10 ms
  static FeatureConfig synthetic_default();  // 12-dim prototype blocks at 100 fps

  int window_samples() const { return static_cast<int>(window * sample_rate + 0.5); }
  int hop_samples() const { return static_cast<int>(hop * sample_rate + 0.5); }
  double frame_rate() const { return static_cast<double>(sample_rate) / hop_samples(); }

  void validate() const;
};

struct ToyConfig {
  int n_graphemes = 20;
  int n_phones = 30;
  int n_word_types = 2000;
  std::array<int, 2> word_len_range = {3, 8};
  double irregular_fraction = 0.2;
  std::array<double, 3> coverage_fractions = {0.75, 0.20, 0.05};  // main / extra / oov

  int n_bs_sentences = 4000;
  int n_ts_sentences = 3000;
  int n_val_sentences = 400;
  int n_test_sentences = 600;
  std::array<int, 2> sentence_len_range = {2, 5};
  double ts_extra_weight = 0.5;    // extra-exclusive share in TS/test sampling
  double noise_sd = 0.1;           // synthetic feature noise
  std::array<int, 2> phone_duration_range = {2, 3};  // frames per phone

  void validate() const;
};

struct TrainConfig {
  int pretrain_steps = 600;
  int mtl_steps = 600;
  int eval_every = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  bool from_scratch = false;  // MTL from fresh params (tap L1 only)

  void validate() const;
};

struct EvalConfig {
  int n_resamples = 10000;
  double alpha = 0.05;

  void validate() const;
};

struct ExperimentConfig {
  uint64_t seed = 42;
  std::string data_dir = "data";
  std::string out_dir = "runs";
  ModelConfig model;
  FeatureConfig features = FeatureConfig::synthetic_default();
  ToyConfig toy;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

// JSON schema mirrors the struct fields one-to-one; unknown keys are
// rejected. `overrides` are dotted key=value pairs (e.g. model.hidden_dim=128)
// applied on top of the file before parsing.
ExperimentConfig load_config(const std::string& json_text,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig load_config_file(const std::string& path,
                                  const std::vector<std::string>& overrides = {});
std::string dump_config(const ExperimentConfig& cfg);  // canonical JSON, sorted keys

// FNV-1a over the canonical dump; keys content-addressed artifact caching.
uint64_t config_hash(const ExperimentConfig& cfg);
uint64_t fnv1a64(const void* data, size_t len);

}  // namespace seqfront
