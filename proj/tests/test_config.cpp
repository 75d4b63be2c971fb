#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "seqfront/config.hpp"

using namespace seqfront;

TEST_CASE("defaults carry the reference hyperparameters") {
  ExperimentConfig cfg = load_config("{}");
  CHECK(cfg.model.embed_dim == 256);
  CHECK(cfg.model.hidden_dim == 512);
  CHECK(cfg.model.n_layers == 2);
  CHECK(cfg.model.dropout == 0.3);
  CHECK(cfg.model.gmm_components == 5);
  CHECK(cfg.model.lmm_components == 2);
  CHECK(cfg.model.learning_rate == 5e-5);
  CHECK(cfg.model.batch_size == 36);
  CHECK(cfg.model.beam_size == 30);
  CHECK(cfg.model.lambda >= 0.0);
}

TEST_CASE("feature kinds pick their documented defaults") {
  auto mel = load_config(R"({"features": {"kind": "mel"}})").features;
  CHECK(mel.sample_rate == 24000);
  CHECK(mel.n_channels == 80);
  CHECK(mel.window == 0.050);
  CHECK(mel.hop == 0.0125);

  auto mfcc = load_config(R"({"features": {"kind": "mfcc"}})").features;
  CHECK(mfcc.sample_rate == 16000);
  CHECK(mfcc.n_channels == 13);
  CHECK(mfcc.window == 0.025);
  CHECK(mfcc.hop == 0.010);

  auto mixed = load_config(R"({"features": {"kind": "mel", "n_channels": 40}})").features;
  CHECK(mixed.n_channels == 40);
  CHECK(mixed.sample_rate == 24000);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS((void)load_config(R"({"modle": {}})"), ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"model": {"hiden_dim": 4}})"), ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"toy": {"nphones": 5}})"), ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"train": {"lr": 0.1}})"), ConfigError);
}

TEST_CASE("invalid values are rejected with field-level messages") {
  CHECK_THROWS_AS((void)load_config(R"({"model": {"hidden_dim": 0}})"), ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"model": {"lambda": -0.5}})"), ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"model": {"dropout": 1.0}})"), ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"model": {"tap_level": "L6"}})"), ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"features": {"hop": 0.1, "window": 0.05}})"),
                  ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"toy": {"n_phones": 1}})"), ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"toy": {"coverage_fractions": [0.9, 0.2, 0.1]}})"),
                  ConfigError);
  CHECK_THROWS_AS((void)load_config(R"({"toy": {"coverage_fractions": [1.1, 0.0, -0.1]}})"),
                  ConfigError);
  CHECK_THROWS_AS((void)load_config("not json"), ConfigError);

  try {
    (void)load_config(R"({"model": {"hidden_dim": -3}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("hidden_dim") != std::string::npos);
  }
}

TEST_CASE("overrides apply after the file and type-check") {
  ExperimentConfig cfg = load_config(R"({"model": {"hidden_dim": 64}})",
                                     {"model.hidden_dim=128", "model.tap_level=L3",
                                      "model.lambda=0.1", "seed=7", "data_dir=elsewhere"});
  CHECK(cfg.model.hidden_dim == 128);
  CHECK(cfg.model.tap_level == TapLevel::L3);
  CHECK(cfg.model.lambda == 0.1);
  CHECK(cfg.seed == 7);
  CHECK(cfg.data_dir == "elsewhere");

  CHECK_THROWS_AS((void)load_config("{}", {"model.hidden=1"}), ConfigError);
  CHECK_THROWS_AS((void)load_config("{}", {"nonsense"}), ConfigError);
}

TEST_CASE("dump/load round-trips and hashes are stable") {
  ExperimentConfig cfg = load_config("{}", {"model.hidden_dim=96", "toy.n_word_types=500",
                                            "features.kind=mfcc", "train.mtl_steps=10"});
  std::string dumped = dump_config(cfg);
  ExperimentConfig back = load_config(dumped);
  CHECK(dump_config(back) == dumped);
  CHECK(config_hash(back) == config_hash(cfg));

  ExperimentConfig other = load_config("{}", {"model.hidden_dim=98"});
  CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("frame arithmetic helpers") {
  FeatureConfig f = FeatureConfig::mfcc_default();
  CHECK(f.window_samples() == 400);
  CHECK(f.hop_samples() == 160);
  CHECK(f.frame_rate() == doctest::Approx(100.0));
}
