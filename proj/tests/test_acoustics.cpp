#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "seqfront/acoustics.hpp"
#include "seqfront/corpus.hpp"
#include "seqfront/rng.hpp"

#include <cmath>
#include <filesystem>
#include <unistd.h>

using namespace seqfront;

namespace {

std::vector<float> sine(int n, double freq, int rate, double amp, double phase = 0.0) {
  std::vector<float> s(n);
  for (int i = 0; i < n; ++i)
    s[i] = static_cast<float>(amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / rate + phase));
  return s;
}

// Independent derivation of mel filter centers: tabulate the mel curve and
// invert it by bisection instead of using the closed-form inverse.
double invert_mel_by_bisection(double mel, double hz_hi) {
  double lo = 0.0, hi = hz_hi;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (2595.0 * std::log10(1.0 + mid / 700.0) < mel)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("seqfront_ac_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static inline int counter = 0;
};

ProtoTable tiny_protos() {
  ProtoTable t;
  auto mk = [](std::initializer_list<float> v) {
    Eigen::VectorXf x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (float f : v) x(i++) = f;
    return x;
  };
  t["pa"] = PhoneProto{2, mk({1.f, 0.f, 0.f})};
  t["ti"] = PhoneProto{3, mk({0.f, 1.f, 0.f})};
  t["ko"] = PhoneProto{2, mk({0.f, 0.f, 1.f})};
  return t;
}

PronSequence phones(const std::vector<std::string>& names) {
  PronSequence p;
  for (const auto& n : names) p.tokens.push_back(PronToken{TokenKind::phone, n});
  return p;
}

}  // namespace

TEST_CASE("frame count formula") {
  CHECK(frame_count(16000, 400, 160) == 98);  // 1s @ 16kHz, 25ms/10ms
  CHECK(frame_count(400, 400, 160) == 1);
  CHECK(frame_count(24000, 1200, 300) == 77);  // 1s @ 24kHz, 50ms/12.5ms
  CHECK_THROWS_AS((void)frame_count(399, 400, 160), InvalidInputError);
}

TEST_CASE("silence maps every mel frame to the log floor") {
  FeatureConfig cfg = FeatureConfig::mel_default();
  std::vector<float> silence(24000, 0.0f);
  AcousticSequence seq = mel_spectrogram(silence, cfg);
  CHECK(seq.n_frames() == 77);
  CHECK(seq.dim() == 80);
  CHECK(seq.frame_rate == doctest::Approx(80.0));
  const float floor_val = std::log(1e-10f);
  CHECK((seq.frames.array() - floor_val).abs().maxCoeff() < 1e-4f);
}

TEST_CASE("a 440 Hz tone lands on the mel channel nearest 440 Hz") {
  FeatureConfig cfg = FeatureConfig::mel_default();
  AcousticSequence seq = mel_spectrogram(sine(12000, 440.0, 24000, 0.5), cfg);

  const double mel_max = 2595.0 * std::log10(1.0 + 12000.0 / 700.0);
  int nearest = -1;
  double best = 1e18;
  for (int c = 0; c < 80; ++c) {
    double center = invert_mel_by_bisection(mel_max * (c + 1) / 81.0, 12000.0);
    if (std::abs(center - 440.0) < best) {
      best = std::abs(center - 440.0);
      nearest = c;
    }
  }

  int first_arg = -1;
  for (Eigen::Index f = 0; f < seq.n_frames(); ++f) {
    Eigen::Index arg;
    seq.frames.row(f).maxCoeff(&arg);
    if (f == 0) first_arg = static_cast<int>(arg);
    CHECK(arg == first_arg);  // constant across frames
  }
  CHECK(std::abs(first_arg - nearest) <= 1);

  // library centers agree with the bisection oracle
  auto centers = mel_center_frequencies(80, 24000);
  CHECK(centers[nearest] == doctest::Approx(invert_mel_by_bisection(mel_max * (nearest + 1) / 81.0,
                                                                    12000.0))
                                .epsilon(1e-6));
}

TEST_CASE("doubling amplitude shifts log energies by log 4") {
  FeatureConfig cfg = FeatureConfig::mel_default();
  AcousticSequence lo = mel_spectrogram(sine(12000, 440.0, 24000, 0.05), cfg);
  AcousticSequence hi = mel_spectrogram(sine(12000, 440.0, 24000, 0.10), cfg);
  const float floor_margin = std::log(1e-10f) + 1.0f;
  int checked = 0;
  double max_dev = 0.0;
  for (Eigen::Index f = 0; f < lo.n_frames(); ++f)
    for (Eigen::Index c = 0; c < lo.dim(); ++c) {
      if (lo.frames(f, c) < floor_margin) continue;
      max_dev = std::max(max_dev,
                         std::abs(double(hi.frames(f, c)) - double(lo.frames(f, c)) -
                                  std::log(4.0)));
      ++checked;
    }
  CHECK(checked > 100);
  CHECK(max_dev < 1e-3);
}

TEST_CASE("mfcc shape and silence behavior") {
  FeatureConfig cfg = FeatureConfig::mfcc_default();
  std::vector<float> silence(16000, 0.0f);
  AcousticSequence seq = mfcc(silence, cfg);
  CHECK(seq.n_frames() == 98);
  CHECK(seq.dim() == 13);
  for (Eigen::Index f = 1; f < seq.n_frames(); ++f)
    CHECK((seq.frames.row(f) - seq.frames.row(0)).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("sine concentrates cepstral energy at low orders relative to noise") {
  FeatureConfig cfg = FeatureConfig::mfcc_default();
  auto ratio = [&](const AcousticSequence& s) {
    double low = 0.0, high = 0.0;
    for (Eigen::Index f = 0; f < s.n_frames(); ++f)
      for (int c = 1; c < 13; ++c) {
        double v = s.frames(f, c) * s.frames(f, c);
        (c <= 4 ? low : high) += v;
      }
    return low / (high + 1e-12);
  };

  auto g = rng::substream(11, "cepstra");
  double sine_mean = 0.0, noise_mean = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    double freq = 200.0 + rng::uniform01(g) * 3800.0;
    sine_mean += ratio(mfcc(sine(4800, freq, 16000, 0.3, rng::uniform01(g)), cfg));
    std::vector<float> noise(4800);
    for (auto& v : noise) v = static_cast<float>(rng::gauss(g) * 0.1);
    noise_mean += ratio(mfcc(noise, cfg));
  }
  CHECK(sine_mean / trials > noise_mean / trials);
}

TEST_CASE("synth_features concatenates prototype blocks") {
  ProtoTable protos = tiny_protos();
  PronSequence p = phones({"pa", "ti", "ko"});

  AcousticSequence clean = synth_features(p, protos, 0.0, 1, 100.0);
  REQUIRE(clean.n_frames() == 7);  // 2 + 3 + 2
  CHECK(clean.dim() == 3);
  CHECK(clean.frames(0, 0) == 1.0f);
  CHECK(clean.frames(1, 0) == 1.0f);
  CHECK(clean.frames(2, 1) == 1.0f);
  CHECK(clean.frames(4, 1) == 1.0f);
  CHECK(clean.frames(5, 2) == 1.0f);

  AcousticSequence permuted = synth_features(phones({"ti", "pa", "ko"}), protos, 0.0, 1, 100.0);
  CHECK(permuted.frames != clean.frames);

  // stress/boundary tokens add nothing by default
  PronSequence with_marks;
  with_marks.tokens.push_back(PronToken{TokenKind::stress, "1"});
  with_marks.tokens.push_back(PronToken{TokenKind::phone, "pa"});
  with_marks.tokens.push_back(PronToken{TokenKind::syl_boundary, kSylBoundary});
  with_marks.tokens.push_back(PronToken{TokenKind::phone, "ti"});
  CHECK(synth_features(with_marks, protos, 0.0, 1, 100.0).n_frames() == 5);
  CHECK(synth_features(with_marks, protos, 0.0, 1, 100.0, 1).n_frames() == 6);

  CHECK_THROWS_AS((void)synth_features(phones({"zz"}), protos, 0.0, 1, 100.0),
                  InvalidInputError);

  AcousticSequence noisy1 = synth_features(p, protos, 0.1, 7, 100.0);
  AcousticSequence noisy2 = synth_features(p, protos, 0.1, 7, 100.0);
  CHECK(noisy1.frames == noisy2.frames);
  CHECK(noisy1.frames != clean.frames);
}

TEST_CASE("noisy same-phone segments correlate more than different-phone ones") {
  ProtoTable protos = tiny_protos();
  auto g = rng::substream(3, "corr");
  double same_sum = 0.0, diff_sum = 0.0;
  int same_n = 0, diff_n = 0;
  std::vector<std::string> names{"pa", "ti", "ko"};
  for (int s = 0; s < 50; ++s) {
    std::vector<std::string> seq_names;
    for (int i = 0; i < 4; ++i) seq_names.push_back(names[rng::below(g, 3)]);
    AcousticSequence seq = synth_features(phones(seq_names), protos, 0.1, 1000 + s, 100.0);
    // first frame of each block
    std::vector<Eigen::Index> starts;
    Eigen::Index f = 0;
    for (const auto& n : seq_names) {
      starts.push_back(f);
      f += protos[n].duration;
    }
    for (size_t i = 0; i < seq_names.size(); ++i)
      for (size_t j = i + 1; j < seq_names.size(); ++j) {
        Eigen::VectorXf a = seq.frames.row(starts[i]);
        Eigen::VectorXf b = seq.frames.row(starts[j]);
        double corr = a.dot(b) / (a.norm() * b.norm() + 1e-12);
        if (seq_names[i] == seq_names[j]) {
          same_sum += corr;
          ++same_n;
        } else {
          diff_sum += corr;
          ++diff_n;
        }
      }
  }
  REQUIRE(same_n > 0);
  REQUIRE(diff_n > 0);
  CHECK(same_sum / same_n > diff_sum / diff_n);
}

TEST_CASE("nearest-prototype decoding inverts clean synthesis") {
  ProtoTable protos = tiny_protos();
  std::vector<std::string> names{"ko", "pa", "pa", "ti", "ko"};
  AcousticSequence clean = synth_features(phones(names), protos, 0.0, 1, 100.0);
  CHECK(nearest_prototype_decode(clean, protos) == names);
}

TEST_CASE("normalizer standardizes pooled statistics") {
  ProtoTable protos = tiny_protos();
  std::vector<AcousticSequence> seqs;
  for (int s = 0; s < 10; ++s)
    seqs.push_back(synth_features(phones({"pa", "ti", "ko", "pa"}), protos, 0.3, s, 100.0));
  std::vector<const AcousticSequence*> ptrs;
  for (auto& s : seqs) ptrs.push_back(&s);

  FeatureNormalizer norm;
  norm.fit(ptrs);
  double n = 0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  for (auto& s : seqs) {
    AcousticSequence z = norm.apply(s);
    sum += z.frames.colwise().sum().transpose().cast<double>();
    sq += z.frames.array().square().colwise().sum().transpose().matrix().cast<double>();
    n += double(z.frames.rows());
  }
  CHECK((sum / n).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(((sq / n).array() - 1.0).abs().maxCoeff() < 1e-4);
}

TEST_CASE("feature files round-trip in both encodings") {
  TempDir tmp;
  ProtoTable protos = tiny_protos();
  AcousticSequence seq = synth_features(phones({"pa", "ti"}), protos, 0.25, 9, 100.0);

  save_features(tmp.file("x.feat"), seq);
  AcousticSequence text_back = load_features(tmp.file("x.feat"));
  CHECK(text_back.frames == seq.frames);  // 9 significant digits round-trip f32
  CHECK(text_back.kind == FeatureKind::synthetic);
  CHECK(text_back.frame_rate == seq.frame_rate);

  save_features(tmp.file("x.featb"), seq);
  AcousticSequence bin_back = load_features(tmp.file("x.featb"));
  CHECK(bin_back.frames == seq.frames);
  CHECK(bin_back.frame_rate == seq.frame_rate);

  CHECK_THROWS_AS((void)load_features(tmp.file("missing.feat")), InvalidInputError);
}

TEST_CASE("wav files round-trip PCM16 mono") {
  TempDir tmp;
  std::vector<float> wave = sine(8000, 440.0, 16000, 0.7);
  write_wav(tmp.file("a.wav"), wave, 16000);
  auto [back, rate] = read_wav(tmp.file("a.wav"));
  CHECK(rate == 16000);
  REQUIRE(back.size() == wave.size());
  float max_err = 0.0f;
  for (size_t i = 0; i < wave.size(); ++i) max_err = std::max(max_err, std::abs(back[i] - wave[i]));
  CHECK(max_err < 1.0f / 32000.0f);
}
