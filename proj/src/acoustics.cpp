#include "seqfront/acoustics.hpp"

#include "seqfront/corpus.hpp"
#include "seqfront/rng.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace seqfront {

namespace {
constexpr double kPowerFloor = 1e-10;  // clamp before log
constexpr double kPi = 3.14159265358979323846;
}

void AcousticSequence::validate() const {
  require(frames.rows() >= 1, "acoustic sequence must have at least one frame");
  require(frames.cols() >= 1, "acoustic sequence must have at least one dimension");
  require(frames.allFinite(), "acoustic sequence contains non-finite values");
  require(frame_rate > 0.0, "acoustic sequence frame rate must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(int n_filters, int sample_rate) {
  require(n_filters >= 1, "need at least one mel filter");
  // n_filters + 2 edges from 0 Hz to Nyquist; centers are the interior points
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(n_filters);
  for (int i = 0; i < n_filters; ++i)
    centers[i] = mel_to_hz(mel_max * (i + 1) / (n_filters + 1));
  return centers;
}

namespace {

// Triangular mel filterbank [n_filters x n_bins] over rfft bin frequencies.
MatD mel_filterbank(int n_filters, int n_fft, int sample_rate) {
  const int n_bins = n_fft / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_filters + 2);
  for (int i = 0; i < n_filters + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (n_filters + 1));

  MatD fb = MatD::Zero(n_filters, n_bins);
  for (int f = 0; f < n_filters; ++f) {
    const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
    // Unit-area triangles: a flat power spectrum then yields a flat mel
    // response instead of one growing with filter bandwidth.
    const double gain = 2.0 / (hi - lo);
    for (int b = 0; b < n_bins; ++b) {
      const double hz = double(b) * sample_rate / n_fft;
      if (hz <= lo || hz >= hi) continue;
      fb(f, b) = gain * (hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid));
    }
  }
  return fb;
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p *= 2;
  return p;
}

// log-mel power frames [F x n_filters]
MatD log_mel_frames(const std::vector<float>& waveform, const FeatureConfig& cfg) {
  const Eigen::Index win = cfg.window_samples();
  const Eigen::Index hop = cfg.hop_samples();
  const Eigen::Index F = frame_count(static_cast<Eigen::Index>(waveform.size()), win, hop);
  const int n_fft = next_pow2(static_cast<int>(win));
  const int n_bins = n_fft / 2 + 1;

  // Hann window
  Eigen::VectorXd hann = Eigen::VectorXd::Ones(win);
  for (Eigen::Index i = 0; win > 1 && i < win; ++i)
    hann(i) = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (win - 1));

  MatD fb = mel_filterbank(cfg.n_channels, n_fft, cfg.sample_rate);

  Eigen::FFT<double> fft;
  std::vector<double> buf(n_fft, 0.0);
  std::vector<std::complex<double>> spec(n_fft);

  MatD out(F, cfg.n_channels);
  Eigen::VectorXd power(n_bins);
  for (Eigen::Index f = 0; f < F; ++f) {
    const Eigen::Index off = f * hop;
    for (Eigen::Index i = 0; i < win; ++i) buf[i] = waveform[off + i] * hann(i);
    std::fill(buf.begin() + win, buf.end(), 0.0);
    fft.fwd(spec, buf);
    for (int b = 0; b < n_bins; ++b) power(b) = std::norm(spec[b]);
    Eigen::VectorXd mel = fb * power;
    for (int c = 0; c < cfg.n_channels; ++c)
      out(f, c) = std::log(std::max(mel(c), kPowerFloor));
  }
  return out;
}

}  // namespace

AcousticSequence mel_spectrogram(const std::vector<float>& waveform, const FeatureConfig& cfg) {
  cfg.validate();
  MatD lm = log_mel_frames(waveform, cfg);
  AcousticSequence seq;
  seq.frames = lm.cast<float>();
  seq.frame_rate = cfg.frame_rate();
  seq.kind = FeatureKind::mel;
  seq.validate();
  return seq;
}

AcousticSequence mfcc(const std::vector<float>& waveform, const FeatureConfig& cfg) {
  cfg.validate();
  // 26 mel filters feeding an orthonormal DCT-II; keep the first n_channels
  const int n_mel = std::max(26, cfg.n_channels);
  FeatureConfig inner = cfg;
  inner.n_channels = n_mel;
  MatD lm = log_mel_frames(waveform, inner);

  MatD dct(cfg.n_channels, n_mel);
  for (int k = 0; k < cfg.n_channels; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n_mel) : std::sqrt(2.0 / n_mel);
    for (int n = 0; n < n_mel; ++n)
      dct(k, n) = scale * std::cos(kPi * k * (2.0 * n + 1.0) / (2.0 * n_mel));
  }

  AcousticSequence seq;
  seq.frames = (lm * dct.transpose()).cast<float>();
  seq.frame_rate = cfg.frame_rate();
  seq.kind = FeatureKind::mfcc;
  seq.validate();
  return seq;
}

AcousticSequence synth_features(const PronSequence& p, const ProtoTable& proto, double noise_sd,
                                uint64_t seed, double frame_rate, int boundary_frames) {
  require(noise_sd >= 0.0, "synth_features: noise_sd must be >= 0");
  require(!proto.empty(), "synth_features: empty prototype table");
  const Eigen::Index D = proto.begin()->second.proto.size();

  std::vector<const PhoneProto*> blocks;
  Eigen::Index F = 0;
  for (const PronToken& tok : p.tokens) {
    if (tok.kind == TokenKind::phone) {
      auto it = proto.find(tok.surface);
      require(it != proto.end(), "synth_features: no prototype for phone '" + tok.surface + "'");
      require(it->second.proto.size() == D, "synth_features: inconsistent prototype dims");
      blocks.push_back(&it->second);
      F += it->second.duration;
    } else if (boundary_frames > 0 && tok.kind != TokenKind::stress) {
      blocks.push_back(nullptr);  // short zero segment for boundary tokens
      F += boundary_frames;
    }
  }
  require(F >= 1, "synth_features: sequence yields no frames");

  AcousticSequence seq;
  seq.frames = MatF::Zero(F, D);
  Eigen::Index f = 0;
  for (const PhoneProto* b : blocks) {
    const int dur = b ? b->duration : boundary_frames;
    for (int i = 0; i < dur; ++i, ++f) {
      if (b) seq.frames.row(f) = b->proto.transpose();
    }
  }

  if (noise_sd > 0.0) {
    auto g = rng::substream(seed, "synth.noise");
    for (Eigen::Index r = 0; r < seq.frames.rows(); ++r)
      for (Eigen::Index c = 0; c < seq.frames.cols(); ++c)
        seq.frames(r, c) += static_cast<float>(rng::gauss(g) * noise_sd);
  }

  seq.frame_rate = frame_rate;
  seq.kind = FeatureKind::synthetic;
  seq.validate();
  return seq;
}

std::vector<std::string> nearest_prototype_decode(const AcousticSequence& seq,
                                                  const ProtoTable& proto) {
  require(!proto.empty(), "nearest_prototype_decode: empty prototype table");
  std::vector<std::string> out;
  Eigen::Index f = 0;
  while (f < seq.frames.rows()) {
    // pick the prototype nearest to this frame, consume its duration
    const std::string* best = nullptr;
    int best_dur = 1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (const auto& [name, pp] : proto) {
      double d2 = (seq.frames.row(f).transpose() - pp.proto).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = &name;
        best_dur = pp.duration;
      }
    }
    out.push_back(*best);
    f += best_dur;
  }
  return out;
}

void FeatureNormalizer::fit(const std::vector<const AcousticSequence*>& train) {
  require(!train.empty(), "normalizer: empty training set");
  const Eigen::Index D = train[0]->frames.cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(D), sq = Eigen::VectorXd::Zero(D);
  double n = 0;
  for (const AcousticSequence* s : train) {
    require(s->frames.cols() == D, "normalizer: inconsistent feature dims");
    sum += s->frames.colwise().sum().transpose().cast<double>();
    sq += s->frames.array().square().colwise().sum().transpose().matrix().cast<double>();
    n += static_cast<double>(s->frames.rows());
  }
  mean = sum / n;
  sd = ((sq / n - mean.array().square().matrix()).array().max(0.0)).sqrt().matrix();
  sd = sd.array().max(1e-8).matrix();
}

AcousticSequence FeatureNormalizer::apply(const AcousticSequence& seq) const {
  require(seq.frames.cols() == mean.size(), "normalizer: dimension mismatch");
  AcousticSequence out = seq;
  for (Eigen::Index c = 0; c < out.frames.cols(); ++c)
    out.frames.col(c) =
        ((out.frames.col(c).cast<double>().array() - mean(c)) / sd(c)).cast<float>();
  return out;
}

namespace {
bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}
}  // namespace

void save_features(const std::string& path, const AcousticSequence& seq) {
  seq.validate();
  const bool binary = has_suffix(path, ".featb");
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  require(bool(out), "cannot write feature file '" + path + "'");
  out << seq.frames.rows() << ' ' << seq.frames.cols() << ' ' << to_string(seq.kind) << ' '
      << seq.frame_rate << '\n';
  if (binary) {
    static_assert(sizeof(float) == 4);
    for (Eigen::Index r = 0; r < seq.frames.rows(); ++r)
      for (Eigen::Index c = 0; c < seq.frames.cols(); ++c) {
        float v = seq.frames(r, c);
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
  } else {
    out.precision(9);
    for (Eigen::Index r = 0; r < seq.frames.rows(); ++r) {
      for (Eigen::Index c = 0; c < seq.frames.cols(); ++c) {
        if (c) out << ' ';
        out << seq.frames(r, c);
      }
      out << '\n';
    }
  }
  require(bool(out), "failed writing feature file '" + path + "'");
}

AcousticSequence load_features(const std::string& path) {
  const bool binary = has_suffix(path, ".featb");
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  require(bool(in), "cannot open feature file '" + path + "'");

  Eigen::Index F, D;
  std::string kind;
  double rate;
  std::string header;
  require(bool(std::getline(in, header)), "feature file '" + path + "' missing header");
  {
    std::istringstream hs(header);
    require(bool(hs >> F >> D >> kind >> rate), "feature file '" + path + "' has a bad header");
  }
  AcousticSequence seq;
  seq.kind = feature_kind_from_string(kind);
  seq.frame_rate = rate;
  seq.frames.resize(F, D);
  if (binary) {
    for (Eigen::Index r = 0; r < F; ++r)
      for (Eigen::Index c = 0; c < D; ++c) {
        float v;
        in.read(reinterpret_cast<char*>(&v), 4);
        require(bool(in), "feature file '" + path + "' truncated");
        seq.frames(r, c) = v;
      }
  } else {
    for (Eigen::Index r = 0; r < F; ++r)
      for (Eigen::Index c = 0; c < D; ++c) {
        double v;
        require(bool(in >> v), "feature file '" + path + "' truncated");
        seq.frames(r, c) = static_cast<float>(v);
      }
  }
  seq.validate();
  return seq;
}

namespace {

struct WavHeader {
  uint32_t sample_rate = 0;
  uint16_t channels = 0, bits = 0;
  uint32_t data_size = 0;
  std::streamoff data_off = 0;
};

uint32_t rd_u32(const unsigned char* p) {
  return p[0] | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}
uint16_t rd_u16(const unsigned char* p) { return p[0] | (uint16_t(p[1]) << 8); }

}  // namespace

std::pair<std::vector<float>, int> read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open wav file '" + path + "'");
  unsigned char hdr[12];
  in.read(reinterpret_cast<char*>(hdr), 12);
  require(bool(in) && std::memcmp(hdr, "RIFF", 4) == 0 && std::memcmp(hdr + 8, "WAVE", 4) == 0,
          "'" + path + "' is not a RIFF/WAVE file");

  WavHeader w;
  while (true) {
    unsigned char chunk[8];
    in.read(reinterpret_cast<char*>(chunk), 8);
    if (!in) break;
    uint32_t size = rd_u32(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      std::vector<unsigned char> fmt(size);
      in.read(reinterpret_cast<char*>(fmt.data()), size);
      require(bool(in) && size >= 16, "wav '" + path + "' has a short fmt chunk");
      require(rd_u16(fmt.data()) == 1, "wav '" + path + "' is not PCM");
      w.channels = rd_u16(fmt.data() + 2);
      w.sample_rate = rd_u32(fmt.data() + 4);
      w.bits = rd_u16(fmt.data() + 14);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      w.data_size = size;
      w.data_off = in.tellg();
      in.seekg(size + (size & 1), std::ios::cur);
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  require(w.sample_rate > 0 && w.data_off > 0, "wav '" + path + "' lacks fmt or data chunk");
  require(w.channels == 1, "wav '" + path + "' must be mono");
  require(w.bits == 16, "wav '" + path + "' must be 16-bit PCM");

  in.clear();
  in.seekg(w.data_off);
  const size_t n = w.data_size / 2;
  std::vector<float> samples(n);
  std::vector<unsigned char> raw(w.data_size);
  in.read(reinterpret_cast<char*>(raw.data()), w.data_size);
  require(bool(in), "wav '" + path + "' data truncated");
  for (size_t i = 0; i < n; ++i) {
    int16_t v = static_cast<int16_t>(raw[2 * i] | (uint16_t(raw[2 * i + 1]) << 8));
    samples[i] = static_cast<float>(v) / 32767.0f;
  }
  return {std::move(samples), static_cast<int>(w.sample_rate)};
}

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
  require(sample_rate > 0, "write_wav: bad sample rate");
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "cannot write wav file '" + path + "'");
  const uint32_t data_size = static_cast<uint32_t>(samples.size() * 2);
  auto wr_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto wr_u16 = [&](uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
  };
  out.write("RIFF", 4);
  wr_u32(36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  wr_u32(16);
  wr_u16(1);  // PCM
  wr_u16(1);  // mono
  wr_u32(static_cast<uint32_t>(sample_rate));
  wr_u32(static_cast<uint32_t>(sample_rate) * 2);  // byte rate
  wr_u16(2);                                       // block align
  wr_u16(16);                                      // bits
  out.write("data", 4);
  wr_u32(data_size);
  for (float s : samples) {
    float clamped = std::min(1.0f, std::max(-1.0f, s));
    int16_t v = static_cast<int16_t>(std::lrint(clamped * 32767.0f));
    wr_u16(static_cast<uint16_t>(v));
  }
  require(bool(out), "failed writing wav file '" + path + "'");
}

}  // namespace seqfront
