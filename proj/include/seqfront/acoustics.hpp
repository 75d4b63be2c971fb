#pragma once

#include "seqfront/common.hpp"
#include "seqfront/config.hpp"

#include <map>
#include <string>
#include <vector>

namespace seqfront {

struct PronSequence;  // corpus.hpp

struct AcousticSequence {
  MatF frames;        // [F x D], frame-major
  double frame_rate = 0.0;
  FeatureKind kind = FeatureKind::synthetic;

  Eigen::Index n_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
  void validate() const;  // F >= 1, finite values
};

// Frame count under the no-padding convention: first frame starts at sample
// 0, windows never run past the end.
inline Eigen::Index frame_count(Eigen::Index samples, Eigen::Index window, Eigen::Index hop) {
  require(samples >= window, "waveform shorter than one analysis window");
  return 1 + (samples - window) / hop;
}

// HTK mel scale, used for both extractors.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filterbank center frequencies in Hz (n_filters entries), spaced
// uniformly on the mel scale between 0 and sample_rate/2.
std::vector<double> mel_center_frequencies(int n_filters, int sample_rate);

AcousticSequence mel_spectrogram(const std::vector<float>& waveform, const FeatureConfig& cfg);
AcousticSequence mfcc(const std::vector<float>& waveform, const FeatureConfig& cfg);

struct PhoneProto {
  int duration = 1;        // frames
  Eigen::VectorXf proto;   // [D]
};
using ProtoTable = std::map<std::string, PhoneProto>;

// Toy-language oracle: per-phone prototype blocks plus seeded Gaussian noise.
// Non-phone tokens contribute boundary_frames frames of zeros (0 = nothing).
AcousticSequence synth_features(const PronSequence& p, const ProtoTable& proto, double noise_sd,
                                uint64_t seed, double frame_rate, int boundary_frames = 0);

// nearest-prototype decoding of a block-aligned synthetic sequence; oracle
// self-consistency check for synth_features at noise_sd = 0
std::vector<std::string> nearest_prototype_decode(const AcousticSequence& seq,
                                                  const ProtoTable& proto);

// Per-dimension standardization fitted on training features.
struct FeatureNormalizer {
  Eigen::VectorXd mean, sd;  // [D]; sd floored at 1e-8

  void fit(const std::vector<const AcousticSequence*>& train);
  AcousticSequence apply(const AcousticSequence& seq) const;
};

// Feature files: header "F D kind frame_rate", then either F lines of D
// decimal floats (.feat) or F*D packed little-endian f32, frame-major
// (.featb). The loader dispatches on the extension.
void save_features(const std::string& path, const AcousticSequence& seq);
AcousticSequence load_features(const std::string& path);

// RIFF/WAVE PCM16 mono
std::pair<std::vector<float>, int> read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate);

}  // namespace seqfront
